#include <chrono>
#include <cmath>

#include "loadloop/models/model.hpp"

namespace loadloop::models {

namespace {

void check_names(const std::vector<std::string>& expected, const std::vector<std::string>& got) {
    if (expected == got) return;
    std::string msg = "feature set differs from training";
    if (expected.size() != got.size()) {
        msg += " (" + std::to_string(got.size()) + " columns, expected " + std::to_string(expected.size()) + ")";
    } else {
        for (std::size_t i = 0; i < got.size(); ++i)
            if (got[i] != expected[i]) {
                msg += " (column " + std::to_string(i) + " is '" + got[i] + "', expected '" + expected[i] + "')";
                break;
            }
    }
    throw FeatureMismatch(msg);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

Json to_json(const TrainReport& report) {
    Json j{{"train_curve", report.train_curve}, {"val_curve", report.val_curve}, {"wall_seconds", report.wall_seconds}};
    j["early_stop_round"] = report.early_stop_round ? Json(*report.early_stop_round) : Json(nullptr);
    return j;
}

TrainResult train(ModelType type, const HyperParams& hyper, const features::DesignMatrix& train_rows,
                  const features::DesignMatrix& val_rows, std::uint64_t seed, const TrainOptions& options) {
    if (!is_implemented(type)) throw UnimplementedModelType(type);
    if (val_rows.rows() > 0) check_names(train_rows.feature_names, val_rows.feature_names);
    if (train_rows.rows() == 0) throw ValidationError("training matrix is empty");
    const auto start = std::chrono::steady_clock::now();

    const Matrix x = feature_matrix(train_rows);
    const Matrix y = target_matrix(train_rows);
    const Matrix xv = val_rows.rows() > 0 ? feature_matrix(val_rows) : Matrix(0, x.cols());
    const Matrix yv = val_rows.rows() > 0 ? target_matrix(val_rows) : Matrix(0, y.cols());
    if (!all_finite(x) || !all_finite(y)) throw TrainingDiverged("training data contains non-finite values");

    TrainResult out;
    TrainedModel& m = out.model;
    m.type = type;
    m.hyper = hyper;
    m.feature_names = train_rows.feature_names;
    m.seed = seed;
    m.horizon = train_rows.horizon;

    if (type == ModelType::gbt) {
        const auto* p = std::get_if<GbtParams>(&hyper);
        if (!p) throw ValidationError("gbt needs gbt hyperparameters");
        m.x_scaler = Standardizer::identity(static_cast<std::size_t>(x.cols()));
        m.y_scaler = Standardizer::identity(static_cast<std::size_t>(y.cols()));
        m.fitted = fit_gbt(x, y, xv, yv, *p, out.report);
    } else {
        m.x_scaler = Standardizer::fit(x, train_rows.scaled);
        m.y_scaler = Standardizer::fit(y, {});
        const Matrix xs = m.x_scaler.apply(x), ys = m.y_scaler.apply(y);
        const Matrix xvs = m.x_scaler.apply(xv), yvs = m.y_scaler.apply(yv);
        if (type == ModelType::linear) {
            const auto* p = std::get_if<LinearParams>(&hyper);
            if (!p) throw ValidationError("linear needs linear hyperparameters");
            LinearFit fit = fit_linear(xs, ys, p->ridge ? p->alpha : 0.0);
            if (!fit.coef.allFinite() || !fit.intercept.allFinite()) throw TrainingDiverged("linear solve produced non-finite coefficients");
            const double tl = (predict_linear(fit, xs) - ys).squaredNorm() / static_cast<double>(ys.size());
            const double vl = xvs.rows() > 0 ? (predict_linear(fit, xvs) - yvs).squaredNorm() / static_cast<double>(yvs.size()) : tl;
            out.report.train_curve.push_back(tl);
            out.report.val_curve.push_back(vl);
            m.fitted = std::move(fit);
        } else {
            const auto* p = std::get_if<MlpParams>(&hyper);
            if (!p) throw ValidationError("mlp needs mlp hyperparameters");
            m.fitted = fit_mlp(xs, ys, xvs, yvs, *p, options, seed, out.report);
        }
    }
    out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

Matrix predict_matrix(const TrainedModel& model, const Matrix& raw_rows) {
    if (static_cast<std::size_t>(raw_rows.cols()) != model.feature_names.size())
        throw FeatureMismatch("expected " + std::to_string(model.feature_names.size()) + " feature columns, got " +
                              std::to_string(raw_rows.cols()));
    const Matrix xs = model.x_scaler.apply(raw_rows);
    Matrix ys = std::visit(
        [&](const auto& fit) -> Matrix {
            using T = std::decay_t<decltype(fit)>;
            if constexpr (std::is_same_v<T, LinearFit>) return predict_linear(fit, xs);
            else if constexpr (std::is_same_v<T, MlpNetwork>) return mlp_forward(fit, xs);
            else return predict_gbt(fit, xs);
        },
        model.fitted);
    Matrix out = model.y_scaler.invert(ys);
    if (!out.allFinite()) throw TrainingDiverged("prediction produced non-finite values");
    return out;
}

std::vector<std::vector<double>> predict(const TrainedModel& model, const features::DesignMatrix& rows) {
    check_names(model.feature_names, rows.feature_names);
    const Matrix out = predict_matrix(model, feature_matrix(rows));
    std::vector<std::vector<double>> result(static_cast<std::size_t>(out.rows()));
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        auto& v = result[static_cast<std::size_t>(r)];
        v.resize(static_cast<std::size_t>(out.cols()));
        for (Eigen::Index c = 0; c < out.cols(); ++c) v[static_cast<std::size_t>(c)] = out(r, c);
    }
    return result;
}

}  // namespace loadloop::models
