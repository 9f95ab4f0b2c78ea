#include "loadloop/models/evaluate.hpp"

#include <cmath>

namespace loadloop::models {

namespace {

dataset::ColumnRole role_named(const std::string& name) {
    const auto role = dataset::parse_column_role(name);
    if (!role) throw ValidationError("unknown column role '" + name + "'", "metric.condition.column_role");
    return *role;
}

double score(const FittedConfiguration& fitted, const ForecastProblem& problem, const metrics::MetricSpec& metric,
             const features::DesignMatrix& rows) {
    const auto pred = predict(fitted.model, rows);
    const auto actual = targets_of(rows);
    if (metric.needs_context()) {
        const auto ctx = metric_context(*problem.data, metric, rows, problem.task.interval);
        return metrics::evaluate_windows(metric, pred, actual, &ctx);
    }
    return metrics::evaluate_windows(metric, pred, actual);
}

}  // namespace

std::vector<std::vector<double>> targets_of(const features::DesignMatrix& rows) {
    std::vector<std::vector<double>> out(rows.rows());
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        const auto t = rows.target(r);
        out[r].assign(t.begin(), t.end());
    }
    return out;
}

std::vector<std::vector<double>> metric_context(const dataset::CleanDataset& data, const metrics::MetricSpec& metric,
                                                const features::DesignMatrix& rows, int interval) {
    if (!metric.condition) throw ValidationError("condition-weighted metric without a rule", "metric.condition");
    const auto* series = data.find_role(role_named(metric.condition->column_role));
    if (!series)
        throw ValidationError("dataset has no column with role '" + metric.condition->column_role + "'",
                              "metric.condition.column_role");
    std::vector<std::vector<double>> out(rows.rows());
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        const std::size_t first = rows.origins[r] + static_cast<std::size_t>(interval) + 1;
        for (int i = 0; i < rows.horizon; ++i) out[r].push_back((*series)[first + static_cast<std::size_t>(i)]);
    }
    return out;
}

FittedConfiguration fit_configuration(const Configuration& config, const ForecastProblem& problem, std::uint64_t seed) {
    const auto type = parse_model_type(config.model_type);
    if (!type) throw ValidationError("unknown model type '" + config.model_type + "'", "model_type");
    if (!is_implemented(*type)) throw UnimplementedModelType(*type);
    const HyperParams hyper = hyperparams_from_params(*type, config.params);
    const auto fcfg = features::feature_config_from_params(config.params, uses_sequence_input(*type));

    FittedConfiguration out;
    out.plan = features::fit_feature_plan(fcfg, *problem.data, problem.task, problem.splits.train);
    const auto train_rows = features::assemble_design_matrix(out.plan, *problem.data, problem.task, problem.splits.train);
    const auto val_rows = features::assemble_design_matrix(out.plan, *problem.data, problem.task, problem.splits.val);
    auto result = train(*type, hyper, train_rows, val_rows, seed, problem.options);
    out.model = std::move(result.model);
    out.report = std::move(result.report);
    return out;
}

EvaluationOutcome evaluate_config(const Configuration& config, const ForecastProblem& problem,
                                  const metrics::MetricSpec& metric, std::uint64_t seed) {
    EvaluationOutcome out;
    try {
        const FittedConfiguration fitted = fit_configuration(config, problem, seed);
        out.report = fitted.report;
        const double loss = score_on_range(fitted, problem, metric, problem.splits.val);
        if (!std::isfinite(loss)) throw TrainingDiverged("validation loss is not finite");
        out.loss = loss;
    } catch (const TrainingDiverged& e) {
        out.failed = true;
        out.error = e.what();
        out.loss = std::numeric_limits<double>::infinity();
    }
    return out;
}

double score_on_range(const FittedConfiguration& fitted, const ForecastProblem& problem,
                      const metrics::MetricSpec& metric, const dataset::IndexRange& range) {
    const auto rows = features::assemble_design_matrix(fitted.plan, *problem.data, problem.task, range);
    return score(fitted, problem, metric, rows);
}

}  // namespace loadloop::models
