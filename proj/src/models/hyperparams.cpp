#include "loadloop/models/hyperparams.hpp"

#include <cmath>

namespace loadloop::models {

namespace {

double in_range(const ParamMap& params, const std::string& key, double lo, double hi) {
    const double v = param_number(params, key);
    if (!(v >= lo && v <= hi))
        throw ValidationError(key + "=" + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                                  std::to_string(hi) + "]",
                              key);
    return v;
}

int on_grid(const ParamMap& params, const std::string& key, int lo, int hi, int step) {
    const double v = in_range(params, key, lo, hi);
    const auto i = static_cast<int>(std::lround(v));
    if (std::abs(v - i) > 1e-9 || (i - lo) % step != 0)
        throw ValidationError(key + " must be on the grid " + std::to_string(lo) + ".." + std::to_string(hi) +
                                  " step " + std::to_string(step),
                              key);
    return i;
}

}  // namespace

HyperParams hyperparams_from_params(ModelType type, const ParamMap& params) {
    switch (type) {
        case ModelType::linear: {
            LinearParams p;
            const std::string& reg = param_text(params, "h.regularization");
            if (reg != "none" && reg != "ridge") throw ValidationError("regularization must be none or ridge", "h.regularization");
            p.ridge = reg == "ridge";
            if (p.ridge) p.alpha = in_range(params, "h.alpha", 1e-4, 1.0);
            return p;
        }
        case ModelType::mlp: {
            MlpParams p;
            p.hidden_layers = on_grid(params, "h.hidden_layers", 2, 5, 1);
            p.hidden_size = on_grid(params, "h.hidden_size", 16, 512, 1);
            p.learning_rate = in_range(params, "h.learning_rate", 1e-4, 0.1);
            p.dropout = in_range(params, "h.dropout", 0.0, 0.5);
            return p;
        }
        case ModelType::gbt: {
            GbtParams p;
            p.n_estimators = on_grid(params, "h.n_estimators", 10, 300, 10);
            p.max_depth = on_grid(params, "h.max_depth", 4, 16, 2);
            p.learning_rate = in_range(params, "h.learning_rate", 1e-4, 0.1);
            return p;
        }
        default: throw UnimplementedModelType(type);
    }
}

Json to_json(const HyperParams& params) {
    return std::visit(
        [](const auto& p) -> Json {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LinearParams>) {
                return Json{{"regularization", p.ridge ? "ridge" : "none"}, {"alpha", p.alpha}};
            } else if constexpr (std::is_same_v<T, MlpParams>) {
                return Json{{"hidden_layers", p.hidden_layers},
                            {"hidden_size", p.hidden_size},
                            {"learning_rate", p.learning_rate},
                            {"dropout", p.dropout}};
            } else {
                return Json{{"n_estimators", p.n_estimators}, {"max_depth", p.max_depth}, {"learning_rate", p.learning_rate}};
            }
        },
        params);
}

HyperParams hyperparams_from_json(ModelType type, const Json& j) {
    switch (type) {
        case ModelType::linear: return LinearParams{j.at("regularization") == "ridge", j.at("alpha").get<double>()};
        case ModelType::mlp:
            return MlpParams{j.at("hidden_layers").get<int>(), j.at("hidden_size").get<int>(),
                             j.at("learning_rate").get<double>(), j.at("dropout").get<double>()};
        case ModelType::gbt:
            return GbtParams{j.at("n_estimators").get<int>(), j.at("max_depth").get<int>(), j.at("learning_rate").get<double>()};
        default: throw UnimplementedModelType(type);
    }
}

}  // namespace loadloop::models
