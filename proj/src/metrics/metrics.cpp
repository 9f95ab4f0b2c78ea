#include "loadloop/metrics/metrics.hpp"

#include <cmath>
#include <limits>

#include "loadloop/core/error.hpp"

namespace loadloop::metrics {

namespace {

void require_same_nonempty(std::size_t a, std::size_t b) {
    if (a != b) throw ValidationError("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
    if (a == 0) throw ValidationError("empty input");
}

}  // namespace

double point_loss(PointLoss base, double pred, double actual) {
    const double d = pred - actual;
    return base == PointLoss::absolute ? std::abs(d) : d * d;
}

double mae(std::span<const double> pred, std::span<const double> actual) {
    require_same_nonempty(pred.size(), actual.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - actual[i]);
    return sum / static_cast<double>(pred.size());
}

double mape(std::span<const double> pred, std::span<const double> actual) {
    require_same_nonempty(pred.size(), actual.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (actual[i] == 0.0) throw ValidationError("MAPE undefined: actual value at index " + std::to_string(i) + " is 0");
        sum += std::abs(pred[i] - actual[i]) / std::abs(actual[i]);
    }
    return sum / static_cast<double>(pred.size());
}

double weighted_loss(std::span<const double> pred, std::span<const double> actual,
                     std::span<const double> weights, PointLoss base) {
    require_same_nonempty(pred.size(), actual.size());
    if (weights.size() != pred.size())
        throw ValidationError("weight vector length " + std::to_string(weights.size()) + " does not match " +
                              std::to_string(pred.size()));
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(weights[i] > 0.0)) throw ValidationError("non-positive weight at index " + std::to_string(i), "weights");
        num += weights[i] * point_loss(base, pred[i], actual[i]);
        den += weights[i];
    }
    return num / den;
}

std::vector<double> condition_weights(std::span<const double> context, const ConditionRule& rule) {
    std::vector<double> w;
    w.reserve(context.size());
    for (std::size_t i = 0; i < context.size(); ++i) {
        if (std::isnan(context[i]))
            throw ValidationError("missing context value at index " + std::to_string(i), "context");
        w.push_back(context[i] > rule.threshold ? rule.weight_if_true : rule.weight_if_false);
    }
    return w;
}

double asymmetric_loss(std::span<const double> pred, std::span<const double> actual, double alpha,
                       double beta, PointLoss base) {
    require_same_nonempty(pred.size(), actual.size());
    if (!(alpha > 0.0) || !(beta > 0.0)) throw ValidationError("alpha and beta must be positive");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double l = point_loss(base, pred[i], actual[i]);
        sum += pred[i] > actual[i] ? alpha * l : beta * l;
    }
    return sum / static_cast<double>(pred.size());
}

void MetricSpec::validate(int horizon) const {
    switch (kind) {
        case MetricKind::plain: break;
        case MetricKind::time_weighted:
            if (static_cast<int>(weights.size()) != horizon)
                throw ValidationError("time-weighted metric needs " + std::to_string(horizon) + " weights, got " +
                                          std::to_string(weights.size()),
                                      "weights");
            for (double w : weights)
                if (!(w > 0.0)) throw ValidationError("weights must be positive", "weights");
            break;
        case MetricKind::condition_weighted:
            if (!condition) throw ValidationError("condition-weighted metric needs a condition rule", "condition");
            if (!(condition->weight_if_true > 0.0) || !(condition->weight_if_false > 0.0))
                throw ValidationError("condition weights must be positive", "condition");
            break;
        case MetricKind::asymmetric:
            if (!(alpha > 0.0)) throw ValidationError("alpha must be positive", "alpha");
            if (!(beta > 0.0)) throw ValidationError("beta must be positive", "beta");
            break;
    }
}

double evaluate(const MetricSpec& spec, std::span<const double> pred, std::span<const double> actual,
                std::optional<std::span<const double>> context) {
    if (spec.needs_context() != context.has_value())
        throw ValidationError(spec.needs_context() ? "condition-weighted metric requires a context series"
                                                   : "context series given for a metric that does not use it");
    switch (spec.kind) {
        case MetricKind::plain: {
            require_same_nonempty(pred.size(), actual.size());
            double sum = 0.0;
            for (std::size_t i = 0; i < pred.size(); ++i) sum += point_loss(spec.base, pred[i], actual[i]);
            return sum / static_cast<double>(pred.size());
        }
        case MetricKind::time_weighted: return weighted_loss(pred, actual, spec.weights, spec.base);
        case MetricKind::condition_weighted: {
            if (!spec.condition) throw ValidationError("condition-weighted metric needs a condition rule");
            if (context->size() != pred.size()) throw ValidationError("context series is not aligned with the forecast");
            const auto w = condition_weights(*context, *spec.condition);
            return weighted_loss(pred, actual, w, spec.base);
        }
        case MetricKind::asymmetric: return asymmetric_loss(pred, actual, spec.alpha, spec.beta, spec.base);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

double evaluate_windows(const MetricSpec& spec, const std::vector<std::vector<double>>& pred,
                        const std::vector<std::vector<double>>& actual,
                        const std::vector<std::vector<double>>* context) {
    require_same_nonempty(pred.size(), actual.size());
    if (context && context->size() != pred.size()) throw ValidationError("context rows are not aligned");
    double sum = 0.0;
    for (std::size_t r = 0; r < pred.size(); ++r) {
        std::optional<std::span<const double>> ctx;
        if (context) ctx = std::span<const double>((*context)[r]);
        sum += evaluate(spec, pred[r], actual[r], ctx);
    }
    return sum / static_cast<double>(pred.size());
}

std::string to_string(PointLoss base) { return base == PointLoss::absolute ? "absolute" : "squared"; }

std::string to_string(MetricKind kind) {
    switch (kind) {
        case MetricKind::plain: return "plain";
        case MetricKind::time_weighted: return "time_weighted";
        case MetricKind::condition_weighted: return "condition_weighted";
        case MetricKind::asymmetric: return "asymmetric";
    }
    return "plain";
}

Json to_json(const MetricSpec& spec) {
    Json j{{"base", to_string(spec.base)}, {"kind", to_string(spec.kind)}};
    if (spec.kind == MetricKind::time_weighted) j["weights"] = spec.weights;
    if (spec.kind == MetricKind::condition_weighted && spec.condition) {
        j["condition"] = Json{{"column_role", spec.condition->column_role},
                              {"threshold", spec.condition->threshold},
                              {"weight_if_true", spec.condition->weight_if_true},
                              {"weight_if_false", spec.condition->weight_if_false}};
    }
    if (spec.kind == MetricKind::asymmetric) {
        j["alpha"] = spec.alpha;
        j["beta"] = spec.beta;
    }
    return j;
}

MetricSpec metric_spec_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("metric must be an object", "metric");
    MetricSpec s;
    const std::string base = j.value("base", "absolute");
    if (base == "absolute") s.base = PointLoss::absolute;
    else if (base == "squared") s.base = PointLoss::squared;
    else throw ValidationError("unknown base loss '" + base + "'", "base");

    const std::string kind = j.value("kind", "plain");
    if (kind == "plain") s.kind = MetricKind::plain;
    else if (kind == "time_weighted") s.kind = MetricKind::time_weighted;
    else if (kind == "condition_weighted") s.kind = MetricKind::condition_weighted;
    else if (kind == "asymmetric") s.kind = MetricKind::asymmetric;
    else throw ValidationError("unknown metric kind '" + kind + "'", "kind");

    try {
        if (j.contains("weights")) s.weights = j["weights"].get<std::vector<double>>();
        if (j.contains("condition")) {
            const Json& c = j["condition"];
            ConditionRule r;
            r.column_role = c.value("column_role", "temperature");
            r.threshold = c.at("threshold").get<double>();
            r.weight_if_true = c.at("weight_if_true").get<double>();
            r.weight_if_false = c.at("weight_if_false").get<double>();
            s.condition = r;
        }
        s.alpha = j.value("alpha", 1.0);
        s.beta = j.value("beta", 1.0);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed metric: ") + e.what(), "metric");
    }
    return s;
}

}  // namespace loadloop::metrics
