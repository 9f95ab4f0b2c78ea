#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loadloop/core/json.hpp"

namespace loadloop::metrics {

enum class PointLoss { absolute, squared };

enum class MetricKind { plain, time_weighted, condition_weighted, asymmetric };

// Weight is `weight_if_true` where the context series exceeds `threshold`.
struct ConditionRule {
    std::string column_role = "temperature";
    double threshold = 0.0;
    double weight_if_true = 1.0;
    double weight_if_false = 1.0;
};

struct MetricSpec {
    PointLoss base = PointLoss::absolute;
    MetricKind kind = MetricKind::plain;
    std::vector<double> weights;           // time_weighted, one per horizon step
    std::optional<ConditionRule> condition;  // condition_weighted
    double alpha = 1.0;                     // over-prediction penalty
    double beta = 1.0;                      // under-prediction penalty

    // Throws ValidationError on inconsistent fields; weights must have `horizon` entries.
    void validate(int horizon) const;

    bool needs_context() const { return kind == MetricKind::condition_weighted; }
};

double point_loss(PointLoss base, double pred, double actual);

double mae(std::span<const double> pred, std::span<const double> actual);
double mape(std::span<const double> pred, std::span<const double> actual);

double weighted_loss(std::span<const double> pred, std::span<const double> actual,
                     std::span<const double> weights, PointLoss base);

std::vector<double> condition_weights(std::span<const double> context, const ConditionRule& rule);

double asymmetric_loss(std::span<const double> pred, std::span<const double> actual, double alpha,
                       double beta, PointLoss base);

double evaluate(const MetricSpec& spec, std::span<const double> pred, std::span<const double> actual,
                std::optional<std::span<const double>> context = std::nullopt);

// Mean of the per-window metric over several forecast windows (one row per origin).
double evaluate_windows(const MetricSpec& spec, const std::vector<std::vector<double>>& pred,
                        const std::vector<std::vector<double>>& actual,
                        const std::vector<std::vector<double>>* context = nullptr);

std::string to_string(PointLoss base);
std::string to_string(MetricKind kind);

Json to_json(const MetricSpec& spec);
MetricSpec metric_spec_from_json(const Json& j);

}  // namespace loadloop::metrics
