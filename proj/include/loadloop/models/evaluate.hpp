#pragma once

#include <limits>
#include <memory>
#include <string>

#include "loadloop/core/configuration.hpp"
#include "loadloop/dataset/dataset.hpp"
#include "loadloop/features/features.hpp"
#include "loadloop/metrics/metrics.hpp"
#include "loadloop/models/model.hpp"

namespace loadloop::models {

// Everything a trial needs besides its configuration.
struct ForecastProblem {
    std::shared_ptr<const dataset::CleanDataset> data;
    dataset::TaskSpec task;
    dataset::SplitRanges splits;
    TrainOptions options;
};

struct FittedConfiguration {
    features::FeaturePlan plan;
    TrainedModel model;
    TrainReport report;
};

// Plans features on the train split and trains on it, using the val split for early stopping.
FittedConfiguration fit_configuration(const Configuration& config, const ForecastProblem& problem, std::uint64_t seed);

struct EvaluationOutcome {
    bool failed = false;
    double loss = std::numeric_limits<double>::infinity();
    std::string error;
    TrainReport report;
};

// Validation-split loss. Diverged training yields a failed outcome; unimplemented types throw.
EvaluationOutcome evaluate_config(const Configuration& config, const ForecastProblem& problem,
                                  const metrics::MetricSpec& metric, std::uint64_t seed);

// Context series for condition-weighted metrics at each row's target hours.
std::vector<std::vector<double>> metric_context(const dataset::CleanDataset& data, const metrics::MetricSpec& metric,
                                                const features::DesignMatrix& rows, int interval);

// Metric of a fitted configuration on an arbitrary range (e.g. the test split after search).
double score_on_range(const FittedConfiguration& fitted, const ForecastProblem& problem,
                      const metrics::MetricSpec& metric, const dataset::IndexRange& range);

std::vector<std::vector<double>> targets_of(const features::DesignMatrix& rows);

}  // namespace loadloop::models
