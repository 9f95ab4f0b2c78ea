#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "loadloop/core/configuration.hpp"
#include "loadloop/core/error.hpp"
#include "loadloop/core/time.hpp"
#include "loadloop/dataset/dataset.hpp"

namespace loadloop::features {

enum class CalendarMode { none, numerical, categorical, trigonometric };
enum class SelectMode { none, correlation };
enum class LoadLagMode { none, correlation, fixed };

inline constexpr int kTemperatureLagHours = 72;
inline constexpr int kLoadLagHours = 168;
inline constexpr int kOtherLagHours = 24;
inline constexpr int kFixedLagDays = 7;

// One point of the feature-construction space. Exactly one of the load-lag group and the
// load-sequence group is active, chosen by the model family.
struct FeatureConfig {
    CalendarMode calendar = CalendarMode::none;
    SelectMode temp_lags = SelectMode::none;
    double temp_ratio = 0.0;
    bool interaction = false;
    bool sequence_input = false;
    LoadLagMode load_lags = LoadLagMode::fixed;
    double load_ratio = 0.0;
    int sequence_frequency = 1;
    int sequence_length = 24;
    SelectMode other = SelectMode::none;
    double other_ratio = 0.0;

    void validate() const;
};

// Decodes the "f.*" entries of a configuration.
FeatureConfig feature_config_from_params(const ParamMap& params, bool sequence_input);

std::string to_string(CalendarMode mode);

// Column-major named feature block.
struct NamedColumns {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    std::size_t size() const { return names.size(); }
    void append(std::string name, std::vector<double> column);
    void append(NamedColumns other);
};

NamedColumns encode_calendar(std::span<const Timestamp> timestamps, CalendarMode mode);

// 72 hourly lags T(t-1)..T(t-72) plus the means of hours 1-24, 25-48 and 49-72 back, per origin.
NamedColumns candidate_temperature_lags(std::span<const double> temperature, std::span<const std::size_t> origins);

// Ranks by |Pearson r| (zero-variance candidates count as r = 0, ties by name) and keeps
// ceil(top_ratio * count) columns in rank order.
NamedColumns pearson_select(const NamedColumns& candidates, std::span<const double> target, double top_ratio);
std::vector<std::string> rank_by_correlation(const NamedColumns& candidates, std::span<const double> target);

NamedColumns interaction_terms(const NamedColumns& calendar, const NamedColumns& temperature);

// Candidate lag columns P(t-1)..P(t-168) for correlation mode.
NamedColumns candidate_load_lags(std::span<const double> load, std::span<const std::size_t> origins);

// The 7 most recent values at the same hour of day as the first target hour.
NamedColumns fixed_load_lags(std::span<const double> load, std::span<const std::size_t> origins, int interval);

// `length` values every `frequency` hours before `origin`, oldest first.
std::vector<double> build_sequence_input(std::span<const double> load, int frequency, int length, std::size_t origin);

// History (in rows before the origin) that the given configuration needs.
std::size_t required_history(const FeatureConfig& config, int interval);

// Correlation choices frozen on the training range.
struct FeaturePlan {
    FeatureConfig config;
    std::vector<std::string> temperature;
    std::vector<std::string> load;
    std::vector<std::string> other;
};

struct DesignMatrix {
    std::vector<std::string> feature_names;
    std::vector<bool> scaled;            // false for pass-through columns (holiday flags)
    std::vector<double> values;          // row-major rows x features
    std::vector<double> targets;         // row-major rows x horizon
    std::vector<std::size_t> origins;    // dataset row of each origin
    std::vector<Timestamp> origin_timestamps;
    int horizon = 0;

    std::size_t rows() const { return origins.size(); }
    std::size_t cols() const { return feature_names.size(); }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols(), cols()}; }
    std::span<const double> target(std::size_t r) const {
        return {targets.data() + r * static_cast<std::size_t>(horizon), static_cast<std::size_t>(horizon)};
    }
};

// Valid origins in `range`: enough history before, and the whole target window inside the range.
std::vector<std::size_t> valid_origins(const FeatureConfig& config, const dataset::TaskSpec& task,
                                       const dataset::IndexRange& range, std::size_t rows);

FeaturePlan fit_feature_plan(const FeatureConfig& config, const dataset::CleanDataset& data,
                             const dataset::TaskSpec& task, const dataset::IndexRange& train_range);

// Throws ValidationError when no origin in the range is valid.
DesignMatrix assemble_design_matrix(const FeaturePlan& plan, const dataset::CleanDataset& data,
                                    const dataset::TaskSpec& task, const dataset::IndexRange& range);

// Fits the plan on `range` itself and assembles it.
DesignMatrix assemble_design_matrix(const FeatureConfig& config, const dataset::CleanDataset& data,
                                    const dataset::TaskSpec& task, const dataset::IndexRange& range);

// Design rows for explicit origins (deployment); each origin must have full history.
DesignMatrix assemble_for_origins(const FeaturePlan& plan, const dataset::CleanDataset& data,
                                  const dataset::TaskSpec& task, std::span<const std::size_t> origins,
                                  bool with_targets);

Json to_json(const FeaturePlan& plan);
FeaturePlan feature_plan_from_json(const Json& j);

}  // namespace loadloop::features
