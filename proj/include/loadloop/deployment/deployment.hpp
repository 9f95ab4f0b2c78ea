#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loadloop/core/json.hpp"
#include "loadloop/core/time.hpp"
#include "loadloop/dataset/dataset.hpp"
#include "loadloop/features/features.hpp"
#include "loadloop/metrics/metrics.hpp"
#include "loadloop/models/model.hpp"

namespace loadloop::deployment {

using loadloop::to_json;

enum class RuleKind { manual_override, time_scaling, load_scaling, external_scaling };
enum class Direction { above, below };

std::string to_string(RuleKind kind);
std::string to_string(Direction direction);

// Hour selection: horizon step indices (`steps`) or hours of day of the target timestamps
// (`hours_of_day`). With neither set a scaling rule covers the whole horizon.
struct PostprocessRule {
    RuleKind kind = RuleKind::time_scaling;
    std::vector<int> steps;
    std::vector<int> hours_of_day;
    std::vector<double> values;   // manual_override, one per selected step
    double lambda = 0.0;
    double threshold = 0.0;
    Direction direction = Direction::above;
    std::string column_role;      // external_scaling
    std::string note;
};

Json to_json(const PostprocessRule& rule);
PostprocessRule postprocess_rule_from_json(const Json& j);

struct Forecast {
    Timestamp origin = 0;                  // last observed hour
    std::vector<Timestamp> target_times;   // one per horizon step
    int horizon = 0;
    std::vector<double> raw;
    std::vector<double> adjusted;
    std::vector<PostprocessRule> applied_rules;
    std::map<std::string, std::vector<double>> context;  // role -> values at the target hours
    std::optional<std::vector<double>> actual;
};

Json to_json(const Forecast& forecast);
Forecast forecast_from_json(const Json& j);

struct AdjustmentRecord {
    double recorded_at = 0.0;  // unix seconds
    PostprocessRule rule;
    std::vector<double> before;
    std::vector<double> after;
    std::string note;
};

Json to_json(const AdjustmentRecord& record, bool with_time = true);
AdjustmentRecord adjustment_record_from_json(const Json& j);

class AdjustmentLog {
public:
    void append(AdjustmentRecord record) { records_.push_back(std::move(record)); }
    const std::vector<AdjustmentRecord>& records() const { return records_; }
    std::string to_jsonl(bool with_time = true) const;
    static AdjustmentLog from_jsonl(std::string_view text);

private:
    std::vector<AdjustmentRecord> records_;
};

// Steps the rule touches, in increasing order. Throws ValidationError for bad selections.
std::vector<int> selected_steps(const PostprocessRule& rule, const Forecast& forecast);
void validate_rule(const PostprocessRule& rule, const Forecast& forecast);

// Returns the new adjusted series for `series` (the current adjusted values).
std::vector<double> apply_to_series(const PostprocessRule& rule, const Forecast& forecast, std::vector<double> series);

struct RuleApplication {
    Forecast forecast;
    AdjustmentRecord record;
};

RuleApplication apply_rule(const Forecast& forecast, const PostprocessRule& rule);

// Re-runs `applied_rules` over the raw values.
std::vector<double> replay_rules(const Forecast& forecast);

struct AdjustmentScores {
    double raw = 0.0;
    double adjusted = 0.0;
};

AdjustmentScores evaluate_adjustment(const Forecast& forecast, const std::vector<double>& actual,
                                     const metrics::MetricSpec& metric);

std::string forecast_csv(const Forecast& forecast);

struct DeployedModel {
    features::FeaturePlan plan;
    models::TrainedModel model;
};

// Forecast from `origin` (a row of `data`; defaults to the last row). Actuals are attached when the
// target window lies inside the data.
Forecast forecast(const DeployedModel& deployed, const dataset::CleanDataset& data, const dataset::TaskSpec& task,
                  std::optional<std::size_t> origin = std::nullopt);

}  // namespace loadloop::deployment
