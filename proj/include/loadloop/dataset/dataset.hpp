#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "loadloop/core/error.hpp"
#include "loadloop/core/json.hpp"
#include "loadloop/core/time.hpp"
#include "loadloop/metrics/metrics.hpp"

namespace loadloop::dataset {

class DatasetError : public Error {
public:
    using Error::Error;
};

// Timestamp or load column cannot be identified: the caller must ask for a different dataset.
class SemanticsError : public DatasetError {
public:
    using DatasetError::DatasetError;
};

struct RawDataset {
    std::string source_path;
    std::string timestamp_column;  // empty when no column parsed as timestamps
    std::vector<Timestamp> timestamps;
    std::vector<std::string> columns;                       // non-timestamp columns, file order
    std::vector<std::vector<std::optional<double>>> values;  // values[column][row]

    std::size_t rows() const { return timestamps.size(); }
    std::optional<std::size_t> column_index(std::string_view name) const;
};

RawDataset load_csv(const std::filesystem::path& path);

// Same rules as load_csv, for CSV text that did not come from a file (uploads).
RawDataset parse_csv(std::string_view text, std::string source = "<memory>");

enum class ColumnRole { timestamp, load, temperature, humidity, precipitation, holiday_flag, other_numeric, ignore };

std::string_view to_string(ColumnRole role);
std::optional<ColumnRole> parse_column_role(std::string_view name);

struct ColumnSemantics {
    std::map<std::string, ColumnRole> assignments;
    // Assignments made from values rather than names; the user is asked to confirm these.
    std::vector<std::string> needs_confirmation;

    std::optional<std::string> column_for(ColumnRole role) const;
    std::vector<std::string> columns_with(ColumnRole role) const;
    // Exactly one timestamp and one load column; throws SemanticsError otherwise.
    void validate() const;
};

ColumnSemantics infer_column_semantics(const RawDataset& data);

Json to_json(const ColumnSemantics& semantics);
ColumnSemantics column_semantics_from_json(const Json& j);

struct TaskSpec {
    int interval = 0;  // hours between the last observation and the first predicted hour
    int horizon = 24;  // predicted hours
    metrics::MetricSpec metric;
    std::string dataset_ref;

    void validate() const;
};

Json to_json(const TaskSpec& task);
TaskSpec task_spec_from_json(const Json& j);

struct AnomalyPolicy {
    std::optional<double> lower_bound = 0.0;
    std::optional<double> upper_bound;
    bool statistical = true;
    double k = 5.0;
    int window = 24;
    std::size_t min_statistical_length = 48;
};

// Missing entries are NaN and are never flagged.
std::vector<bool> detect_anomalies(std::span<const double> series, const AnomalyPolicy& policy);

struct ImputePolicy {
    int linear_max_gap = 6;
    int same_hour_days = 3;
    int max_gap = 168;
};

struct ImputeResult {
    std::vector<double> values;  // trimmed to [first present, last present]
    std::size_t leading_trimmed = 0;
    std::size_t trailing_trimmed = 0;
    std::size_t interpolated = 0;
    std::size_t same_hour_filled = 0;
    std::map<int, std::size_t> gap_histogram;
};

// Missing entries are NaN. Throws DatasetError when a gap exceeds policy.max_gap.
ImputeResult impute(std::span<const double> series, const ImputePolicy& policy);

struct CleaningReport {
    std::map<std::string, std::size_t> anomalies_found;
    std::map<std::string, std::size_t> values_imputed;
    std::map<std::string, std::size_t> missing_before;
    std::map<int, std::size_t> gap_histogram;
    std::vector<std::pair<std::string, std::string>> methods_applied;
    std::size_t rows_trimmed = 0;
    std::size_t rows_resampled_from = 0;
};

Json to_json(const CleaningReport& report);
CleaningReport cleaning_report_from_json(const Json& j);

struct CleaningPolicy {
    AnomalyPolicy load;
    ImputePolicy impute;
};

// Gapless hourly grid; no missing cells in kept columns.
struct CleanDataset {
    std::vector<Timestamp> timestamps;
    std::vector<std::string> columns;
    std::vector<ColumnRole> roles;
    std::vector<std::vector<double>> values;
    CleaningReport report;

    std::size_t rows() const { return timestamps.size(); }
    const std::vector<double>& load() const;
    const std::vector<double>* find_role(ColumnRole role) const;
    std::vector<std::size_t> columns_with(ColumnRole role) const;
};

CleanDataset clean(const RawDataset& raw, const ColumnSemantics& semantics, const CleaningPolicy& policy = {});

// CSV with a `timestamp` column followed by the kept columns; the role row is not written.
std::string to_csv(const CleanDataset& data);
// Reads back a to_csv() file given the semantics used to produce it.
CleanDataset clean_dataset_from_csv(std::string_view text, const ColumnSemantics& semantics);

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool operator==(const IndexRange&) const = default;
};

struct SplitRanges {
    IndexRange train;
    IndexRange val;
    IndexRange test;
};

struct SplitRatios {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};

// Longest lookback any feature group uses.
inline constexpr std::size_t kMaxLookbackHours = 168;

inline std::size_t min_split_length(const TaskSpec& task) {
    return kMaxLookbackHours + static_cast<std::size_t>(task.horizon);
}

SplitRanges split_chronological(std::size_t rows, const SplitRatios& ratios, std::size_t min_length);

struct ColumnStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double std = 0.0;  // population
};

struct DataSummary {
    std::size_t rows = 0;
    Timestamp first = 0;
    Timestamp last = 0;
    std::map<std::string, ColumnStats> columns;
    std::map<std::string, std::size_t> missing_before;
    std::vector<double> hourly_profile;  // 24 mean loads by hour of day
    std::vector<double> weekly_profile;  // 168 mean loads, Monday 00:00 first
};

DataSummary summarize(const CleanDataset& data);
Json to_json(const DataSummary& summary);

struct SyntheticOptions {
    Timestamp start = from_civil(2023, 1, 2);
    int days = 56;
    unsigned long long seed = 7;
    double noise = 15.0;
};

// Hourly load, temperature and humidity with daily/weekly structure and temperature response.
std::string generate_synthetic_csv(const SyntheticOptions& options);

}  // namespace loadloop::dataset
