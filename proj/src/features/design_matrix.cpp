#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "loadloop/features/features.hpp"

namespace loadloop::features {

using dataset::CleanDataset;
using dataset::ColumnRole;
using dataset::IndexRange;
using dataset::TaskSpec;

namespace {

NamedColumns pick(const NamedColumns& candidates, const std::vector<std::string>& names) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < candidates.size(); ++i) index.emplace(candidates.names[i], i);
    NamedColumns out;
    for (const auto& n : names) {
        auto it = index.find(n);
        if (it == index.end()) throw ValidationError("feature '" + n + "' is not available in this dataset");
        out.append(n, candidates.columns[it->second]);
    }
    return out;
}

struct OtherCandidates {
    NamedColumns columns;
    std::vector<std::string> unscaled;
};

OtherCandidates other_candidates(const CleanDataset& data, std::span<const std::size_t> origins, int interval) {
    OtherCandidates out;
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
        const ColumnRole role = data.roles[c];
        const auto& v = data.values[c];
        if (role == ColumnRole::holiday_flag) {
            // Holidays are known ahead of time: use the flag at the first target hour.
            std::vector<double> col(origins.size());
            for (std::size_t r = 0; r < origins.size(); ++r) {
                const std::size_t tau = origins[r] + static_cast<std::size_t>(interval) + 1;
                if (tau >= v.size()) throw ValidationError("holiday flag unknown beyond the dataset end");
                col[r] = v[tau];
            }
            const std::string name = data.columns[c] + "_target";
            out.unscaled.push_back(name);
            out.columns.append(name, std::move(col));
        } else if (role == ColumnRole::humidity || role == ColumnRole::precipitation ||
                   role == ColumnRole::other_numeric) {
            for (int k = 1; k <= kOtherLagHours; ++k) {
                std::vector<double> col(origins.size());
                for (std::size_t r = 0; r < origins.size(); ++r) col[r] = v[origins[r] - static_cast<std::size_t>(k)];
                out.columns.append(data.columns[c] + "_lag_" + std::to_string(k), std::move(col));
            }
        }
    }
    return out;
}

std::vector<Timestamp> target_timestamps(const CleanDataset& data, std::span<const std::size_t> origins, int interval) {
    std::vector<Timestamp> out(origins.size());
    for (std::size_t r = 0; r < origins.size(); ++r) {
        const std::size_t tau = origins[r] + static_cast<std::size_t>(interval) + 1;
        out[r] = data.timestamps.front() + static_cast<Timestamp>(tau) * kSecondsPerHour;
    }
    return out;
}

}  // namespace

std::vector<std::size_t> valid_origins(const FeatureConfig& config, const TaskSpec& task, const IndexRange& range,
                                       std::size_t rows) {
    std::vector<std::size_t> out;
    const std::size_t end = std::min(range.end, rows);
    const std::size_t window = static_cast<std::size_t>(task.interval + task.horizon);
    if (end < window + 1) return out;
    const std::size_t lo = std::max(range.begin, required_history(config, task.interval));
    const std::size_t hi = end - 1 - window;  // inclusive
    for (std::size_t t = lo; t <= hi && hi >= lo; ++t) out.push_back(t);
    return out;
}

FeaturePlan fit_feature_plan(const FeatureConfig& config, const CleanDataset& data, const TaskSpec& task,
                             const IndexRange& train_range) {
    config.validate();
    FeaturePlan plan;
    plan.config = config;
    const auto origins = valid_origins(config, task, train_range, data.rows());
    if (origins.empty()) throw ValidationError("training range has no valid forecast origins");

    const auto& load = data.load();
    std::vector<double> target(origins.size());
    for (std::size_t r = 0; r < origins.size(); ++r)
        target[r] = load[origins[r] + static_cast<std::size_t>(task.interval) + 1];

    auto keep = [&](const NamedColumns& cands, double ratio) {
        auto ranked = rank_by_correlation(cands, target);
        const auto n = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(ranked.size()) - 1e-9));
        ranked.resize(std::min(n, ranked.size()));
        return ranked;
    };

    if (config.temp_lags == SelectMode::correlation) {
        if (const auto* temp = data.find_role(ColumnRole::temperature))
            plan.temperature = keep(candidate_temperature_lags(*temp, origins), config.temp_ratio);
    }
    if (!config.sequence_input && config.load_lags == LoadLagMode::correlation)
        plan.load = keep(candidate_load_lags(load, origins), config.load_ratio);
    if (config.other == SelectMode::correlation) {
        auto cands = other_candidates(data, origins, task.interval);
        if (cands.columns.size() > 0) plan.other = keep(cands.columns, config.other_ratio);
    }
    return plan;
}

DesignMatrix assemble_for_origins(const FeaturePlan& plan, const CleanDataset& data, const TaskSpec& task,
                                  std::span<const std::size_t> origins, bool with_targets) {
    const FeatureConfig& config = plan.config;
    const auto& load = data.load();
    const std::size_t need = required_history(config, task.interval);
    for (std::size_t t : origins) {
        if (t < need) throw ValidationError("origin " + std::to_string(t) + " lacks the required " + std::to_string(need) + " hours of history");
        if (t >= data.rows()) throw ValidationError("origin " + std::to_string(t) + " is beyond the data window");
    }

    NamedColumns blocks;
    std::vector<std::string> unscaled;

    const auto target_ts = target_timestamps(data, origins, task.interval);
    NamedColumns calendar = encode_calendar(target_ts, config.calendar);

    NamedColumns temperature;
    if (!plan.temperature.empty()) {
        const auto* temp = data.find_role(ColumnRole::temperature);
        if (!temp) throw ValidationError("missing temperature history");
        temperature = pick(candidate_temperature_lags(*temp, origins), plan.temperature);
    }
    NamedColumns interactions;
    if (config.interaction) interactions = interaction_terms(calendar, temperature);

    blocks.append(std::move(calendar));
    blocks.append(std::move(temperature));
    blocks.append(std::move(interactions));

    if (config.sequence_input) {
        NamedColumns seq;
        std::vector<std::vector<double>> cols(static_cast<std::size_t>(config.sequence_length), std::vector<double>(origins.size()));
        for (std::size_t r = 0; r < origins.size(); ++r) {
            const auto s = build_sequence_input(load, config.sequence_frequency, config.sequence_length, origins[r]);
            for (std::size_t j = 0; j < s.size(); ++j) cols[j][r] = s[j];
        }
        for (std::size_t j = 0; j < cols.size(); ++j) seq.append("load_seq_" + std::to_string(j), std::move(cols[j]));
        blocks.append(std::move(seq));
    } else if (config.load_lags == LoadLagMode::fixed) {
        blocks.append(fixed_load_lags(load, origins, task.interval));
    } else if (config.load_lags == LoadLagMode::correlation && !plan.load.empty()) {
        blocks.append(pick(candidate_load_lags(load, origins), plan.load));
    }

    if (!plan.other.empty()) {
        auto cands = other_candidates(data, origins, task.interval);
        blocks.append(pick(cands.columns, plan.other));
        unscaled = cands.unscaled;
    }

    DesignMatrix m;
    m.horizon = task.horizon;
    m.feature_names = blocks.names;
    m.scaled.assign(m.feature_names.size(), true);
    for (std::size_t c = 0; c < m.feature_names.size(); ++c)
        if (std::find(unscaled.begin(), unscaled.end(), m.feature_names[c]) != unscaled.end()) m.scaled[c] = false;

    const std::size_t rows = origins.size();
    const std::size_t cols = m.feature_names.size();
    m.values.resize(rows * cols);
    for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t r = 0; r < rows; ++r) m.values[r * cols + c] = blocks.columns[c][r];

    m.origins.assign(origins.begin(), origins.end());
    m.origin_timestamps.resize(rows);
    for (std::size_t r = 0; r < rows; ++r)
        m.origin_timestamps[r] = data.timestamps.front() + static_cast<Timestamp>(origins[r]) * kSecondsPerHour;

    if (with_targets) {
        const auto h = static_cast<std::size_t>(task.horizon);
        m.targets.resize(rows * h);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < h; ++i) {
                const std::size_t idx = origins[r] + static_cast<std::size_t>(task.interval) + 1 + i;
                if (idx >= load.size()) throw ValidationError("target window extends beyond the data");
                m.targets[r * h + i] = load[idx];
            }
        }
    }
    return m;
}

DesignMatrix assemble_design_matrix(const FeaturePlan& plan, const CleanDataset& data, const TaskSpec& task,
                                    const IndexRange& range) {
    const auto origins = valid_origins(plan.config, task, range, data.rows());
    if (origins.empty()) throw ValidationError("range has no valid forecast origins");
    return assemble_for_origins(plan, data, task, origins, true);
}

DesignMatrix assemble_design_matrix(const FeatureConfig& config, const CleanDataset& data, const TaskSpec& task,
                                    const IndexRange& range) {
    return assemble_design_matrix(fit_feature_plan(config, data, task, range), data, task, range);
}

Json to_json(const FeaturePlan& plan) {
    const FeatureConfig& c = plan.config;
    auto lag_mode = [](LoadLagMode m) {
        return m == LoadLagMode::none ? "none" : m == LoadLagMode::fixed ? "fixed" : "correlation";
    };
    auto sel = [](SelectMode m) { return m == SelectMode::none ? "none" : "correlation"; };
    return Json{{"config",
                 {{"calendar", to_string(c.calendar)},
                  {"temp_lags", sel(c.temp_lags)},
                  {"temp_ratio", c.temp_ratio},
                  {"interaction", c.interaction},
                  {"sequence_input", c.sequence_input},
                  {"load_lags", lag_mode(c.load_lags)},
                  {"load_ratio", c.load_ratio},
                  {"sequence_frequency", c.sequence_frequency},
                  {"sequence_length", c.sequence_length},
                  {"other", sel(c.other)},
                  {"other_ratio", c.other_ratio}}},
                {"temperature", plan.temperature},
                {"load", plan.load},
                {"other", plan.other}};
}

FeaturePlan feature_plan_from_json(const Json& j) {
    FeaturePlan p;
    const Json& c = j.at("config");
    const std::string cal = c.at("calendar");
    p.config.calendar = cal == "numerical"       ? CalendarMode::numerical
                        : cal == "categorical"   ? CalendarMode::categorical
                        : cal == "trigonometric" ? CalendarMode::trigonometric
                                                 : CalendarMode::none;
    p.config.temp_lags = c.at("temp_lags") == "correlation" ? SelectMode::correlation : SelectMode::none;
    p.config.temp_ratio = c.at("temp_ratio");
    p.config.interaction = c.at("interaction");
    p.config.sequence_input = c.at("sequence_input");
    const std::string lags = c.at("load_lags");
    p.config.load_lags = lags == "fixed" ? LoadLagMode::fixed : lags == "correlation" ? LoadLagMode::correlation : LoadLagMode::none;
    p.config.load_ratio = c.at("load_ratio");
    p.config.sequence_frequency = c.at("sequence_frequency");
    p.config.sequence_length = c.at("sequence_length");
    p.config.other = c.at("other") == "correlation" ? SelectMode::correlation : SelectMode::none;
    p.config.other_ratio = c.at("other_ratio");
    p.temperature = j.at("temperature").get<std::vector<std::string>>();
    p.load = j.at("load").get<std::vector<std::string>>();
    p.other = j.at("other").get<std::vector<std::string>>();
    return p;
}

}  // namespace loadloop::features
