#include <algorithm>
#include <cctype>
#include <cmath>

#include "loadloop/dataset/dataset.hpp"

namespace loadloop::dataset {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::vector<std::string> tokens(const std::string& name) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : name) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool has_token(const std::vector<std::string>& toks, std::initializer_list<std::string_view> words) {
    for (const auto& t : toks)
        for (auto w : words)
            if (t == w) return true;
    return false;
}

// Header-name table. Checked in this order; first hit wins.
std::optional<ColumnRole> role_from_name(const std::string& header) {
    const std::string name = lower(header);
    const auto toks = tokens(name);
    auto contains = [&](std::string_view s) { return name.find(s) != std::string::npos; };

    if (contains("holiday") || has_token(toks, {"festival", "isholiday"})) return ColumnRole::holiday_flag;
    if (contains("temp") || has_token(toks, {"t2m", "drybulb"})) return ColumnRole::temperature;
    if (contains("humid") || has_token(toks, {"rh"})) return ColumnRole::humidity;
    if (contains("precip") || contains("rain") || has_token(toks, {"prcp"})) return ColumnRole::precipitation;
    if (has_token(toks, {"load", "demand", "mw", "kw", "mwh", "kwh", "consumption", "power"}))
        return ColumnRole::load;
    if (has_token(toks, {"id", "index"})) return ColumnRole::ignore;
    return std::nullopt;
}

}  // namespace

std::string_view to_string(ColumnRole role) {
    switch (role) {
        case ColumnRole::timestamp: return "timestamp";
        case ColumnRole::load: return "load";
        case ColumnRole::temperature: return "temperature";
        case ColumnRole::humidity: return "humidity";
        case ColumnRole::precipitation: return "precipitation";
        case ColumnRole::holiday_flag: return "holiday_flag";
        case ColumnRole::other_numeric: return "other_numeric";
        case ColumnRole::ignore: return "ignore";
    }
    return "ignore";
}

std::optional<ColumnRole> parse_column_role(std::string_view name) {
    for (ColumnRole r : {ColumnRole::timestamp, ColumnRole::load, ColumnRole::temperature, ColumnRole::humidity,
                         ColumnRole::precipitation, ColumnRole::holiday_flag, ColumnRole::other_numeric,
                         ColumnRole::ignore}) {
        if (to_string(r) == name) return r;
    }
    return std::nullopt;
}

std::optional<std::string> ColumnSemantics::column_for(ColumnRole role) const {
    for (const auto& [name, r] : assignments)
        if (r == role) return name;
    return std::nullopt;
}

std::vector<std::string> ColumnSemantics::columns_with(ColumnRole role) const {
    std::vector<std::string> out;
    for (const auto& [name, r] : assignments)
        if (r == role) out.push_back(name);
    return out;
}

void ColumnSemantics::validate() const {
    const auto ts = columns_with(ColumnRole::timestamp);
    const auto load = columns_with(ColumnRole::load);
    if (ts.size() != 1)
        throw SemanticsError(ts.empty() ? "no timestamp candidate" : "more than one timestamp column");
    if (load.size() != 1) throw SemanticsError(load.empty() ? "no load candidate" : "more than one load column");
}

ColumnSemantics infer_column_semantics(const RawDataset& data) {
    if (data.timestamp_column.empty()) throw SemanticsError("no timestamp candidate");
    ColumnSemantics sem;
    sem.assignments[data.timestamp_column] = ColumnRole::timestamp;

    bool have_load = false;
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
        const auto& name = data.columns[c];
        const bool numeric = std::any_of(data.values[c].begin(), data.values[c].end(),
                                         [](const auto& v) { return v.has_value(); });
        auto role = role_from_name(name);
        if (!numeric) role = ColumnRole::ignore;
        if (role == ColumnRole::load && have_load) role = ColumnRole::other_numeric;
        if (!role) role = ColumnRole::other_numeric;
        if (role == ColumnRole::load) have_load = true;
        sem.assignments[name] = *role;
    }

    if (!have_load) {
        // Value fallback: the highest-variance remaining numeric column.
        std::optional<std::string> best;
        double best_var = -1.0;
        for (std::size_t c = 0; c < data.columns.size(); ++c) {
            if (sem.assignments[data.columns[c]] != ColumnRole::other_numeric) continue;
            double sum = 0.0, sq = 0.0;
            std::size_t n = 0;
            for (const auto& v : data.values[c]) {
                if (!v) continue;
                sum += *v;
                sq += *v * *v;
                ++n;
            }
            if (n < 2) continue;
            const double mean = sum / n;
            const double var = sq / n - mean * mean;
            if (var > best_var) {
                best_var = var;
                best = data.columns[c];
            }
        }
        if (!best) throw SemanticsError("no load candidate");
        sem.assignments[*best] = ColumnRole::load;
        sem.needs_confirmation.push_back(*best);
    }
    return sem;
}

Json to_json(const ColumnSemantics& semantics) {
    Json a = Json::object();
    for (const auto& [name, role] : semantics.assignments) a[name] = std::string(to_string(role));
    return Json{{"assignments", a}, {"needs_confirmation", semantics.needs_confirmation}};
}

ColumnSemantics column_semantics_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("assignments") || !j["assignments"].is_object())
        throw ValidationError("semantics require an 'assignments' object", "assignments");
    ColumnSemantics s;
    for (const auto& [name, role] : j["assignments"].items()) {
        if (!role.is_string()) throw ValidationError("role for '" + name + "' must be text", "assignments." + name);
        auto r = parse_column_role(role.get<std::string>());
        if (!r) throw ValidationError("unknown role '" + role.get<std::string>() + "'", "assignments." + name);
        s.assignments[name] = *r;
    }
    if (j.contains("needs_confirmation")) s.needs_confirmation = j["needs_confirmation"].get<std::vector<std::string>>();
    return s;
}

void TaskSpec::validate() const {
    if (interval < 0) throw ValidationError("forecast interval must be >= 0", "interval");
    if (horizon < 1) throw ValidationError("forecast horizon must be >= 1", "horizon");
    metric.validate(horizon);
}

Json to_json(const TaskSpec& task) {
    return Json{{"interval", task.interval},
                {"horizon", task.horizon},
                {"metric", metrics::to_json(task.metric)},
                {"dataset_ref", task.dataset_ref}};
}

TaskSpec task_spec_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("task must be an object");
    TaskSpec t;
    try {
        t.interval = j.value("interval", 0);
        t.horizon = j.value("horizon", 24);
        t.dataset_ref = j.value("dataset_ref", "");
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed task: ") + e.what());
    }
    if (j.contains("metric")) t.metric = metrics::metric_spec_from_json(j["metric"]);
    return t;
}

}  // namespace loadloop::dataset
