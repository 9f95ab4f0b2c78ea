#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "loadloop/deployment/deployment.hpp"

namespace loadloop::deployment {

namespace {

RuleKind parse_kind(const std::string& s) {
    if (s == "manual_override") return RuleKind::manual_override;
    if (s == "time_scaling") return RuleKind::time_scaling;
    if (s == "load_scaling") return RuleKind::load_scaling;
    if (s == "external_scaling") return RuleKind::external_scaling;
    throw ValidationError("unknown rule kind '" + s + "'", "kind");
}

Json threshold_json(double t) {
    if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
    return t;
}

bool gate(double value, double threshold, Direction d) {
    return d == Direction::above ? value > threshold : value < threshold;
}

}  // namespace

std::string to_string(RuleKind kind) {
    switch (kind) {
        case RuleKind::manual_override: return "manual_override";
        case RuleKind::time_scaling: return "time_scaling";
        case RuleKind::load_scaling: return "load_scaling";
        case RuleKind::external_scaling: return "external_scaling";
    }
    return "time_scaling";
}

std::string to_string(Direction d) { return d == Direction::above ? "above" : "below"; }

Json to_json(const PostprocessRule& r) {
    Json j{{"kind", to_string(r.kind)}};
    if (!r.steps.empty()) j["steps"] = r.steps;
    if (!r.hours_of_day.empty()) j["hours_of_day"] = r.hours_of_day;
    switch (r.kind) {
        case RuleKind::manual_override: j["values"] = r.values; break;
        case RuleKind::time_scaling: j["lambda"] = r.lambda; break;
        case RuleKind::load_scaling:
            j["lambda"] = r.lambda;
            j["threshold"] = threshold_json(r.threshold);
            j["direction"] = to_string(r.direction);
            break;
        case RuleKind::external_scaling:
            j["lambda"] = r.lambda;
            j["threshold"] = threshold_json(r.threshold);
            j["direction"] = to_string(r.direction);
            j["column_role"] = r.column_role;
            break;
    }
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

PostprocessRule postprocess_rule_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("rule must be an object", "rule");
    PostprocessRule r;
    r.kind = parse_kind(j.value("kind", ""));
    try {
        if (j.contains("steps")) r.steps = j["steps"].get<std::vector<int>>();
        if (j.contains("hours_of_day")) r.hours_of_day = j["hours_of_day"].get<std::vector<int>>();
        if (j.contains("values")) r.values = j["values"].get<std::vector<double>>();
        r.lambda = j.value("lambda", 0.0);
        // thresholds may be written as "inf"/"-inf" strings
        if (j.contains("threshold")) {
            const Json& t = j["threshold"];
            if (t.is_string()) {
                const std::string s = t;
                if (s == "inf" || s == "+inf") r.threshold = INFINITY;
                else if (s == "-inf") r.threshold = -INFINITY;
                else throw ValidationError("threshold must be a number", "threshold");
            } else {
                r.threshold = t.get<double>();
            }
        }
        const std::string dir = j.value("direction", "above");
        if (dir != "above" && dir != "below") throw ValidationError("direction must be above or below", "direction");
        r.direction = dir == "above" ? Direction::above : Direction::below;
        r.column_role = j.value("column_role", "");
        r.note = j.value("note", "");
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed rule: ") + e.what(), "rule");
    }
    return r;
}

std::vector<int> selected_steps(const PostprocessRule& rule, const Forecast& f) {
    if (!rule.steps.empty() && !rule.hours_of_day.empty())
        throw ValidationError("give either steps or hours_of_day, not both", "steps");
    std::vector<int> out;
    if (!rule.steps.empty()) {
        std::set<int> seen;
        for (int s : rule.steps) {
            if (s < 0 || s >= f.horizon)
                throw ValidationError("step " + std::to_string(s) + " outside the horizon [0, " + std::to_string(f.horizon) + ")", "steps");
            if (!seen.insert(s).second) throw ValidationError("step " + std::to_string(s) + " listed twice", "steps");
        }
        return rule.steps;
    }
    if (!rule.hours_of_day.empty()) {
        std::set<int> hours;
        for (int h : rule.hours_of_day) {
            if (h < 0 || h > 23) throw ValidationError("hour of day must lie in [0, 23]", "hours_of_day");
            hours.insert(h);
        }
        for (int s = 0; s < f.horizon; ++s)
            if (hours.count(to_civil(f.target_times[static_cast<std::size_t>(s)]).hour)) out.push_back(s);
        if (out.empty()) throw ValidationError("no forecast hour matches hours_of_day", "hours_of_day");
        return out;
    }
    if (rule.kind == RuleKind::manual_override) throw ValidationError("manual override needs steps or hours_of_day", "steps");
    for (int s = 0; s < f.horizon; ++s) out.push_back(s);
    return out;
}

void validate_rule(const PostprocessRule& rule, const Forecast& f) {
    const auto steps = selected_steps(rule, f);
    if (rule.kind == RuleKind::manual_override) {
        if (rule.values.size() != steps.size())
            throw ValidationError("manual override needs one value per selected hour (" + std::to_string(steps.size()) + ")", "values");
        for (double v : rule.values)
            if (!std::isfinite(v)) throw ValidationError("override values must be finite", "values");
        return;
    }
    if (!(rule.lambda > -1.0) || !std::isfinite(rule.lambda)) throw ValidationError("lambda must be finite and > -1", "lambda");
    if (std::isnan(rule.threshold)) throw ValidationError("threshold is NaN", "threshold");
    if (rule.kind == RuleKind::external_scaling) {
        if (rule.column_role.empty()) throw ValidationError("external scaling needs column_role", "column_role");
        const auto it = f.context.find(rule.column_role);
        if (it == f.context.end())
            throw ValidationError("forecast has no context series '" + rule.column_role + "'", "column_role");
        if (it->second.size() != static_cast<std::size_t>(f.horizon))
            throw ValidationError("context series '" + rule.column_role + "' is not aligned with the horizon", "column_role");
    }
}

std::vector<double> apply_to_series(const PostprocessRule& rule, const Forecast& f, std::vector<double> series) {
    validate_rule(rule, f);
    const auto steps = selected_steps(rule, f);
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto s = static_cast<std::size_t>(steps[k]);
        switch (rule.kind) {
            case RuleKind::manual_override: series[s] = rule.values[k]; break;
            case RuleKind::time_scaling: series[s] = (1.0 + rule.lambda) * series[s]; break;
            case RuleKind::load_scaling:
                if (gate(series[s], rule.threshold, rule.direction)) series[s] = (1.0 + rule.lambda) * series[s];
                break;
            case RuleKind::external_scaling:
                if (gate(f.context.at(rule.column_role)[s], rule.threshold, rule.direction))
                    series[s] = (1.0 + rule.lambda) * series[s];
                break;
        }
    }
    return series;
}

RuleApplication apply_rule(const Forecast& f, const PostprocessRule& rule) {
    RuleApplication out{f, {}};
    out.forecast.adjusted = apply_to_series(rule, f, f.adjusted);
    out.forecast.applied_rules.push_back(rule);
    out.record.recorded_at =
        std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    out.record.rule = rule;
    out.record.before = f.adjusted;
    out.record.after = out.forecast.adjusted;
    out.record.note = rule.note;
    return out;
}

std::vector<double> replay_rules(const Forecast& f) {
    std::vector<double> series = f.raw;
    for (const auto& r : f.applied_rules) series = apply_to_series(r, f, std::move(series));
    return series;
}

AdjustmentScores evaluate_adjustment(const Forecast& f, const std::vector<double>& actual, const metrics::MetricSpec& metric) {
    if (actual.size() != f.raw.size())
        throw ValidationError("actual has " + std::to_string(actual.size()) + " values, forecast has " + std::to_string(f.raw.size()), "actual");
    std::optional<std::span<const double>> ctx;
    if (metric.needs_context()) {
        const auto it = f.context.find(metric.condition->column_role);
        if (it == f.context.end()) throw ValidationError("forecast lacks the metric's context series", "metric");
        ctx = std::span<const double>(it->second);
    }
    return {metrics::evaluate(metric, f.raw, actual, ctx), metrics::evaluate(metric, f.adjusted, actual, ctx)};
}

Json to_json(const Forecast& f) {
    Json rules = Json::array();
    for (const auto& r : f.applied_rules) rules.push_back(to_json(r));
    std::vector<std::string> times;
    for (Timestamp t : f.target_times) times.push_back(format_timestamp(t));
    Json j{{"origin", format_timestamp(f.origin)},
           {"target_times", times},
           {"horizon", f.horizon},
           {"raw", f.raw},
           {"adjusted", f.adjusted},
           {"applied_rules", rules},
           {"context", f.context}};
    j["actual"] = f.actual ? Json(*f.actual) : Json(nullptr);
    return j;
}

namespace {
Timestamp stamp(const Json& j) {
    const auto t = parse_timestamp(j.get<std::string>());
    if (!t) throw ValidationError("bad timestamp '" + j.get<std::string>() + "'");
    return *t;
}
}  // namespace

Forecast forecast_from_json(const Json& j) {
    Forecast f;
    f.origin = stamp(j.at("origin"));
    for (const auto& t : j.at("target_times")) f.target_times.push_back(stamp(t));
    f.horizon = j.at("horizon").get<int>();
    f.raw = j.at("raw").get<std::vector<double>>();
    f.adjusted = j.at("adjusted").get<std::vector<double>>();
    for (const auto& r : j.at("applied_rules")) f.applied_rules.push_back(postprocess_rule_from_json(r));
    f.context = j.value("context", std::map<std::string, std::vector<double>>{});
    if (j.contains("actual") && !j["actual"].is_null()) f.actual = j["actual"].get<std::vector<double>>();
    return f;
}

Json to_json(const AdjustmentRecord& r, bool with_time) {
    Json j{{"rule", to_json(r.rule)}, {"before", r.before}, {"after", r.after}, {"note", r.note}};
    if (with_time) j["recorded_at"] = r.recorded_at;
    return j;
}

AdjustmentRecord adjustment_record_from_json(const Json& j) {
    AdjustmentRecord r;
    r.rule = postprocess_rule_from_json(j.at("rule"));
    r.before = j.at("before").get<std::vector<double>>();
    r.after = j.at("after").get<std::vector<double>>();
    r.note = j.value("note", "");
    r.recorded_at = j.value("recorded_at", 0.0);
    return r;
}

std::string AdjustmentLog::to_jsonl(bool with_time) const {
    std::string out;
    for (const auto& r : records_) out += to_json(r, with_time).dump() + "\n";
    return out;
}

AdjustmentLog AdjustmentLog::from_jsonl(std::string_view text) {
    AdjustmentLog log;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) log.append(adjustment_record_from_json(Json::parse(line)));
    return log;
}

std::string forecast_csv(const Forecast& f) {
    std::ostringstream out;
    out.precision(17);
    out << "timestamp,raw,adjusted\n";
    for (std::size_t i = 0; i < f.raw.size(); ++i)
        out << format_timestamp(f.target_times[i]) << ',' << f.raw[i] << ',' << f.adjusted[i] << '\n';
    return out.str();
}

}  // namespace loadloop::deployment
