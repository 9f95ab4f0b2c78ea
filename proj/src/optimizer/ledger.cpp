#include <cmath>
#include <sstream>

#include "loadloop/optimizer/optimizer.hpp"

namespace loadloop::optimizer {

std::string to_string(TrialOrigin origin) {
    switch (origin) {
        case TrialOrigin::random_init: return "random_init";
        case TrialOrigin::acquisition: return "acquisition";
        case TrialOrigin::user_injected: return "user_injected";
    }
    return "acquisition";
}

TrialOrigin parse_trial_origin(const std::string& text) {
    if (text == "random_init") return TrialOrigin::random_init;
    if (text == "acquisition") return TrialOrigin::acquisition;
    if (text == "user_injected") return TrialOrigin::user_injected;
    throw ValidationError("unknown trial origin '" + text + "'", "origin");
}

Json to_json(const TrialRecord& r, bool with_timing) {
    Json j{{"trial_index", r.trial_index},
           {"config", to_json(r.config)},
           {"loss", r.loss ? Json(*r.loss) : Json(nullptr)},
           {"failed", r.failed()},
           {"origin", to_string(r.origin)},
           {"seed", r.seed},
           {"iteration", r.iteration},
           {"report", r.report}};
    if (!r.error.empty()) j["error"] = r.error;
    if (with_timing)
        j["timing"] = {{"started_at", r.timing.started_at},
                       {"finished_at", r.timing.finished_at},
                       {"wall_seconds", r.timing.wall_seconds}};
    return j;
}

TrialRecord trial_record_from_json(const Json& j) {
    TrialRecord r;
    r.trial_index = j.at("trial_index").get<std::size_t>();
    r.config = configuration_from_json(j.at("config"));
    if (!j.at("loss").is_null()) r.loss = j["loss"].get<double>();
    r.error = j.value("error", "");
    r.origin = parse_trial_origin(j.at("origin"));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.iteration = j.value("iteration", std::size_t{0});
    r.report = j.value("report", Json::object());
    if (j.contains("timing")) {
        const auto& t = j["timing"];
        r.timing = {t.value("started_at", 0.0), t.value("finished_at", 0.0), t.value("wall_seconds", 0.0)};
    }
    return r;
}

Ledger::Ledger(std::vector<TrialRecord> records) {
    for (auto& r : records) append(std::move(r));
}

void Ledger::append(TrialRecord record) {
    if (record.trial_index != records_.size())
        throw ValidationError("trial index " + std::to_string(record.trial_index) + " breaks the dense sequence (expected " +
                              std::to_string(records_.size()) + ")");
    if (record.loss && !std::isfinite(*record.loss)) {
        record.loss.reset();
        if (record.error.empty()) record.error = "non-finite loss";
    }
    records_.push_back(std::move(record));
}

std::optional<std::size_t> Ledger::best_index() const {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (records_[i].loss && (!best || *records_[i].loss < *records_[*best].loss)) best = i;
    return best;
}

std::string Ledger::to_jsonl(bool with_timing) const {
    std::string out;
    for (const auto& r : records_) {
        out += to_json(r, with_timing).dump();
        out += '\n';
    }
    return out;
}

Ledger Ledger::from_jsonl(std::string_view text) {
    Ledger l;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        l.append(trial_record_from_json(Json::parse(line)));
    }
    return l;
}

}  // namespace loadloop::optimizer
