#include <algorithm>
#include <iomanip>
#include <sstream>

#include "loadloop/service/service.hpp"

namespace loadloop::service {

namespace fs = std::filesystem;
using agents::Pipeline;

std::string to_string(SessionStage stage) {
    switch (stage) {
        case SessionStage::created: return "created";
        case SessionStage::preparing: return "preparing";
        case SessionStage::optimizing: return "optimizing";
        case SessionStage::deploying: return "deploying";
        case SessionStage::done: return "done";
        case SessionStage::failed: return "failed";
    }
    return "failed";
}

SessionStage parse_session_stage(const std::string& text) {
    for (auto s : {SessionStage::created, SessionStage::preparing, SessionStage::optimizing, SessionStage::deploying,
                   SessionStage::done, SessionStage::failed})
        if (to_string(s) == text) return s;
    throw ValidationError("unknown session stage '" + text + "'", "stage");
}

Session::Session(std::string id, fs::path dir, BackendFactory backends, agents::PipelineConfig defaults)
    : id_(std::move(id)),
      dir_(std::move(dir)),
      backends_(std::move(backends)),
      events_((fs::create_directories(dir_), dir_ / "events.jsonl")) {
    if (fs::exists(dir_ / "session.json")) {
        std::ifstream in(dir_ / "session.json");
        stage_ = parse_session_stage(Json::parse(in).at("stage").get<std::string>());
    }
    defaults.run_dir = dir_;
    if (fs::exists(dir_ / "config.json")) {
        std::ifstream in(dir_ / "config.json");
        defaults = agents::pipeline_config_from_json(Json::parse(in));
        defaults.run_dir = dir_;
    }
    backend_ = backends_();
    pipeline_ = std::make_unique<Pipeline>(defaults, *backend_, answers_, [this](const agents::PipelineEvent& e) { on_event(e); });
    if (stage_ == SessionStage::optimizing || stage_ == SessionStage::deploying) {
        // the process died mid-run; the run directory still allows a restart
        set_stage(SessionStage::failed);
    }
    persist();
}

Session::~Session() { join(); }

void Session::on_event(const agents::PipelineEvent& e) {
    // pipeline stage names map onto the coarser session stages
    if (e.kind == "stage_change") {
        const std::string st = e.payload.value("stage", "");
        if (st == "optimize") return set_stage(SessionStage::optimizing);
        if (st == "deploy") return set_stage(SessionStage::deploying);
        if (st == "done") return;  // the worker sets done once run() returns
    }
    events_.append(e.kind, e.payload);
}

void Session::join() {
    if (worker_.joinable()) worker_.join();
}

SessionStage Session::stage() const {
    std::lock_guard lock(mu_);
    return stage_;
}

void Session::persist() const {
    std::ofstream out(dir_ / "session.json.tmp", std::ios::trunc);
    out << Json{{"id", id_}, {"stage", to_string(stage_)}}.dump(2) << '\n';
    out.close();
    fs::rename(dir_ / "session.json.tmp", dir_ / "session.json");
}

void Session::set_stage(SessionStage stage) {
    {
        std::lock_guard lock(mu_);
        if (stage_ == stage) return;
        stage_ = stage;
        persist();
    }
    events_.append("stage_change", {{"stage", to_string(stage)}});
}

void Session::require(bool ok, const std::string& why) const {
    if (!ok) throw StageConflict(why + " (session stage " + to_string(stage()) + ")");
}

Json Session::describe() const {
    Json completed = Json::array();
    if (fs::exists(dir_ / "state.json")) {
        std::ifstream in(dir_ / "state.json");
        completed = Json::parse(in).value("completed", Json::array());
    }
    return {{"session_id", id_}, {"stage", to_string(stage())}, {"completed", completed}, {"events", events_.last_seq()}};
}

Json Session::upload_dataset(const std::string& csv) {
    std::lock_guard lock(control_);
    const auto s = stage();
    require(s == SessionStage::created || s == SessionStage::preparing, "datasets are accepted only before optimization");
    const std::string text = pipeline_->load_dataset_text(csv, "upload.csv");
    set_stage(SessionStage::preparing);
    const auto& raw = *pipeline_->raw();
    return {{"rows", raw.rows()},
            {"columns", raw.columns},
            {"timestamp_column", raw.timestamp_column},
            {"semantics", to_json(*pipeline_->semantics())},
            {"message", text}};
}

Json Session::put_semantics(const Json& body) {
    std::lock_guard lock(control_);
    require(stage() == SessionStage::preparing && pipeline_->stage_done("prepare.dataset"), "upload a dataset first");
    if (!body.is_object()) throw ValidationError("body must be an object", "body");
    dataset::ColumnSemantics s;
    if (body.contains("assignments")) {
        s = dataset::column_semantics_from_json(body);
    } else {
        s = *pipeline_->semantics();
        for (const auto& [col, role] : body.items()) {
            const auto r = dataset::parse_column_role(role.get<std::string>());
            if (!r) throw ValidationError("unknown role '" + role.get<std::string>() + "'", col);
            s.assignments[col] = *r;
        }
    }
    pipeline_->confirm_semantics(s);
    return to_json(*pipeline_->semantics());
}

Json Session::put_task(const Json& body) {
    std::lock_guard lock(control_);
    require(stage() == SessionStage::preparing && pipeline_->stage_done("prepare.semantics"), "confirm the column roles first");
    if (!body.is_object()) throw ValidationError("body must be an object", "body");
    for (const char* key : {"interval", "horizon"})
        if (body.contains(key) && !body[key].is_number_integer()) throw ValidationError(std::string(key) + " must be an integer", key);
    pipeline_->define_task(body.value("interval", 0), body.value("horizon", 24));
    return to_json(*pipeline_->task());
}

Json Session::clean() {
    std::lock_guard lock(control_);
    require(stage() == SessionStage::preparing && pipeline_->stage_done("prepare.task"), "define the task first");
    pipeline_->clean_data();
    const auto& dir = pipeline_->run_directory();
    return {{"report", dir.read_json("cleaning_report.json")}, {"summary", dir.read_json("summary.json")}};
}

Json Session::put_metric(const Json& body) {
    std::lock_guard lock(control_);
    require(stage() == SessionStage::preparing && pipeline_->stage_done("prepare.clean"), "clean the dataset first");
    pipeline_->set_metric(metrics::metric_spec_from_json(body));
    return to_json(*pipeline_->task());
}

Json Session::start_optimization(const OptimizeRequest& request) {
    std::lock_guard lock(control_);
    const auto s = stage();
    require((s == SessionStage::preparing || s == SessionStage::failed) && pipeline_->stage_done("prepare.metric") &&
                !running_,
            "optimization needs a completed preparation and no active run");
    agents::PipelineConfig cfg = pipeline_->config();
    cfg.search.max_trials = request.max_trials;
    cfg.search.init_samples = request.init_samples;
    cfg.search.batch_size = request.batch_size;
    cfg.search.epsilon = request.epsilon;
    cfg.search.seed = request.seed;
    cfg.search.workers = request.workers;
    cfg.search.validate();
    cfg.stop_after.clear();

    if (worker_.joinable()) worker_.join();
    pipeline_.reset();
    pipeline_ = std::make_unique<Pipeline>(cfg, *backend_, answers_, [this](const agents::PipelineEvent& e) { on_event(e); });
    set_stage(SessionStage::optimizing);
    running_ = true;
    worker_ = std::thread([this] {
        const auto out = pipeline_->run();
        set_stage(out.completed ? SessionStage::done : SessionStage::failed);
        running_ = false;
    });
    return {{"session_id", id_}, {"stage", "optimizing"}, {"settings", to_json(cfg)["search"]}};
}

Json Session::guidance(const Json& body) {
    require(stage() == SessionStage::optimizing && running_, "guidance is accepted only while optimizing");
    if (!body.is_object()) throw ValidationError("body must be an object", "body");
    if (body.contains("directives")) {
        auto list = agents::parse_directive_list(body["directives"]);
        const std::size_t n = list.size();
        pipeline_->queue_directives(std::move(list));
        return {{"queued", n}, {"kind", "directives"}};
    }
    if (!body.contains("text") || !body["text"].is_string()) throw ValidationError("give either text or directives", "text");
    pipeline_->queue_guidance_text(body["text"].get<std::string>());
    return {{"queued", 1}, {"kind", "text"}};
}

Json Session::deploy(const Json& body) {
    std::lock_guard lock(control_);
    require(stage() == SessionStage::done, "deployment needs a finished optimization");
    std::optional<std::size_t> origin;
    const Json window = body.is_object() && body.contains("window") ? body["window"] : body;
    if (window.is_object() && window.contains("origin")) {
        if (!window["origin"].is_number_unsigned()) throw ValidationError("origin must be a row index", "origin");
        origin = window["origin"].get<std::size_t>();
    } else if (window.is_object() && window.contains("origin_time")) {
        const auto t = parse_timestamp(window["origin_time"].get<std::string>());
        const auto& ts = pipeline_->clean()->timestamps;
        const auto it = t ? std::find(ts.begin(), ts.end(), *t) : ts.end();
        if (it == ts.end()) throw ValidationError("origin_time is not a row of the cleaned data", "origin_time");
        origin = static_cast<std::size_t>(it - ts.begin());
    }
    pipeline_->deploy(origin);
    return pipeline_->run_directory().read_json("forecasts/forecast.json");
}

Json Session::postprocess(const Json& body) {
    std::lock_guard lock(control_);
    require(stage() == SessionStage::done && pipeline_->current_forecast().has_value(), "postprocessing needs a forecast");
    const Json& rule = body.is_object() && body.contains("rule") ? body["rule"] : body;
    try {
        pipeline_->postprocess(deployment::postprocess_rule_from_json(rule));
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed rule: ") + e.what(), "rule");
    }
    return pipeline_->run_directory().read_json("forecasts/forecast.json");
}

Json Session::chat_post(const std::string& text) {
    if (running_) {
        answers_.push(text);
        return {{"queued", true}};
    }
    std::lock_guard lock(control_);
    pipeline_->chat(text);
    return chat_log();
}

Json Session::chat_log() const {
    Json out = Json::array();
    agents::RunDirectory dir(dir_);
    for (const auto& m : dir.read_jsonl("transcript.jsonl")) {
        const auto topics = m.value("topics", std::vector<std::string>{});
        if (std::find(topics.begin(), topics.end(), "user.io") != topics.end()) out.push_back(m);
    }
    return out;
}

namespace {

optimizer::Ledger read_ledger(const fs::path& dir) {
    std::vector<optimizer::TrialRecord> records;
    for (const auto& j : agents::RunDirectory(dir).read_jsonl("trials.jsonl"))
        records.push_back(optimizer::trial_record_from_json(j));
    return optimizer::Ledger(std::move(records));
}

std::size_t batch_size_of(const fs::path& dir) {
    agents::RunDirectory d(dir);
    if (!d.exists("config.json")) return 10;
    return agents::pipeline_config_from_json(d.read_json("config.json")).search.batch_size;
}

}  // namespace

Json Session::trials() const {
    Json out = Json::array();
    for (const auto& j : agents::RunDirectory(dir_).read_jsonl("trials.jsonl")) out.push_back(j);
    return out;
}

Json Session::summary() const {
    const auto ledger = read_ledger(dir_);
    const auto s = optimizer::summarize_trials(ledger, batch_size_of(dir_));
    Json j = to_json(s);
    j["text"] = s.render();
    return j;
}

Json Session::importance(const std::string& model_type) const {
    agents::RunDirectory d(dir_);
    const auto space = d.exists("space.json") ? optimizer::search_space_from_json(d.read_json("space.json"))
                                              : optimizer::default_search_space(true);
    const optimizer::SearchSpace full = optimizer::default_search_space(true);
    const auto* type = space.find(model_type);
    if (!type) type = full.find(model_type);  // excluded types keep their history
    if (!type) throw NotFound("unknown model type '" + model_type + "'");
    Json list = Json::array();
    for (const auto& [dim, v] : optimizer::hyperparameter_importance(read_ledger(dir_), *type))
        list.push_back({{"dimension", dim}, {"importance", v}});
    return {{"model_type", model_type}, {"importance", list}};
}

Json Session::best() const {
    agents::RunDirectory d(dir_);
    if (!d.exists("best.json")) throw NotFound("no best configuration yet");
    return d.read_json("best.json");
}

Json Session::tokens() const {
    agents::RunDirectory d(dir_);
    agents::TokenLedger ledger;
    if (d.exists("tokens.json")) ledger.restore(d.read_json("tokens.json"));
    const auto report = ledger.report();
    Json j = to_json(report);
    j["text"] = report.render();
    return j;
}

SessionManager::SessionManager(fs::path data_dir, BackendFactory backends, agents::PipelineConfig defaults)
    : root_(std::move(data_dir)), backends_(std::move(backends)), defaults_(std::move(defaults)) {
    fs::create_directories(root_ / "sessions");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root_ / "sessions"))
        if (e.is_directory() && fs::exists(e.path() / "session.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
        const std::string id = d.filename().string();
        sessions_[id] = std::make_shared<Session>(id, d, backends_, defaults_);
    }
}

std::shared_ptr<Session> SessionManager::create() {
    std::lock_guard lock(mu_);
    std::size_t n = sessions_.size() + 1;
    std::string id;
    do {
        std::ostringstream os;
        os << "s" << std::setw(4) << std::setfill('0') << n++;
        id = os.str();
    } while (sessions_.count(id));
    auto s = std::make_shared<Session>(id, root_ / "sessions" / id, backends_, defaults_);
    sessions_[id] = s;
    return s;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
    return it->second;
}

std::vector<std::string> SessionManager::ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
}

}  // namespace loadloop::service
