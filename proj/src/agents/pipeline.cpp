#include "loadloop/agents/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <regex>
#include <sstream>

namespace loadloop::agents {

namespace fs = std::filesystem;
using dataset::ColumnRole;

namespace {

double unix_now() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool affirmative(const std::string& answer) {
    const std::string a = lower(trim(answer));
    return a.empty() || a == "yes" || a == "y" || a == "ok" || a == "confirm" || a == "confirmed" || a == "(no answer)";
}

bool declines(const std::string& answer) {
    const std::string a = lower(trim(answer));
    return a.empty() || a == "none" || a == "no" || a == "(no answer)";
}

std::string join(const std::vector<std::string>& items, const std::string& sep = ", ") {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
    return out;
}

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

std::string describe_semantics(const dataset::ColumnSemantics& s) {
    std::vector<std::string> parts;
    for (const auto& [col, role] : s.assignments) parts.push_back(col + "=" + std::string(dataset::to_string(role)));
    std::string out = join(parts);
    if (!s.needs_confirmation.empty()) out += "; inferred from values: " + join(s.needs_confirmation);
    return out;
}

std::string stamp(Timestamp t) { return format_timestamp(t); }

}  // namespace

const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> stages = {"prepare.dataset", "prepare.semantics", "prepare.task",
                                                    "prepare.clean",   "prepare.metric",    "optimize",
                                                    "deploy"};
    return stages;
}

double persistence_mae(const dataset::CleanDataset& data, const dataset::TaskSpec& task,
                       const dataset::IndexRange& range) {
    constexpr std::size_t week = 168;
    const auto& load = data.load();
    const auto h = static_cast<std::size_t>(task.horizon);
    const auto lead = static_cast<std::size_t>(task.interval) + 1;
    const std::size_t end = std::min(range.end, data.rows());
    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t t = range.begin; t + lead + h <= end; ++t) {
        if (t + lead < week) continue;
        std::vector<double> pred(h), actual(h);
        for (std::size_t i = 0; i < h; ++i) {
            actual[i] = load[t + lead + i];
            pred[i] = load[t + lead + i - week];
        }
        total += metrics::mae(pred, actual);
        ++windows;
    }
    if (windows == 0) throw ValidationError("range has no origin with a week of history");
    return total / static_cast<double>(windows);
}

// ---- guidance bridge ----------------------------------------------------

class Pipeline::GuidanceBridge : public optimizer::GuidanceSource {
public:
    explicit GuidanceBridge(Pipeline& p) : p_(p) {}

    std::vector<optimizer::GuidanceDirective> poll(const optimizer::IterationInfo& info, const optimizer::Ledger& ledger,
                                                   const optimizer::SearchSpace& space) override {
        return p_.poll_guidance(info, ledger, space);
    }

    void rejected(const std::string& reason) override {
        p_.bus_.publish(kSystem, {"task.status"}, RoleMarker::system, "Guidance rejected: " + reason);
        p_.emit("warning", {{"message", "guidance rejected: " + reason}});
    }

private:
    Pipeline& p_;
};

// ---- construction and persistence ---------------------------------------

Pipeline::Pipeline(PipelineConfig config, LlmBackend& backend, AnswerProvider& answers, PipelineSink sink)
    : config_(std::move(config)), backend_(backend), answers_(answers), sink_(std::move(sink)), dir_(config_.run_dir) {
    bus_.set_clock(unix_now);
    bus_.register_agent(kUser, {"user.io"});
    bus_.register_agent(kSystem, {"system.error"});
    for (auto& profile : default_profiles()) agents_.push_back(std::make_unique<Agent>(std::move(profile), bus_, tokens_));
    install_tools();
    restore();

    transcript_.open(dir_.path("transcript.jsonl"), std::ios::binary | std::ios::app);
    bus_.on_publish([this](const AgentMessage& m) {
        transcript_ << to_json(m).dump() << '\n';
        transcript_.flush();
        emit("agent_message", to_json(m));
    });
    bus_.on_warning([this](const BusWarning& w) { emit("warning", {{"message", w.text}, {"message_id", w.message_id}}); });
    dir_.write_json("config.json", to_json(config_));
}

Pipeline::~Pipeline() = default;

Agent& Pipeline::agent(const std::string& id) {
    for (auto& a : agents_)
        if (a->id() == id) return *a;
    throw ValidationError("unknown agent '" + id + "'", "agent_id");
}

bool Pipeline::stage_done(const std::string& stage) const {
    return std::find(completed_.begin(), completed_.end(), stage) != completed_.end();
}

std::vector<std::string> Pipeline::completed_stages() const { return completed_; }

void Pipeline::emit(const std::string& kind, Json payload) {
    if (sink_) sink_(PipelineEvent{kind, std::move(payload)});
}

void Pipeline::persist_state(const std::string& failed_stage, const std::string& error) {
    Json j{{"completed", completed_}, {"stage", bus_.stage()}, {"failed", nullptr}};
    if (!failed_stage.empty()) j["failed"] = {{"stage", failed_stage}, {"error", error}};
    dir_.write_json("state.json", j);
}

void Pipeline::persist_tokens() { dir_.write_json("tokens.json", to_json(tokens_.report())); }

void Pipeline::mark_done(const std::string& stage) {
    const auto& all = pipeline_stages();
    const auto at = std::find(all.begin(), all.end(), stage) - all.begin();
    std::erase_if(completed_, [&](const std::string& s) {
        return std::find(all.begin(), all.end(), s) - all.begin() >= at;
    });
    completed_.push_back(stage);
    persist_state();
}

void Pipeline::restore() {
    if (dir_.exists("state.json")) {
        const Json state = dir_.read_json("state.json");
        completed_ = state.value("completed", std::vector<std::string>{});
    }
    if (dir_.exists("transcript.jsonl")) {
        std::vector<AgentMessage> old;
        for (const auto& j : dir_.read_jsonl("transcript.jsonl")) old.push_back(agent_message_from_json(j));
        bus_.preload(old);
    }
    if (dir_.exists("tokens.json")) tokens_.restore(dir_.read_json("tokens.json"));

    if (stage_done("prepare.dataset")) {
        raw_ = dataset::load_csv(dir_.path("dataset.csv"));
        semantics_ = dataset::column_semantics_from_json(dir_.read_json("semantics.json"));
    }
    if (dir_.exists("task.json") && stage_done("prepare.task"))
        task_ = dataset::task_spec_from_json(dir_.read_json("task.json"));
    if (stage_done("prepare.clean")) {
        auto data = dataset::clean_dataset_from_csv(dir_.read_text("clean.csv"), *semantics_);
        data.report = dataset::cleaning_report_from_json(dir_.read_json("cleaning_report.json"));
        splits_ = dataset::split_chronological(data.rows(), config_.ratios, dataset::min_split_length(*task_));
        clean_ = std::make_shared<const dataset::CleanDataset>(std::move(data));
    }
    if (dir_.exists("trials.jsonl")) {
        std::vector<optimizer::TrialRecord> records;
        for (const auto& j : dir_.read_jsonl("trials.jsonl")) records.push_back(optimizer::trial_record_from_json(j));
        ledger_ = optimizer::Ledger(std::move(records));
    }
    space_ = dir_.exists("space.json") ? optimizer::search_space_from_json(dir_.read_json("space.json"))
                                       : optimizer::default_search_space(config_.full_schema);
    optimize_requested_ = stage_done("optimize");
    if (stage_done("deploy")) {
        if (dir_.exists("model.bin")) {
            auto loaded = models::load_model(dir_.path("model.bin"));
            deployed_ = deployment::DeployedModel{features::feature_plan_from_json(loaded.extra.at("plan")),
                                                  std::move(loaded.model)};
        }
        if (dir_.exists("forecasts/forecast.json"))
            forecast_ = deployment::forecast_from_json(dir_.read_json("forecasts/forecast.json"));
        postprocess_answered_ = true;
    }
}

// ---- tools --------------------------------------------------------------

void Pipeline::install_tools() {
    // Domain failures of the task manager's own tools come back as tool errors so it is re-prompted
    // at once; other agents report them as ordinary results the task manager reacts to.
    auto guarded = [](const std::string& failure, std::function<std::string(const Json&)> body,
                      bool as_error = false) -> ToolHandler {
        return [failure, as_error, body = std::move(body)](const Json& args) -> ToolResult {
            try {
                return {true, body(args)};
            } catch (const ToolError&) {
                throw;
            } catch (const std::exception& e) {
                return {!as_error, failure + ": " + e.what()};
            }
        };
    };

    Agent& tm = agent(kTaskManager);
    tm.add_tool("ask_user", [this](const Json& a) -> ToolResult {
        const std::string key = a.at("key"), question = a.at("question");
        pending_question_ = {key, question};
        return {true, "[ask:" + key + "] " + question};
    });
    tm.add_tool("delegate", [this](const Json& a) -> ToolResult {
        const std::string topic = a.at("topic");
        agent(kTaskManager).say({topic}, RoleMarker::agent, a.at("content").get<std::string>());
        return {true, "sent to " + topic};
    });
    tm.add_tool("confirm_semantics", guarded("semantics rejected", [this](const Json& a) {
                    return confirm_semantics(a.at("answer").get<std::string>());
                }, true));
    tm.add_tool("define_task", guarded("task rejected", [this](const Json& a) {
                    return define_task(a.at("answer").get<std::string>());
                }, true));
    tm.add_tool("set_metric", guarded("metric rejected", [this](const Json& a) {
                    return set_metric(a.at("answer").get<std::string>());
                }, true));

    Agent& pa = agent(kPreparationAssistant);
    pa.add_tool("load_dataset", guarded("dataset load failed", [this](const Json& a) {
                    return load_dataset(trim(a.at("path").get<std::string>()));
                }));
    pa.add_tool("clean_dataset", guarded("cleaning failed", [this](const Json&) { return clean_data(); }));

    Agent& mm = agent(kModelManager);
    mm.add_tool("start_optimization", [this](const Json&) -> ToolResult {
        optimize_requested_ = true;
        const auto& s = config_.search;
        return {true, "search started: Tr=" + std::to_string(s.max_trials) + " K=" + std::to_string(s.init_samples) +
                          " B=" + std::to_string(s.batch_size)};
    });
    mm.add_tool("plan_batch", [this](const Json& a) -> ToolResult {
        const auto summary = last_summary_ ? *last_summary_ : optimizer::summarize_trials(ledger_, config_.search.batch_size);
        auto parsed = parse_guidance(a.at("text").get<std::string>(), summary, backend_, &tokens_, kModelManager);
        planned_ = parsed.directives;
        if (parsed.clarification) {
            agent(kModelManager).say({"user.io"}, RoleMarker::agent, *parsed.clarification);
            return {true, "no directives; asked the user to clarify"};
        }
        Json list = Json::array();
        for (const auto& d : *planned_) list.push_back(to_json(d));
        return {true, "plan: " + list.dump()};
    });
    mm.add_tool("apply_default_strategy", [this](const Json&) -> ToolResult {
        const auto summary = last_summary_ ? *last_summary_ : optimizer::summarize_trials(ledger_, config_.search.batch_size);
        planned_ = default_strategy(summary, space_.type_names(), config_.search.batch_size);
        if (planned_->empty()) return {true, "plan: free exploration"};
        Json list = Json::array();
        for (const auto& d : *planned_) list.push_back(to_json(d));
        return {true, "plan: " + list.dump()};
    });

    agent(kModelDeveloper).add_tool("train_evaluate_batch", [this](const Json&) -> ToolResult {
        const std::size_t n = planned_ ? planned_->size() : 0;
        return {true, "batch accepted with " + std::to_string(n) + " directive(s)"};
    });

    Agent& dop = agent(kDeploymentOperator);
    dop.add_tool("deploy_forecast", guarded("deployment failed", [this](const Json&) {
                     const auto& f = deploy();
                     std::vector<std::string> vals;
                     for (double v : f.raw) vals.push_back(format_number(v));
                     return "forecast ready from " + stamp(f.origin) + ": [" + join(vals) + "]";
                 }));
    dop.add_tool("apply_postprocess", guarded("rule rejected", [this](const Json& a) {
                     const std::string text = a.at("rule").get<std::string>();
                     if (declines(text)) {
                         postprocess_answered_ = true;
                         return std::string("no postprocessing");
                     }
                     const Json j = Json::parse(text);
                     std::vector<deployment::PostprocessRule> rules;
                     if (j.is_array())
                         for (const auto& r : j) rules.push_back(deployment::postprocess_rule_from_json(r));
                     else
                         rules.push_back(deployment::postprocess_rule_from_json(j));
                     for (const auto& r : rules) postprocess(r);
                     postprocess_answered_ = true;
                     std::vector<std::string> vals;
                     for (double v : forecast_->adjusted) vals.push_back(format_number(v));
                     return "applied " + std::to_string(rules.size()) + " rule(s): [" + join(vals) + "]";
                 }));
}

// ---- direct operations --------------------------------------------------

std::string Pipeline::load_dataset(const std::string& path) {
    if (path.empty() || !fs::is_regular_file(path)) throw dataset::DatasetError("dataset not found: " + path);
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return load_dataset_text(ss.str(), path);
}

std::string Pipeline::load_dataset_text(const std::string& csv, const std::string& source) {
    auto raw = dataset::parse_csv(csv, source);
    auto semantics = dataset::infer_column_semantics(raw);
    semantics.validate();
    dir_.write_text("dataset.csv", csv);
    dir_.write_json("semantics.json", to_json(semantics));
    raw_ = std::move(raw);
    semantics_ = std::move(semantics);
    clean_.reset();
    splits_.reset();
    mark_done("prepare.dataset");
    return "loaded " + std::to_string(raw_->rows()) + " rows from " + source + "; proposed roles: " +
           describe_semantics(*semantics_);
}

std::string Pipeline::confirm_semantics(const std::string& answer) {
    if (!semantics_) throw ValidationError("no dataset loaded");
    dataset::ColumnSemantics s = *semantics_;
    if (!affirmative(answer)) {
        const Json j = Json::parse(answer);
        if (!j.is_object()) throw ValidationError("overrides must be an object of column -> role");
        for (const auto& [col, role] : j.items()) {
            const auto r = dataset::parse_column_role(role.get<std::string>());
            if (!r) throw ValidationError("unknown role '" + role.get<std::string>() + "'", col);
            s.assignments[col] = *r;
        }
    }
    confirm_semantics(s);
    return "semantics confirmed: " + describe_semantics(*semantics_);
}

void Pipeline::confirm_semantics(const dataset::ColumnSemantics& semantics) {
    if (!raw_) throw ValidationError("no dataset loaded");
    for (const auto& [col, role] : semantics.assignments) {
        (void)role;
        if (col != raw_->timestamp_column && !raw_->column_index(col))
            throw ValidationError("dataset has no column '" + col + "'", col);
    }
    semantics.validate();
    semantics_ = semantics;
    semantics_->needs_confirmation.clear();
    dir_.write_json("semantics.json", to_json(*semantics_));
    clean_.reset();
    mark_done("prepare.semantics");
}

std::string Pipeline::define_task(const std::string& answer) {
    const std::string a = trim(answer);
    int interval = config_.interval, horizon = config_.horizon;
    if (!a.empty() && a != "(no answer)") {
        if (a.front() == '{') {
            const Json j = Json::parse(a);
            interval = j.value("interval", interval);
            horizon = j.value("horizon", horizon);
        } else {
            const std::string l = lower(a);
            std::smatch m;
            const bool has_h = std::regex_search(l, m, std::regex(R"(horizon\D*?(\d+))"));
            if (has_h) horizon = std::stoi(m[1]);
            const bool has_i = std::regex_search(l, m, std::regex(R"(interval\D*?(\d+))"));
            if (has_i) interval = std::stoi(m[1]);
            if (!has_h && !has_i) throw ValidationError("could not read an interval or horizon from '" + a + "'");
        }
    }
    define_task(interval, horizon);
    return "task set: interval " + std::to_string(interval) + " h, horizon " + std::to_string(horizon) + " h";
}

void Pipeline::define_task(int interval, int horizon) {
    dataset::TaskSpec t = task_.value_or(dataset::TaskSpec{});
    t.interval = interval;
    t.horizon = horizon;
    if (t.metric.kind == metrics::MetricKind::time_weighted && t.metric.weights.size() != static_cast<std::size_t>(horizon))
        t.metric = {};
    t.dataset_ref = raw_ ? raw_->source_path : config_.dataset_path;
    t.validate();
    task_ = t;
    dir_.write_json("task.json", to_json(*task_));
    mark_done("prepare.task");
}

std::string Pipeline::clean_data() {
    if (!raw_ || !stage_done("prepare.semantics")) throw ValidationError("column roles are not confirmed yet");
    if (!task_) throw ValidationError("the task is not defined yet");
    auto data = dataset::clean(*raw_, *semantics_);
    const auto splits = dataset::split_chronological(data.rows(), config_.ratios, dataset::min_split_length(*task_));
    dir_.write_text("clean.csv", dataset::to_csv(data));
    dir_.write_json("cleaning_report.json", to_json(data.report));
    dir_.write_json("summary.json", to_json(dataset::summarize(data)));
    splits_ = splits;
    clean_ = std::make_shared<const dataset::CleanDataset>(std::move(data));
    mark_done("prepare.clean");

    std::size_t anomalies = 0, imputed = 0;
    for (const auto& [k, v] : clean_->report.anomalies_found) anomalies += v;
    for (const auto& [k, v] : clean_->report.values_imputed) imputed += v;
    return "cleaned " + std::to_string(clean_->rows()) + " rows: " + std::to_string(anomalies) + " anomalies, " +
           std::to_string(imputed) + " values imputed; split train " + std::to_string(splits.train.size()) + ", val " +
           std::to_string(splits.val.size()) + ", test " + std::to_string(splits.test.size());
}

std::string Pipeline::set_metric(const std::string& answer) {
    std::string a = lower(trim(answer));
    if (a.empty() || a == "(no answer)") a = lower(config_.metric);
    metrics::MetricSpec spec;
    if (a == "mae" || a == "absolute") {
        spec.base = metrics::PointLoss::absolute;
    } else if (a == "mse" || a == "squared") {
        spec.base = metrics::PointLoss::squared;
    } else {
        spec = metrics::metric_spec_from_json(Json::parse(trim(answer)));
    }
    set_metric(spec);
    return "metric set: " + metrics::to_json(spec).dump();
}

void Pipeline::set_metric(const metrics::MetricSpec& metric) {
    if (!task_) throw ValidationError("the task is not defined yet");
    metric.validate(task_->horizon);
    if (metric.needs_context()) {
        const auto role = dataset::parse_column_role(metric.condition->column_role);
        if (!role || !clean_ || !clean_->find_role(*role))
            throw ValidationError("no column with role '" + metric.condition->column_role + "'", "condition.column_role");
    }
    task_->metric = metric;
    dir_.write_json("task.json", to_json(*task_));
    mark_done("prepare.metric");
}

models::ForecastProblem Pipeline::problem() const {
    if (!clean_ || !task_ || !splits_) throw ValidationError("preparation is not complete");
    return models::ForecastProblem{clean_, *task_, *splits_, config_.training};
}

void Pipeline::write_forecast() {
    Json j = to_json(*forecast_);
    if (forecast_->actual) {
        const auto s = deployment::evaluate_adjustment(*forecast_, *forecast_->actual, task_->metric);
        j["scores"] = {{"raw", s.raw}, {"adjusted", s.adjusted}};
    }
    dir_.write_json("forecasts/forecast.json", j);
    dir_.write_text("forecasts/forecast.csv", deployment::forecast_csv(*forecast_));
    emit("forecast_ready", j);
}

deployment::Forecast Pipeline::deploy(std::optional<std::size_t> origin) {
    const auto p = problem();
    if (!deployed_) {
        const auto best = ledger_.best_index();
        if (!best) throw ValidationError("no completed trial to deploy");
        const auto& rec = ledger_[*best];
        auto fitted = models::fit_configuration(rec.config, p, rec.seed);
        models::save_model(dir_.path("model.bin"), fitted.model,
                           {{"plan", to_json(fitted.plan)}, {"trial_index", rec.trial_index}, {"config", to_json(rec.config)}});
        deployed_ = deployment::DeployedModel{std::move(fitted.plan), std::move(fitted.model)};
    }
    if (!origin) {
        const auto origins = features::valid_origins(deployed_->plan.config, *task_, splits_->test, clean_->rows());
        origin = origins.empty() ? clean_->rows() - 1 : origins.back();
    }
    forecast_ = deployment::forecast(*deployed_, *clean_, *task_, origin);
    write_forecast();
    return *forecast_;
}

deployment::Forecast Pipeline::postprocess(const deployment::PostprocessRule& rule) {
    if (!forecast_) throw ValidationError("no forecast to adjust");
    auto app = deployment::apply_rule(*forecast_, rule);
    if (app.record.recorded_at == 0.0) app.record.recorded_at = unix_now();
    dir_.append_line("forecasts/adjustments.jsonl", to_json(app.record).dump());
    forecast_ = std::move(app.forecast);
    write_forecast();
    return *forecast_;
}

void Pipeline::queue_guidance_text(std::string text) {
    std::lock_guard lock(guidance_mu_);
    guidance_text_.push_back(std::move(text));
}

void Pipeline::queue_directives(std::vector<optimizer::GuidanceDirective> directives) {
    std::lock_guard lock(guidance_mu_);
    for (auto& d : directives) guidance_directives_.push_back(std::move(d));
}

void Pipeline::chat(const std::string& text) {
    bus_.publish(kUser, {"user.io"}, RoleMarker::user, text);
    drive([] { return false; }, config_.max_steps_per_guidance);
    persist_tokens();
}

// ---- driving the agents -------------------------------------------------

bool Pipeline::step_one() {
    const std::size_t n = agents_.size();
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = (next_agent_ + k) % n;
        if (!bus_.has_foreign_pending(agents_[i]->id())) continue;
        next_agent_ = i + 1;
        agents_[i]->step(backend_);
        return true;
    }
    return false;
}

bool Pipeline::drive(const std::function<bool()>& goal, std::size_t max_steps) {
    std::size_t steps = 0;
    while (true) {
        if (goal()) return true;
        bus_.drain(kUser);
        bus_.drain(kSystem);
        if (pending_question_) {
            const auto [key, question] = *pending_question_;
            pending_question_.reset();
            const std::string reply = answers_.answer(key, question);
            bus_.publish(kUser, {"user.io"}, RoleMarker::user, reply.empty() ? "(no answer)" : reply);
            continue;
        }
        if (steps >= max_steps || !step_one()) return goal();
        ++steps;
    }
}

void Pipeline::enter_stage(const std::string& stage, const std::string& kickoff) {
    bus_.set_stage(stage);
    persist_state();
    emit("stage_change", {{"stage", stage}});
    bus_.publish(kSystem, {"task.status"}, RoleMarker::system, kickoff);
}

void Pipeline::run_stage(const std::string& stage) {
    auto require = [&](const std::string& kickoff) {
        enter_stage(stage, kickoff);
        if (!drive([&] { return stage_done(stage); }, config_.max_steps_per_stage))
            throw StageFailure(stage, "stage " + stage + " did not complete: the agents went quiet or hit the step limit");
    };
    if (stage == "prepare.dataset") {
        require("Stage prepare.dataset: a dataset path is needed.");
    } else if (stage == "prepare.semantics") {
        require("Stage prepare.semantics: proposed column roles " + describe_semantics(*semantics_) + ".");
    } else if (stage == "prepare.task") {
        require("Stage prepare.task: the forecast interval and horizon are needed.");
    } else if (stage == "prepare.clean") {
        require("Stage prepare.clean: the dataset is ready for cleaning.");
    } else if (stage == "prepare.metric") {
        require("Stage prepare.metric: the optimization loss is needed.");
    } else if (stage == "optimize") {
        run_optimize();
    } else if (stage == "deploy") {
        run_deploy();
    } else {
        throw StageFailure(stage, "unknown stage " + stage);
    }
}

void Pipeline::run_optimize() {
    enter_stage("optimize", "Stage optimize: preparation is complete; start the configuration search.");
    if (!drive([&] { return optimize_requested_; }, config_.max_steps_per_stage))
        throw StageFailure("optimize", "the search was not started");

    const auto p = problem();
    const metrics::MetricSpec metric = task_->metric;
    optimizer::Evaluator evaluate = [p, metric](const Configuration& c, std::uint64_t seed) {
        const auto o = models::evaluate_config(c, p, metric, seed);
        optimizer::EvalResult r;
        if (!o.failed) r.loss = o.loss;
        r.error = o.error;
        r.report = to_json(o.report);
        r.report.erase("wall_seconds");  // keeps the ledger reproducible; timing lives in the record
        return r;
    };
    auto sink = [this](const optimizer::OptimizerEvent& e) {
        if (e.type == "trial") {
            dir_.append_line("trials.jsonl", e.payload.dump());
            ledger_.append(optimizer::trial_record_from_json(e.payload));
            emit("trial_completed", e.payload);
        } else if (e.type == "iteration") {
            emit("batch_completed", e.payload);
            emit("summary_updated", to_json(optimizer::summarize_trials(ledger_, config_.search.batch_size)));
        } else if (e.type == "guidance") {
            emit("summary_updated", {{"guidance", e.payload}});
        } else if (e.type == "guidance_rejected") {
            emit("warning", e.payload);
        }
    };

    GuidanceBridge bridge(*this);
    optimizer::Ledger prior = ledger_;
    ledger_ = prior;
    bus_.set_stage("optimize");
    auto result = optimizer::run_optimization(space_, config_.search, &bridge, evaluate, sink, std::move(prior));
    ledger_ = std::move(result.ledger);
    space_ = std::move(result.final_space);
    bus_.set_stage("optimize");
    dir_.write_json("space.json", to_json(space_));
    if (!result.best_index) throw StageFailure("optimize", "every trial failed");

    const auto& best = ledger_[*result.best_index];
    Json j{{"trial_index", best.trial_index},
           {"config", to_json(best.config)},
           {"loss", *best.loss},
           {"seed", best.seed},
           {"stop_reason", result.stop_reason}};
    try {
        j["persistence_val_mae"] = persistence_mae(*clean_, *task_, splits_->val);
    } catch (const ValidationError&) {
        j["persistence_val_mae"] = nullptr;
    }
    dir_.write_json("best.json", j);
    mark_done("optimize");
}

std::vector<optimizer::GuidanceDirective> Pipeline::poll_guidance(const optimizer::IterationInfo& info,
                                                                  const optimizer::Ledger& ledger,
                                                                  const optimizer::SearchSpace& space) {
    bus_.set_stage("optimize.guidance");
    last_summary_ = optimizer::summarize_trials(ledger, config_.search.batch_size);
    space_ = space;

    std::vector<optimizer::GuidanceDirective> structured;
    std::optional<std::string> text;
    {
        std::lock_guard lock(guidance_mu_);
        structured = std::move(guidance_directives_);
        guidance_directives_.clear();
        if (!guidance_text_.empty()) {
            text = std::move(guidance_text_.front());
            guidance_text_.pop_front();
        }
    }
    if (!structured.empty()) {
        Json list = Json::array();
        for (const auto& d : structured) list.push_back(to_json(d));
        bus_.publish(kSystem, {"task.status"}, RoleMarker::system,
                     "Operator directives for iteration " + std::to_string(info.iteration) + ": " + list.dump());
        if (text) queue_guidance_text(std::move(*text));
        return structured;
    }

    planned_.reset();
    bus_.publish(kSystem, {"task.status"}, RoleMarker::system,
                 "Iteration " + std::to_string(info.iteration) + " is next.\n" + last_summary_->render());
    if (text) bus_.publish(kUser, {"user.io"}, RoleMarker::user, *text);
    drive([] { return false; }, config_.max_steps_per_guidance);
    persist_tokens();
    if (!planned_) {
        emit("warning", {{"message", "no plan for iteration " + std::to_string(info.iteration)}});
        return {};
    }
    auto out = std::move(*planned_);
    planned_.reset();
    return out;
}

void Pipeline::run_deploy() {
    const auto best = ledger_.best_index();
    std::string kickoff = "Stage deploy: the search finished.";
    if (best)
        kickoff += " Best trial #" + std::to_string(*best) + " (" + ledger_[*best].config.model_type + ") with loss " +
                   format_number(*ledger_[*best].loss) + ".";
    postprocess_answered_ = false;
    enter_stage("deploy", kickoff);
    if (!drive([&] { return forecast_.has_value() && postprocess_answered_; }, config_.max_steps_per_stage))
        throw StageFailure("deploy", "no forecast was produced and confirmed");
    mark_done("deploy");
}

PipelineOutcome Pipeline::run() {
    PipelineOutcome out;
    std::string current;
    try {
        for (const auto& stage : pipeline_stages()) {
            if (stage_done(stage)) {
                out.last_stage = stage;
                continue;
            }
            current = stage;
            run_stage(stage);
            persist_tokens();
            out.last_stage = stage;
            if (config_.stop_after == stage) return out;
        }
    } catch (const StageFailure& e) {
        out.error = e.what();
        current = e.stage();
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    if (!out.error.empty()) {
        bus_.publish(kSystem, {"system.error"}, RoleMarker::system, "Stage " + current + " failed: " + out.error);
        persist_state(current, out.error);
        persist_tokens();
        emit("error", {{"stage", current}, {"message", out.error}});
        return out;
    }
    bus_.set_stage("done");
    persist_state();
    persist_tokens();
    emit("stage_change", {{"stage", "done"}});
    out.completed = true;
    return out;
}

}  // namespace loadloop::agents
