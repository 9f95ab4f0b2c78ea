#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "loadloop/agents/agents.hpp"
#include "loadloop/agents/roles.hpp"
#include "loadloop/dataset/dataset.hpp"
#include "loadloop/deployment/deployment.hpp"
#include "loadloop/models/evaluate.hpp"
#include "loadloop/optimizer/optimizer.hpp"

namespace loadloop::agents {

// Stages in pipeline order.
const std::vector<std::string>& pipeline_stages();

// ---- run directory ------------------------------------------------------

class RunDirectory {
public:
    explicit RunDirectory(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path path(const std::string& name) const { return root_ / name; }
    bool exists(const std::string& name) const;

    // Whole-file writes go through a temporary file and a rename.
    void write_text(const std::string& name, const std::string& text) const;
    void write_json(const std::string& name, const Json& j) const;
    void append_line(const std::string& name, const std::string& line) const;
    std::string read_text(const std::string& name) const;
    Json read_json(const std::string& name) const;
    // One object per non-empty line; a torn last line is dropped.
    std::vector<Json> read_jsonl(const std::string& name) const;

private:
    std::filesystem::path root_;
};

// ---- answers ------------------------------------------------------------

// Source of the user's replies to ask_user. An empty string means no reply.
class AnswerProvider {
public:
    virtual ~AnswerProvider() = default;
    virtual std::string answer(const std::string& key, const std::string& question) = 0;
};

// Headless replies: per key a list consumed in order whose last entry repeats; `defaults` cover
// keys the list does not mention.
class ScriptedAnswers : public AnswerProvider {
public:
    ScriptedAnswers(std::map<std::string, std::vector<std::string>> answers = {},
                    std::map<std::string, std::string> defaults = {});
    static std::map<std::string, std::vector<std::string>> load(const std::filesystem::path& path);

    std::string answer(const std::string& key, const std::string& question) override;
    void set_default(const std::string& key, std::string value) { defaults_[key] = std::move(value); }

private:
    std::map<std::string, std::vector<std::string>> answers_;
    std::map<std::string, std::string> defaults_;
    std::map<std::string, std::size_t> used_;
    std::mutex mu_;
};

// Replies queued from outside (the chat endpoint). Never blocks.
class QueuedAnswers : public AnswerProvider {
public:
    void push(std::string text);
    std::string answer(const std::string& key, const std::string& question) override;

private:
    std::deque<std::string> queue_;
    std::mutex mu_;
};

// ---- pipeline -----------------------------------------------------------

struct PipelineConfig {
    std::filesystem::path run_dir;
    std::string dataset_path;      // default reply to the dataset question
    int interval = 0;
    int horizon = 24;
    std::string metric = "mae";    // default reply to the metric question
    optimizer::RunSettings search;
    models::TrainOptions training;
    bool full_schema = false;
    dataset::SplitRatios ratios;
    std::string stop_after;        // stage name; the run returns once it completes
    std::size_t max_steps_per_stage = 200;
    std::size_t max_steps_per_guidance = 40;
};

Json to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const Json& j);

struct PipelineEvent {
    std::string kind;  // stage_change, trial_completed, batch_completed, summary_updated, agent_message, forecast_ready, warning, error
    Json payload;
};

using PipelineSink = std::function<void(const PipelineEvent&)>;

struct PipelineOutcome {
    bool completed = false;
    std::string last_stage;  // last completed stage
    std::string error;       // set when a stage failed
};

class StageFailure : public Error {
public:
    StageFailure(std::string stage, const std::string& message) : Error(message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

// Mean absolute error of the 7-day persistence forecast over the valid origins of `range`.
double persistence_mae(const dataset::CleanDataset& data, const dataset::TaskSpec& task, const dataset::IndexRange& range);

// Drives the five agents through preparation, optimization and deployment over one run directory.
// Resumes from the directory's state record when one exists.
class Pipeline {
public:
    Pipeline(PipelineConfig config, LlmBackend& backend, AnswerProvider& answers, PipelineSink sink = {});
    ~Pipeline();
    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    // Runs every stage not yet completed.
    PipelineOutcome run();

    // ---- operations behind the agents' tools (also used directly by the service) ----
    // Returns a short description; throws DatasetError when the file cannot be used.
    std::string load_dataset(const std::string& path);
    std::string load_dataset_text(const std::string& csv, const std::string& source);
    std::string confirm_semantics(const std::string& answer);
    void confirm_semantics(const dataset::ColumnSemantics& semantics);
    std::string define_task(const std::string& answer);
    void define_task(int interval, int horizon);
    std::string clean_data();
    std::string set_metric(const std::string& answer);
    void set_metric(const metrics::MetricSpec& metric);
    // Retrains the best configuration and forecasts from `origin` (row index; defaults to the last
    // test origin).
    deployment::Forecast deploy(std::optional<std::size_t> origin = std::nullopt);
    deployment::Forecast postprocess(const deployment::PostprocessRule& rule);

    // Guidance for the running search, picked up at the next iteration boundary.
    void queue_guidance_text(std::string text);
    void queue_directives(std::vector<optimizer::GuidanceDirective> directives);

    // Posts a user chat message on user.io and lets the agents react (only while no stage runs).
    void chat(const std::string& text);

    bool stage_done(const std::string& stage) const;
    std::vector<std::string> completed_stages() const;
    const PipelineConfig& config() const { return config_; }
    const RunDirectory& run_directory() const { return dir_; }
    MessageBus& bus() { return bus_; }
    TokenLedger& tokens() { return tokens_; }
    Agent& agent(const std::string& id);

    const std::optional<dataset::RawDataset>& raw() const { return raw_; }
    const std::optional<dataset::ColumnSemantics>& semantics() const { return semantics_; }
    const std::optional<dataset::TaskSpec>& task() const { return task_; }
    std::shared_ptr<const dataset::CleanDataset> clean() const { return clean_; }
    const std::optional<dataset::SplitRanges>& splits() const { return splits_; }
    const optimizer::Ledger& ledger() const { return ledger_; }
    const std::optional<deployment::Forecast>& current_forecast() const { return forecast_; }

private:
    class GuidanceBridge;

    void install_tools();
    void restore();
    void mark_done(const std::string& stage);
    void persist_state(const std::string& failed_stage = {}, const std::string& error = {});
    void persist_tokens();
    void emit(const std::string& kind, Json payload);
    void enter_stage(const std::string& stage, const std::string& kickoff);
    // Steps agents until `goal` holds; false when they go quiet first.
    bool drive(const std::function<bool()>& goal, std::size_t max_steps);
    bool step_one();
    void run_stage(const std::string& stage);
    void run_optimize();
    void run_deploy();
    void write_forecast();
    std::vector<optimizer::GuidanceDirective> poll_guidance(const optimizer::IterationInfo& info,
                                                            const optimizer::Ledger& ledger,
                                                            const optimizer::SearchSpace& space);
    models::ForecastProblem problem() const;

    PipelineConfig config_;
    LlmBackend& backend_;
    AnswerProvider& answers_;
    PipelineSink sink_;
    RunDirectory dir_;
    MessageBus bus_;
    TokenLedger tokens_;
    std::vector<std::unique_ptr<Agent>> agents_;
    std::size_t next_agent_ = 0;
    std::ofstream transcript_;

    std::vector<std::string> completed_;
    std::optional<std::pair<std::string, std::string>> pending_question_;  // key, question

    std::optional<dataset::RawDataset> raw_;
    std::optional<dataset::ColumnSemantics> semantics_;
    bool semantics_confirmed_ = false;
    std::optional<dataset::TaskSpec> task_;
    bool metric_set_ = false;
    std::shared_ptr<const dataset::CleanDataset> clean_;
    std::optional<dataset::SplitRanges> splits_;
    bool optimize_requested_ = false;
    optimizer::Ledger ledger_;
    optimizer::SearchSpace space_;
    std::optional<optimizer::TrialSummary> last_summary_;
    std::optional<std::vector<optimizer::GuidanceDirective>> planned_;
    std::optional<deployment::DeployedModel> deployed_;
    std::optional<deployment::Forecast> forecast_;
    bool postprocess_answered_ = false;

    std::mutex guidance_mu_;
    std::deque<std::string> guidance_text_;
    std::vector<optimizer::GuidanceDirective> guidance_directives_;
};

}  // namespace loadloop::agents
