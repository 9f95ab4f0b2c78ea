#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "loadloop/core/error.hpp"
#include "loadloop/core/json.hpp"
#include "loadloop/optimizer/optimizer.hpp"

namespace loadloop::agents {

using loadloop::to_json;

// ---- message pool -------------------------------------------------------

inline const std::vector<std::string>& default_topics() {
    static const std::vector<std::string> topics = {"task.prepare", "task.status",     "model.optimize", "model.execute",
                                                    "deploy.forecast", "user.io", "system.error"};
    return topics;
}

enum class RoleMarker { user, agent, tool, system };
std::string to_string(RoleMarker role);
RoleMarker parse_role_marker(const std::string& text);

struct ToolCall {
    std::string id;
    std::string name;
    Json arguments = Json::object();
};

struct AgentMessage {
    std::uint64_t id = 0;
    std::string sender;
    std::vector<std::string> topics;
    RoleMarker role = RoleMarker::agent;
    std::string content;
    std::vector<ToolCall> tool_calls;
    std::optional<std::uint64_t> reply_to;
    std::string tool_call_id;  // tool results name the call they answer
    std::string stage;         // pipeline stage active at publish time
    double timestamp = 0.0;    // unix seconds; the only wall-clock field
};

Json to_json(const AgentMessage& message, bool with_timestamp = true);
AgentMessage agent_message_from_json(const Json& j);

struct BusWarning {
    std::uint64_t message_id;
    std::string text;
};

// Serialized topic-based pool. Every subscriber of any listed topic (the sender included, when
// subscribed) gets each message exactly once, in pool order.
class MessageBus {
public:
    explicit MessageBus(std::vector<std::string> topics = default_topics());

    void register_agent(const std::string& agent_id, const std::set<std::string>& subscriptions);
    bool is_registered(const std::string& agent_id) const;
    const std::set<std::string>& subscriptions(const std::string& agent_id) const;

    // Assigns id/stage/timestamp and returns the number of deliveries.
    std::size_t publish(AgentMessage& message);
    std::size_t publish(const std::string& sender, const std::vector<std::string>& topics, RoleMarker role,
                        std::string content);

    // Restores messages of an earlier session into the pool without delivering them.
    void preload(const std::vector<AgentMessage>& messages);

    std::vector<AgentMessage> drain(const std::string& agent_id);
    std::size_t pending(const std::string& agent_id) const;
    // Pending messages from someone other than the agent itself.
    bool has_foreign_pending(const std::string& agent_id) const;

    const std::vector<AgentMessage>& pool() const { return pool_; }
    const std::vector<BusWarning>& warnings() const { return warnings_; }
    const std::vector<std::string>& agents() const { return order_; }

    void set_stage(std::string stage) { stage_ = std::move(stage); }
    const std::string& stage() const { return stage_; }
    void set_clock(std::function<double()> clock) { clock_ = std::move(clock); }

    // Called for every published message (transcript persistence, event fan-out).
    void on_publish(std::function<void(const AgentMessage&)> sink) { sinks_.push_back(std::move(sink)); }
    void on_warning(std::function<void(const BusWarning&)> sink) { warning_sinks_.push_back(std::move(sink)); }

private:
    std::set<std::string> topics_;
    std::map<std::string, std::set<std::string>> subs_;
    std::vector<std::string> order_;
    std::map<std::string, std::deque<std::size_t>> inbox_;
    std::vector<AgentMessage> pool_;
    std::vector<BusWarning> warnings_;
    std::string stage_;
    std::function<double()> clock_;
    std::vector<std::function<void(const AgentMessage&)>> sinks_;
    std::vector<std::function<void(const BusWarning&)>> warning_sinks_;
};

// ---- profiles and prompts -----------------------------------------------

struct ToolParam {
    std::string name;
    std::string type;  // string, number, integer, boolean, object, array
    std::string description;
    bool required = true;
};

struct ToolDescriptor {
    std::string name;
    std::string description;
    std::vector<ToolParam> params;

    Json parameter_schema() const;
};

struct AgentProfile {
    std::string agent_id;
    std::string profile_text;
    std::string workflow_text;
    std::vector<ToolDescriptor> actions;
    std::set<std::string> subscriptions;
    std::string output_topic;
};

std::string memory_preamble();
// Profile, memory preamble, workflow and actions.
std::string render_sections(const AgentProfile& profile);
std::string render_turn(const AgentMessage& message);
std::string assemble_prompt(const AgentProfile& profile, const std::vector<AgentMessage>& memory);

// ---- token accounting ---------------------------------------------------

struct Prices {
    double input_per_million = 2.50;
    double output_per_million = 10.00;
};

double token_cost(std::uint64_t input_tokens, std::uint64_t output_tokens, const Prices& prices);

struct TokenRow {
    std::string agent_id;
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    double input_share = 0.0;   // percent of the column total
    double output_share = 0.0;
    double cost = 0.0;
};

struct TokenReport {
    std::vector<TokenRow> rows;
    TokenRow total;

    std::string render() const;
};

Json to_json(const TokenReport& report);

class TokenLedger {
public:
    explicit TokenLedger(Prices prices = {}) : prices_(prices) {}
    void record_usage(const std::string& agent_id, std::uint64_t input_tokens, std::uint64_t output_tokens);
    TokenReport report() const;
    const Prices& prices() const { return prices_; }
    void restore(const Json& j);

private:
    mutable std::mutex mu_;
    Prices prices_;
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> usage_;
};

// Whitespace-delimited words x 4/3, rounded to nearest.
std::uint64_t approximate_tokens(std::string_view text);

// ---- backends -----------------------------------------------------------

struct CompletionRequest {
    std::string agent_id;
    std::string system_text;              // rendered sections
    std::vector<AgentMessage> memory;
    std::vector<ToolDescriptor> tools;
    std::string prompt;                   // full assembled prompt
};

struct Completion {
    std::string content;
    std::vector<ToolCall> tool_calls;
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
};

class BackendError : public Error {
public:
    using Error::Error;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual Completion complete(const CompletionRequest& request) = 0;
};

// One scripted rule. A rule matches when the agent, stage, sender and text of the latest
// message in memory fit; its responses are used in order and the last one repeats.
struct ScriptRule {
    std::string agent;
    std::string stage;     // empty matches any stage
    std::string from;      // sender of the latest message; empty matches anyone
    std::string contains;  // substring of the latest message; empty matches anything
    std::vector<Completion> responses;
};

class ScriptedBackend : public LlmBackend {
public:
    explicit ScriptedBackend(std::vector<ScriptRule> rules);
    ScriptedBackend(ScriptedBackend&& other) noexcept
        : rules_(std::move(other.rules_)), used_(std::move(other.used_)), calls_(other.calls_) {}
    static ScriptedBackend from_json(const Json& j);
    static ScriptedBackend from_file(const std::filesystem::path& path);

    Completion complete(const CompletionRequest& request) override;
    std::size_t calls() const { return calls_; }

private:
    std::vector<ScriptRule> rules_;
    std::vector<std::size_t> used_;
    std::size_t calls_ = 0;
    std::mutex mu_;
};

struct HttpBackendConfig {
    std::string base_url;   // e.g. http://localhost:8000/v1
    std::string model;
    std::string api_key;
    double timeout_seconds = 60.0;

    // LOADLOOP_LLM_BASE_URL, LOADLOOP_LLM_MODEL, LOADLOOP_LLM_API_KEY.
    static HttpBackendConfig from_env();
};

// Chat-completion wire format: POST {base}/chat/completions.
class HttpBackend : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    Completion complete(const CompletionRequest& request) override;

    static Json build_request(const HttpBackendConfig& config, const CompletionRequest& request);
    static Completion parse_response(const Json& body);

private:
    HttpBackendConfig config_;
};

// ---- agents -------------------------------------------------------------

struct ToolResult {
    bool ok = true;
    std::string content;
};

using ToolHandler = std::function<ToolResult(const Json& arguments)>;

// Thrown by handlers for bad arguments; reported back to the agent as a tool error.
class ToolError : public Error {
public:
    using Error::Error;
};

struct StepOptions {
    int retries = 3;
    std::chrono::milliseconds backoff{100};  // doubles after each failure
    int repair_rounds = 2;
    std::size_t memory_cap = 200;
    std::size_t preserved_preamble = 2;
};

class Agent {
public:
    Agent(AgentProfile profile, MessageBus& bus, TokenLedger& tokens, StepOptions options = {});

    void add_tool(const std::string& name, ToolHandler handler);
    const AgentProfile& profile() const { return profile_; }
    const std::string& id() const { return profile_.agent_id; }
    const std::vector<AgentMessage>& memory() const { return memory_; }

    // Pulls pending deliveries into memory.
    void ingest();
    // One decision: prompt, complete (with retries), dispatch tool calls, repair rounds.
    std::vector<AgentMessage> step(LlmBackend& backend);

    // Publishes as this agent and remembers the message.
    AgentMessage say(const std::vector<std::string>& topics, RoleMarker role, std::string content,
                     std::vector<ToolCall> calls = {}, std::string tool_call_id = {});

private:
    void remember(const AgentMessage& message);
    ToolResult dispatch(const ToolCall& call);

    AgentProfile profile_;
    MessageBus& bus_;
    TokenLedger& tokens_;
    StepOptions options_;
    std::map<std::string, ToolHandler> handlers_;
    std::vector<AgentMessage> memory_;
    std::set<std::uint64_t> seen_;
};

// ---- guidance -----------------------------------------------------------

struct GuidanceParse {
    std::vector<optimizer::GuidanceDirective> directives;
    std::optional<std::string> clarification;  // set when the text could not be mapped
};

// Translates free text to directives via the backend; one repair round, then gives up.
GuidanceParse parse_guidance(const std::string& user_text, const optimizer::TrialSummary& summary, LlmBackend& backend,
                             TokenLedger* tokens = nullptr, const std::string& agent_id = "model_manager");

std::vector<optimizer::GuidanceDirective> parse_directive_list(const Json& j);

// Balancing allocation when the search is flat and some enabled type has < 10% of the trials.
std::vector<optimizer::GuidanceDirective> default_strategy(const optimizer::TrialSummary& summary,
                                                           const std::vector<std::string>& enabled_types,
                                                           std::size_t batch_size);

}  // namespace loadloop::agents
