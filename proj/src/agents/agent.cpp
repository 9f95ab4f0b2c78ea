#include <thread>

#include "loadloop/agents/agents.hpp"

namespace loadloop::agents {

namespace {

bool type_matches(const Json& v, const std::string& type) {
    if (type == "string") return v.is_string();
    if (type == "number") return v.is_number();
    if (type == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>())));
    if (type == "boolean") return v.is_boolean();
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    return true;
}

}  // namespace

Agent::Agent(AgentProfile profile, MessageBus& bus, TokenLedger& tokens, StepOptions options)
    : profile_(std::move(profile)), bus_(bus), tokens_(tokens), options_(options) {
    if (profile_.output_topic.empty()) throw ValidationError("agent " + profile_.agent_id + " needs an output topic");
    bus_.register_agent(profile_.agent_id, profile_.subscriptions);
}

void Agent::add_tool(const std::string& name, ToolHandler handler) {
    bool declared = false;
    for (const auto& a : profile_.actions) declared = declared || a.name == name;
    if (!declared) throw ValidationError("tool '" + name + "' is not in the action schema of " + id());
    handlers_[name] = std::move(handler);
}

void Agent::remember(const AgentMessage& m) {
    if (!seen_.insert(m.id).second) return;
    memory_.push_back(m);
    if (memory_.size() > options_.memory_cap) {
        const std::size_t keep = std::min(options_.preserved_preamble, options_.memory_cap);
        memory_.erase(memory_.begin() + static_cast<long>(keep));
    }
}

void Agent::ingest() {
    for (const auto& m : bus_.drain(id())) remember(m);
}

AgentMessage Agent::say(const std::vector<std::string>& topics, RoleMarker role, std::string content,
                        std::vector<ToolCall> calls, std::string tool_call_id) {
    AgentMessage m;
    m.sender = id();
    m.topics = topics;
    m.role = role;
    m.content = std::move(content);
    m.tool_calls = std::move(calls);
    m.tool_call_id = std::move(tool_call_id);
    bus_.publish(m);
    remember(m);
    return m;
}

ToolResult Agent::dispatch(const ToolCall& call) {
    const ToolDescriptor* desc = nullptr;
    for (const auto& a : profile_.actions)
        if (a.name == call.name) desc = &a;
    const auto h = handlers_.find(call.name);
    if (!desc || h == handlers_.end()) return {false, "unknown tool '" + call.name + "'"};
    if (!call.arguments.is_object()) return {false, "arguments for " + call.name + " must be a JSON object"};
    for (const auto& p : desc->params) {
        if (!call.arguments.contains(p.name)) {
            if (p.required) return {false, "missing required argument '" + p.name + "' for " + call.name};
            continue;
        }
        if (!type_matches(call.arguments[p.name], p.type))
            return {false, "argument '" + p.name + "' of " + call.name + " must be " + p.type};
    }
    try {
        return h->second(call.arguments);
    } catch (const std::exception& e) {
        return {false, e.what()};
    }
}

std::vector<AgentMessage> Agent::step(LlmBackend& backend) {
    ingest();
    std::vector<AgentMessage> emitted;
    for (int round = 0;; ++round) {
        CompletionRequest req;
        req.agent_id = id();
        req.system_text = render_sections(profile_);
        req.memory = memory_;
        req.tools = profile_.actions;
        req.prompt = assemble_prompt(profile_, memory_);

        std::optional<Completion> done;
        std::string causes;
        auto wait = options_.backoff;
        for (int attempt = 1; attempt <= options_.retries; ++attempt) {
            try {
                done = backend.complete(req);
                break;
            } catch (const std::exception& e) {
                causes += (causes.empty() ? "" : "; ") + std::string("attempt ") + std::to_string(attempt) + ": " + e.what();
                if (attempt < options_.retries && wait.count() > 0) {
                    std::this_thread::sleep_for(wait);
                    wait *= 2;
                }
            }
        }
        if (!done) {
            emitted.push_back(say({"system.error"}, RoleMarker::system,
                                  "backend failed after " + std::to_string(options_.retries) + " attempts: " + causes));
            return emitted;
        }
        tokens_.record_usage(id(), done->input_tokens, done->output_tokens);
        if (done->content.empty() && done->tool_calls.empty()) return emitted;

        emitted.push_back(say({profile_.output_topic}, RoleMarker::agent, done->content, done->tool_calls));
        bool failed = false;
        for (const auto& call : done->tool_calls) {
            const ToolResult r = dispatch(call);
            failed = failed || !r.ok;
            emitted.push_back(say({profile_.output_topic}, RoleMarker::tool,
                                  (r.ok ? "" : "error: ") + r.content, {}, call.id));
        }
        if (!failed || round >= options_.repair_rounds) return emitted;
        ingest();
    }
}

}  // namespace loadloop::agents
