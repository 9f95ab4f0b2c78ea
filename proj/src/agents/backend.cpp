#include <fstream>
#include <sstream>

#include "loadloop/agents/agents.hpp"

namespace loadloop::agents {

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (std::size_t at = s.find(from); at != std::string::npos; at = s.find(from, at + to.size())) s.replace(at, from.size(), to);
}

struct Placeholders {
    std::string last_user_message;
    std::string last_message;
};

Json substitute(const Json& j, const Placeholders& p) {
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        replace_all(s, "{{last_user_message}}", p.last_user_message);
        replace_all(s, "{{last_message}}", p.last_message);
        return s;
    }
    if (j.is_array()) {
        Json out = Json::array();
        for (const auto& e : j) out.push_back(substitute(e, p));
        return out;
    }
    if (j.is_object()) {
        Json out = Json::object();
        for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = substitute(it.value(), p);
        return out;
    }
    return j;
}

Completion completion_from_json(const Json& j) {
    Completion c;
    c.content = j.value("content", "");
    for (const auto& t : j.value("tool_calls", Json::array()))
        c.tool_calls.push_back({t.value("id", ""), t.at("name").get<std::string>(), t.value("arguments", Json::object())});
    return c;
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules) : rules_(std::move(rules)), used_(rules_.size(), 0) {}

ScriptedBackend ScriptedBackend::from_json(const Json& j) {
    std::vector<ScriptRule> rules;
    for (const auto& r : j.at("rules")) {
        ScriptRule rule;
        rule.agent = r.at("agent").get<std::string>();
        rule.stage = r.value("stage", "");
        rule.from = r.value("from", "");
        rule.contains = r.value("contains", "");
        if (r.contains("responses"))
            for (const auto& c : r["responses"]) rule.responses.push_back(completion_from_json(c));
        else
            rule.responses.push_back(completion_from_json(r.at("response")));
        if (rule.responses.empty()) throw ValidationError("scripted rule for " + rule.agent + " has no responses");
        rules.push_back(std::move(rule));
    }
    return ScriptedBackend(std::move(rules));
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot read scripted rules " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_json(Json::parse(ss.str()));
}

Completion ScriptedBackend::complete(const CompletionRequest& request) {
    std::lock_guard lock(mu_);
    ++calls_;
    const AgentMessage* latest = request.memory.empty() ? nullptr : &request.memory.back();
    Placeholders ph;
    for (auto it = request.memory.rbegin(); it != request.memory.rend(); ++it) {
        if (ph.last_message.empty() && it->sender != request.agent_id) ph.last_message = it->content;
        if (it->role == RoleMarker::user) {
            ph.last_user_message = it->content;
            break;
        }
    }
    const std::string stage = latest ? latest->stage : "";

    Completion out;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const ScriptRule& r = rules_[i];
        if (r.agent != request.agent_id) continue;
        if (!r.stage.empty() && r.stage != stage) continue;
        if (!r.from.empty() && (!latest || latest->sender != r.from)) continue;
        if (!r.contains.empty() && (!latest || latest->content.find(r.contains) == std::string::npos)) continue;
        const std::size_t k = std::min(used_[i], r.responses.size() - 1);
        ++used_[i];
        const Completion& c = r.responses[k];
        out.content = substitute(Json(c.content), ph).get<std::string>();
        for (std::size_t t = 0; t < c.tool_calls.size(); ++t) {
            ToolCall call = c.tool_calls[t];
            call.arguments = substitute(call.arguments, ph);
            if (call.id.empty()) call.id = "call_" + std::to_string(calls_) + "_" + std::to_string(t);
            out.tool_calls.push_back(std::move(call));
        }
        break;
    }
    // unmatched prompts get an empty completion: the agent stays silent
    std::string emitted = out.content;
    for (const auto& c : out.tool_calls) emitted += " " + c.name + " " + c.arguments.dump();
    out.input_tokens = approximate_tokens(request.prompt);
    out.output_tokens = approximate_tokens(emitted);
    return out;
}

}  // namespace loadloop::agents
