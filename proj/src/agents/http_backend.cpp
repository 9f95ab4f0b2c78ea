#include <cstdlib>

#include <httplib.h>

#include "loadloop/agents/agents.hpp"

namespace loadloop::agents {

namespace {

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path;    // prefix without trailing slash
};

UrlParts split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw BackendError("backend URL needs a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    UrlParts p;
    p.origin = url.substr(0, slash);
    p.path = slash == std::string::npos ? "" : url.substr(slash);
    while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
    return p;
}

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

}  // namespace

HttpBackendConfig HttpBackendConfig::from_env() {
    HttpBackendConfig c;
    c.base_url = env_or("LOADLOOP_LLM_BASE_URL", "http://localhost:8000/v1");
    c.model = env_or("LOADLOOP_LLM_MODEL", "gpt-4o");
    c.api_key = env_or("LOADLOOP_LLM_API_KEY", "");
    return c;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

Json HttpBackend::build_request(const HttpBackendConfig& config, const CompletionRequest& request) {
    Json messages = Json::array();
    messages.push_back({{"role", "system"}, {"content", request.system_text}});
    for (const auto& m : request.memory) {
        const bool own = m.sender == request.agent_id && m.role == RoleMarker::agent;
        std::string content = own ? m.content : render_turn(m);
        if (own)
            for (const auto& c : m.tool_calls) content += "\ncall " + c.name + " " + c.arguments.dump();
        messages.push_back({{"role", own ? "assistant" : "user"}, {"content", content}});
    }
    Json tools = Json::array();
    for (const auto& t : request.tools)
        tools.push_back({{"type", "function"},
                         {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameter_schema()}}}});
    Json body{{"model", config.model}, {"messages", messages}};
    if (!tools.empty()) body["tools"] = tools;
    return body;
}

Completion HttpBackend::parse_response(const Json& body) {
    if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty())
        throw BackendError("response has no choices");
    const Json& msg = body["choices"][0].at("message");
    Completion c;
    if (msg.contains("content") && msg["content"].is_string()) c.content = msg["content"].get<std::string>();
    if (msg.contains("tool_calls") && msg["tool_calls"].is_array()) {
        for (const auto& t : msg["tool_calls"]) {
            const Json& fn = t.contains("function") ? t["function"] : t;
            ToolCall call;
            call.id = t.value("id", "");
            call.name = fn.at("name").get<std::string>();
            const Json& args = fn.contains("arguments") ? fn["arguments"] : Json::object();
            if (args.is_string()) {
                // malformed argument text is passed through for the agent's repair round
                try {
                    call.arguments = Json::parse(args.get<std::string>());
                } catch (const Json::exception&) {
                    call.arguments = args;
                }
            } else {
                call.arguments = args;
            }
            c.tool_calls.push_back(std::move(call));
        }
    }
    if (body.contains("usage") && body["usage"].is_object()) {
        c.input_tokens = body["usage"].value("prompt_tokens", std::uint64_t{0});
        c.output_tokens = body["usage"].value("completion_tokens", std::uint64_t{0});
    }
    return c;
}

Completion HttpBackend::complete(const CompletionRequest& request) {
    const UrlParts url = split_url(config_.base_url);
    httplib::Client client(url.origin);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    const std::string body = build_request(config_, request).dump();
    auto res = client.Post(url.path + "/chat/completions", headers, body, "application/json");
    if (!res) throw BackendError("request to " + config_.base_url + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw BackendError("backend returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    try {
        Completion c = parse_response(Json::parse(res->body));
        if (c.input_tokens == 0 && c.output_tokens == 0) {
            c.input_tokens = approximate_tokens(request.prompt);
            c.output_tokens = approximate_tokens(c.content);
        }
        return c;
    } catch (const Json::exception& e) {
        throw BackendError(std::string("unparseable backend response: ") + e.what());
    }
}

}  // namespace loadloop::agents
