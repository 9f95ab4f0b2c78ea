#include <algorithm>
#include <cctype>

#include "loadloop/agents/agents.hpp"

namespace loadloop::agents {

namespace {

constexpr const char* kGuidanceInstructions =
    "Translate the operator's guidance into search directives. Reply with JSON only: "
    "{\"directives\": [...]} where each directive is one of\n"
    "  {\"kind\": \"prune_space\", \"exclude_types\": [type...], \"restrict\": [{\"model_type\": type or \"*\", "
    "\"dim\": name, \"low\": x, \"high\": y, \"choices\": [...]}]}\n"
    "  {\"kind\": \"allocate\", \"allocation\": {type: count}}\n"
    "  {\"kind\": \"inject\", \"configs\": [{\"model_type\": type, \"params\": {dim: value}}]}\n"
    "Reply {\"directives\": []} when the text asks for no change.";

std::string strip_fences(std::string s) {
    const auto open = s.find("```");
    if (open == std::string::npos) return s;
    auto start = s.find('\n', open);
    const auto close = s.rfind("```");
    if (start == std::string::npos || close <= start) return s;
    return s.substr(start + 1, close - start - 1);
}

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

std::vector<optimizer::GuidanceDirective> parse_directive_list(const Json& j) {
    const Json* list = &j;
    if (j.is_object()) {
        if (!j.contains("directives")) return {optimizer::guidance_directive_from_json(j)};
        list = &j["directives"];
    }
    if (!list->is_array()) throw ValidationError("directives must be a list", "directives");
    std::vector<optimizer::GuidanceDirective> out;
    for (const auto& d : *list) {
        try {
            out.push_back(optimizer::guidance_directive_from_json(d));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("malformed directive: ") + e.what(), "directives");
        }
    }
    return out;
}

GuidanceParse parse_guidance(const std::string& user_text, const optimizer::TrialSummary& summary, LlmBackend& backend,
                             TokenLedger* tokens, const std::string& agent_id) {
    GuidanceParse result;
    if (blank(user_text)) return result;

    CompletionRequest req;
    req.agent_id = agent_id;
    req.system_text = std::string(kGuidanceInstructions) + "\n\n## Search status\n" + summary.render();
    AgentMessage ask;
    ask.id = 1;
    ask.sender = "user";
    ask.topics = {"user.io"};
    ask.role = RoleMarker::user;
    ask.content = user_text;
    ask.stage = "guidance";
    req.memory.push_back(ask);

    std::string problem;
    for (int round = 0; round < 2; ++round) {
        req.prompt = req.system_text;
        for (const auto& m : req.memory) req.prompt += "\n" + render_turn(m);
        Completion c;
        try {
            c = backend.complete(req);
        } catch (const std::exception& e) {
            problem = e.what();
            break;
        }
        if (tokens) tokens->record_usage(agent_id, c.input_tokens, c.output_tokens);
        try {
            result.directives = parse_directive_list(Json::parse(strip_fences(c.content)));
            return result;
        } catch (const std::exception& e) {
            problem = e.what();
        }
        AgentMessage said;
        said.id = req.memory.back().id + 1;
        said.sender = agent_id;
        said.topics = {"model.optimize"};
        said.content = c.content;
        said.stage = "guidance";
        AgentMessage fix;
        fix.id = said.id + 1;
        fix.sender = "system";
        fix.topics = {"model.optimize"};
        fix.role = RoleMarker::system;
        fix.content = "The reply is not a valid directive list (" + problem + "). Reply with corrected JSON only.";
        fix.stage = "guidance.repair";
        req.memory.push_back(said);
        req.memory.push_back(fix);
    }
    result.directives.clear();
    result.clarification = "I could not turn \"" + user_text + "\" into a search directive (" + problem +
                           "). Try e.g. \"exclude gbt\", \"allocate 5 trials to mlp\" or \"try mlp with learning rate 0.001\".";
    return result;
}

}  // namespace loadloop::agents
