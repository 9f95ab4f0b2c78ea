#include <sstream>

#include "loadloop/agents/agents.hpp"

namespace loadloop::agents {

Json ToolDescriptor::parameter_schema() const {
    Json props = Json::object();
    Json required = Json::array();
    for (const auto& p : params) {
        props[p.name] = {{"type", p.type}, {"description", p.description}};
        if (p.required) required.push_back(p.name);
    }
    return {{"type", "object"}, {"properties", props}, {"required", required}};
}

std::string memory_preamble() {
    return "All messages you receive, whatever their source, are kept in one shared buffer below in arrival order.\n"
           "Each turn is tagged with a role marker: [user] for the human, [agent] for agents, [tool] for tool\n"
           "results and [system] for pipeline notices. Older turns may be dropped when the buffer is full.";
}

std::string render_sections(const AgentProfile& p) {
    std::ostringstream out;
    out << "## Profile\n" << p.profile_text << "\n\n";
    out << "## Memory\n" << memory_preamble() << "\n\n";
    out << "## Workflow\n" << p.workflow_text << "\n\n";
    out << "## Actions\n";
    if (p.actions.empty()) out << "(none)\n";
    for (const auto& a : p.actions) {
        out << "- " << a.name << "(";
        for (std::size_t i = 0; i < a.params.size(); ++i) {
            const auto& q = a.params[i];
            out << (i ? ", " : "") << q.name << ": " << q.type << (q.required ? "" : "?");
        }
        out << "): " << a.description << "\n";
    }
    return out.str();
}

std::string render_turn(const AgentMessage& m) {
    std::ostringstream out;
    out << "[" << to_string(m.role) << "] " << m.sender << " -> ";
    for (std::size_t i = 0; i < m.topics.size(); ++i) out << (i ? "," : "") << m.topics[i];
    out << ": " << m.content;
    for (const auto& c : m.tool_calls) out << "\n  call " << c.name << " " << c.arguments.dump();
    return out.str();
}

std::string assemble_prompt(const AgentProfile& profile, const std::vector<AgentMessage>& memory) {
    std::string out = render_sections(profile);
    if (memory.empty()) return out;
    out += "\n## Conversation\n";
    for (const auto& m : memory) {
        out += render_turn(m);
        out += '\n';
    }
    return out;
}

}  // namespace loadloop::agents
