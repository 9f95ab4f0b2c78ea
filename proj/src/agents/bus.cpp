#include <algorithm>
#include <chrono>

#include "loadloop/agents/agents.hpp"

namespace loadloop::agents {

std::string to_string(RoleMarker role) {
    switch (role) {
        case RoleMarker::user: return "user";
        case RoleMarker::agent: return "agent";
        case RoleMarker::tool: return "tool";
        case RoleMarker::system: return "system";
    }
    return "agent";
}

RoleMarker parse_role_marker(const std::string& text) {
    if (text == "user") return RoleMarker::user;
    if (text == "agent") return RoleMarker::agent;
    if (text == "tool") return RoleMarker::tool;
    if (text == "system") return RoleMarker::system;
    throw ValidationError("unknown role marker '" + text + "'", "role");
}

Json to_json(const AgentMessage& m, bool with_timestamp) {
    Json calls = Json::array();
    for (const auto& c : m.tool_calls) calls.push_back({{"id", c.id}, {"name", c.name}, {"arguments", c.arguments}});
    Json j{{"id", m.id},
           {"sender", m.sender},
           {"topics", m.topics},
           {"role", to_string(m.role)},
           {"content", m.content},
           {"tool_calls", calls},
           {"reply_to", m.reply_to ? Json(*m.reply_to) : Json(nullptr)},
           {"stage", m.stage}};
    if (!m.tool_call_id.empty()) j["tool_call_id"] = m.tool_call_id;
    if (with_timestamp) j["timestamp"] = m.timestamp;
    return j;
}

AgentMessage agent_message_from_json(const Json& j) {
    AgentMessage m;
    m.id = j.at("id").get<std::uint64_t>();
    m.sender = j.at("sender").get<std::string>();
    m.topics = j.at("topics").get<std::vector<std::string>>();
    m.role = parse_role_marker(j.at("role").get<std::string>());
    m.content = j.value("content", "");
    for (const auto& c : j.value("tool_calls", Json::array()))
        m.tool_calls.push_back({c.value("id", ""), c.at("name").get<std::string>(), c.value("arguments", Json::object())});
    if (j.contains("reply_to") && !j["reply_to"].is_null()) m.reply_to = j["reply_to"].get<std::uint64_t>();
    m.tool_call_id = j.value("tool_call_id", "");
    m.stage = j.value("stage", "");
    m.timestamp = j.value("timestamp", 0.0);
    return m;
}

MessageBus::MessageBus(std::vector<std::string> topics) : topics_(topics.begin(), topics.end()) {
    clock_ = [] { return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count(); };
}

void MessageBus::register_agent(const std::string& agent_id, const std::set<std::string>& subscriptions) {
    if (agent_id.empty()) throw ValidationError("agent id must not be empty", "agent_id");
    if (subs_.count(agent_id)) throw ValidationError("agent '" + agent_id + "' is already registered", "agent_id");
    if (subscriptions.empty()) throw ValidationError("agent '" + agent_id + "' needs at least one subscription", "subscriptions");
    for (const auto& t : subscriptions)
        if (!topics_.count(t)) throw ValidationError("unknown topic '" + t + "'", "subscriptions");
    subs_[agent_id] = subscriptions;
    order_.push_back(agent_id);
    inbox_[agent_id];
}

bool MessageBus::is_registered(const std::string& agent_id) const { return subs_.count(agent_id) > 0; }

const std::set<std::string>& MessageBus::subscriptions(const std::string& agent_id) const {
    const auto it = subs_.find(agent_id);
    if (it == subs_.end()) throw ValidationError("unknown agent '" + agent_id + "'", "agent_id");
    return it->second;
}

std::size_t MessageBus::publish(AgentMessage& m) {
    if (!is_registered(m.sender)) throw ValidationError("sender '" + m.sender + "' is not registered", "sender");
    if (m.topics.empty()) throw ValidationError("message needs at least one topic", "topics");
    for (const auto& t : m.topics)
        if (!topics_.count(t)) throw ValidationError("unknown topic '" + t + "'", "topics");
    m.id = pool_.size() + 1;
    if (m.stage.empty()) m.stage = stage_;
    m.timestamp = clock_();
    pool_.push_back(m);
    const std::size_t at = pool_.size() - 1;

    std::size_t delivered = 0;
    for (const auto& agent : order_) {
        const auto& subs = subs_.at(agent);
        const bool match = std::any_of(m.topics.begin(), m.topics.end(), [&](const std::string& t) { return subs.count(t) > 0; });
        if (!match) continue;
        inbox_[agent].push_back(at);
        ++delivered;
    }
    for (const auto& sink : sinks_) sink(pool_.back());
    if (delivered == 0) {
        std::string topics;
        for (const auto& t : m.topics) topics += (topics.empty() ? "" : ",") + t;
        warnings_.push_back({m.id, "message " + std::to_string(m.id) + " on {" + topics + "} has no subscriber"});
        for (const auto& sink : warning_sinks_) sink(warnings_.back());
    }
    return delivered;
}

std::size_t MessageBus::publish(const std::string& sender, const std::vector<std::string>& topics, RoleMarker role,
                                std::string content) {
    AgentMessage m;
    m.sender = sender;
    m.topics = topics;
    m.role = role;
    m.content = std::move(content);
    return publish(m);
}

void MessageBus::preload(const std::vector<AgentMessage>& messages) {
    for (AgentMessage m : messages) {
        m.id = pool_.size() + 1;
        pool_.push_back(std::move(m));
    }
}

std::vector<AgentMessage> MessageBus::drain(const std::string& agent_id) {
    auto& box = inbox_.at(agent_id);
    std::vector<AgentMessage> out;
    out.reserve(box.size());
    for (std::size_t i : box) out.push_back(pool_[i]);
    box.clear();
    return out;
}

std::size_t MessageBus::pending(const std::string& agent_id) const { return inbox_.at(agent_id).size(); }

bool MessageBus::has_foreign_pending(const std::string& agent_id) const {
    for (std::size_t i : inbox_.at(agent_id))
        if (pool_[i].sender != agent_id) return true;
    return false;
}

}  // namespace loadloop::agents
