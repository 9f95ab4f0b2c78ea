#include <chrono>
#include <fstream>
#include <sstream>

#include "loadloop/service/service.hpp"

namespace loadloop::service {

namespace {

double unix_now() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

}  // namespace

Json to_json(const Event& e) { return Json{{"seq", e.seq}, {"kind", e.kind}, {"payload", e.payload}, {"time", e.time}}; }

Event event_from_json(const Json& j) {
    return Event{j.at("seq").get<std::uint64_t>(), j.at("kind").get<std::string>(), j.at("payload"), j.value("time", 0.0)};
}

EventLog::EventLog(std::filesystem::path file) : file_(std::move(file)) {
    std::ifstream in(file_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            events_.push_back(event_from_json(Json::parse(line)));
        } catch (const Json::exception&) {
            break;  // torn tail after a crash
        }
    }
}

std::uint64_t EventLog::append(const std::string& kind, Json payload) {
    std::lock_guard lock(mu_);
    Event e{events_.size() + 1, kind, std::move(payload), unix_now()};
    {
        std::ofstream out(file_, std::ios::binary | std::ios::app);
        out << to_json(e).dump() << '\n';
    }
    events_.push_back(std::move(e));
    cv_.notify_all();
    return events_.back().seq;
}

std::vector<Event> EventLog::since(std::uint64_t after) const {
    std::lock_guard lock(mu_);
    if (after >= events_.size()) return {};
    return {events_.begin() + static_cast<long>(after), events_.end()};
}

std::uint64_t EventLog::last_seq() const {
    std::lock_guard lock(mu_);
    return events_.size();
}

bool EventLog::wait_for(std::uint64_t after, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return events_.size() > after; });
}

}  // namespace loadloop::service
