#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "loadloop/agents/agents.hpp"
#include "loadloop/agents/pipeline.hpp"
#include "loadloop/core/json.hpp"

namespace httplib {
class Server;
}

namespace loadloop::service {

using loadloop::to_json;

// ---- run configuration --------------------------------------------------

struct BackendConfig {
    std::string kind = "scripted";  // scripted or http
    std::filesystem::path rules;    // scripted completion table
    agents::HttpBackendConfig http = agents::HttpBackendConfig::from_env();
};

struct RunConfig {
    agents::PipelineConfig pipeline;
    BackendConfig backend;
    std::optional<std::filesystem::path> answers;
};

// Sectioned key = value file ([run], [task], [search], [training], [backend]). Relative paths are
// resolved against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = ".");

std::unique_ptr<agents::LlmBackend> make_backend(const BackendConfig& config);

// ---- events -------------------------------------------------------------

struct Event {
    std::uint64_t seq = 0;
    std::string kind;
    Json payload;
    double time = 0.0;  // unix seconds; kept out of the payload
};

Json to_json(const Event& event);
Event event_from_json(const Json& j);

// Append-only, persisted, dense sequence numbers starting at 1.
class EventLog {
public:
    explicit EventLog(std::filesystem::path file);

    std::uint64_t append(const std::string& kind, Json payload);
    std::vector<Event> since(std::uint64_t after) const;
    std::uint64_t last_seq() const;
    // Blocks until an event newer than `after` exists or the timeout passes.
    bool wait_for(std::uint64_t after, std::chrono::milliseconds timeout) const;

private:
    std::filesystem::path file_;
    std::vector<Event> events_;
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
};

// ---- sessions -----------------------------------------------------------

enum class SessionStage { created, preparing, optimizing, deploying, done, failed };
std::string to_string(SessionStage stage);
SessionStage parse_session_stage(const std::string& text);

class StageConflict : public Error {
public:
    using Error::Error;
};

class NotFound : public Error {
public:
    using Error::Error;
};

using BackendFactory = std::function<std::unique_ptr<agents::LlmBackend>()>;

struct OptimizeRequest {
    std::size_t max_trials = 60;
    std::size_t init_samples = 20;
    std::size_t batch_size = 10;
    std::optional<double> epsilon;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

class Session {
public:
    // Opens (or reloads) the session stored under `dir`.
    Session(std::string id, std::filesystem::path dir, BackendFactory backends, agents::PipelineConfig defaults);
    ~Session();

    const std::string& id() const { return id_; }
    const std::filesystem::path& dir() const { return dir_; }
    SessionStage stage() const;
    EventLog& events() { return events_; }
    Json describe() const;

    Json upload_dataset(const std::string& csv);
    Json put_semantics(const Json& body);
    Json put_task(const Json& body);
    Json clean();
    Json put_metric(const Json& body);
    Json start_optimization(const OptimizeRequest& request);
    Json guidance(const Json& body);
    Json deploy(const Json& body);
    Json postprocess(const Json& body);
    Json chat_post(const std::string& text);
    Json chat_log() const;

    // Read-only views rebuilt from the run directory.
    Json trials() const;
    Json summary() const;
    Json importance(const std::string& model_type) const;
    Json best() const;
    Json tokens() const;

    // Waits for a background optimization to finish.
    void join();

private:
    void set_stage(SessionStage stage);
    void on_event(const agents::PipelineEvent& event);
    void require(bool ok, const std::string& why) const;
    void persist() const;

    std::string id_;
    std::filesystem::path dir_;
    BackendFactory backends_;
    std::unique_ptr<agents::LlmBackend> backend_;
    agents::QueuedAnswers answers_;
    EventLog events_;
    std::unique_ptr<agents::Pipeline> pipeline_;
    SessionStage stage_ = SessionStage::created;
    mutable std::mutex mu_;          // stage and session record
    std::mutex control_;             // serializes control endpoints
    std::thread worker_;
    std::atomic<bool> running_{false};
};

class SessionManager {
public:
    SessionManager(std::filesystem::path data_dir, BackendFactory backends, agents::PipelineConfig defaults = {});

    std::shared_ptr<Session> create();
    std::shared_ptr<Session> get(const std::string& id) const;  // throws NotFound
    std::vector<std::string> ids() const;

private:
    std::filesystem::path root_;
    BackendFactory backends_;
    agents::PipelineConfig defaults_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    mutable std::mutex mu_;
};

// ---- HTTP ---------------------------------------------------------------

class Server {
public:
    explicit Server(SessionManager& sessions);
    ~Server();

    // Binds to `port` (0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    // Serves until stop(); call after bind().
    void listen();
    void stop();
    SessionManager& sessions() { return sessions_; }

private:
    void routes();

    SessionManager& sessions_;
    std::unique_ptr<httplib::Server> http_;
};

}  // namespace loadloop::service
