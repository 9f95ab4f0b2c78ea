#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "loadloop/service/service.hpp"

namespace loadloop::service {

namespace fs = std::filesystem;

namespace {

bool as_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("expected true or false for " + key, key);
}

template <class T>
T as_number(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        T out{};
        if constexpr (std::is_floating_point_v<T>)
            out = static_cast<T>(std::stod(v, &used));
        else
            out = static_cast<T>(std::stoll(v, &used));
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ValidationError("expected a number for " + key + ", got '" + v + "'", key);
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
    std::istringstream in(text);
    CLI::ConfigTOML parser;
    RunConfig rc;
    agents::PipelineConfig& p = rc.pipeline;
    auto resolve = [&](const std::string& v) { return fs::path(v).is_absolute() || v.empty() ? fs::path(v) : base_dir / v; };

    for (const auto& item : parser.from_config(in)) {
        if (item.name == "++" || item.name == "--") continue;
        std::string key;
        for (const auto& part : item.parents) key += part + ".";
        key += item.name;
        const std::string v = item.inputs.empty() ? std::string() : item.inputs.front();

        if (key == "run.dataset") p.dataset_path = resolve(v).string();
        else if (key == "run.run_dir") p.run_dir = resolve(v);
        else if (key == "run.answers") rc.answers = resolve(v);
        else if (key == "run.stop_after") p.stop_after = v;
        else if (key == "task.interval") p.interval = as_number<int>(v, key);
        else if (key == "task.horizon") p.horizon = as_number<int>(v, key);
        else if (key == "task.metric") p.metric = v;
        else if (key == "search.max_trials") p.search.max_trials = as_number<std::size_t>(v, key);
        else if (key == "search.init_samples") p.search.init_samples = as_number<std::size_t>(v, key);
        else if (key == "search.batch_size") p.search.batch_size = as_number<std::size_t>(v, key);
        else if (key == "search.epsilon") p.search.epsilon = as_number<double>(v, key);
        else if (key == "search.seed") p.search.seed = as_number<std::uint64_t>(v, key);
        else if (key == "search.workers") p.search.workers = as_number<std::size_t>(v, key);
        else if (key == "search.full_schema") p.full_schema = as_bool(v, key);
        else if (key == "training.max_epochs") p.training.max_epochs = as_number<int>(v, key);
        else if (key == "training.batch_size") p.training.batch_size = as_number<int>(v, key);
        else if (key == "training.patience") p.training.patience = as_number<int>(v, key);
        else if (key == "backend.kind") rc.backend.kind = v;
        else if (key == "backend.rules") rc.backend.rules = resolve(v);
        else if (key == "backend.base_url") rc.backend.http.base_url = v;
        else if (key == "backend.model") rc.backend.http.model = v;
        else if (key == "backend.api_key") rc.backend.http.api_key = v;
        else if (key == "backend.timeout") rc.backend.http.timeout_seconds = as_number<double>(v, key);
        else throw ValidationError("unknown config key '" + key + "'", key);
    }
    if (rc.backend.kind != "scripted" && rc.backend.kind != "http")
        throw ValidationError("backend.kind must be scripted or http", "backend.kind");
    if (rc.backend.kind == "scripted" && rc.backend.rules.empty())
        throw ValidationError("a scripted backend needs backend.rules", "backend.rules");
    p.search.validate();
    return rc;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

std::unique_ptr<agents::LlmBackend> make_backend(const BackendConfig& config) {
    if (config.kind == "http") return std::make_unique<agents::HttpBackend>(config.http);
    return std::make_unique<agents::ScriptedBackend>(agents::ScriptedBackend::from_file(config.rules));
}

}  // namespace loadloop::service
