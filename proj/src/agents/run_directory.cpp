#include <sstream>

#include "loadloop/agents/pipeline.hpp"

namespace loadloop::agents {

namespace fs = std::filesystem;

RunDirectory::RunDirectory(fs::path root) : root_(std::move(root)) {
    if (!root_.empty()) fs::create_directories(root_);
}

bool RunDirectory::exists(const std::string& name) const { return fs::exists(path(name)); }

void RunDirectory::write_text(const std::string& name, const std::string& text) const {
    const fs::path target = path(name);
    fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + tmp.string());
        f << text;
    }
    fs::rename(tmp, target);
}

void RunDirectory::write_json(const std::string& name, const Json& j) const { write_text(name, j.dump(2) + "\n"); }

void RunDirectory::append_line(const std::string& name, const std::string& line) const {
    const fs::path target = path(name);
    fs::create_directories(target.parent_path());
    std::ofstream f(target, std::ios::binary | std::ios::app);
    if (!f) throw Error("cannot append to " + target.string());
    f << line << '\n';
}

std::string RunDirectory::read_text(const std::string& name) const {
    std::ifstream f(path(name), std::ios::binary);
    if (!f) throw Error("cannot read " + path(name).string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Json RunDirectory::read_json(const std::string& name) const { return Json::parse(read_text(name)); }

std::vector<Json> RunDirectory::read_jsonl(const std::string& name) const {
    std::vector<Json> out;
    if (!exists(name)) return out;
    std::istringstream in(read_text(name));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::parse_error&) {
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw;
        }
    }
    return out;
}

ScriptedAnswers::ScriptedAnswers(std::map<std::string, std::vector<std::string>> answers,
                                 std::map<std::string, std::string> defaults)
    : answers_(std::move(answers)), defaults_(std::move(defaults)) {}

std::map<std::string, std::vector<std::string>> ScriptedAnswers::load(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot read answers file " + path.string());
    const Json j = Json::parse(f);
    if (!j.is_object()) throw ValidationError("answers file must hold an object of key -> replies");
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& [key, v] : j.items()) {
        if (v.is_string())
            out[key] = {v.get<std::string>()};
        else
            out[key] = v.get<std::vector<std::string>>();
    }
    return out;
}

std::string ScriptedAnswers::answer(const std::string& key, const std::string&) {
    std::lock_guard lock(mu_);
    const auto it = answers_.find(key);
    if (it != answers_.end() && !it->second.empty()) {
        std::size_t& n = used_[key];
        const std::string& out = it->second[std::min(n, it->second.size() - 1)];
        ++n;
        return out;
    }
    const auto d = defaults_.find(key);
    return d == defaults_.end() ? std::string() : d->second;
}

void QueuedAnswers::push(std::string text) {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(text));
}

std::string QueuedAnswers::answer(const std::string&, const std::string&) {
    std::lock_guard lock(mu_);
    if (queue_.empty()) return {};
    std::string out = std::move(queue_.front());
    queue_.pop_front();
    return out;
}

Json to_json(const PipelineConfig& c) {
    const auto& s = c.search;
    return Json{{"run_dir", c.run_dir.string()},
                {"dataset_path", c.dataset_path},
                {"interval", c.interval},
                {"horizon", c.horizon},
                {"metric", c.metric},
                {"search",
                 {{"max_trials", s.max_trials},
                  {"epsilon", s.epsilon ? Json(*s.epsilon) : Json(nullptr)},
                  {"init_samples", s.init_samples},
                  {"batch_size", s.batch_size},
                  {"seed", s.seed},
                  {"workers", s.workers}}},
                {"training",
                 {{"max_epochs", c.training.max_epochs},
                  {"batch_size", c.training.batch_size},
                  {"patience", c.training.patience}}},
                {"full_schema", c.full_schema},
                {"ratios", {c.ratios.train, c.ratios.val, c.ratios.test}},
                {"max_steps_per_stage", c.max_steps_per_stage},
                {"max_steps_per_guidance", c.max_steps_per_guidance}};
}

PipelineConfig pipeline_config_from_json(const Json& j) {
    PipelineConfig c;
    c.run_dir = j.value("run_dir", "");
    c.dataset_path = j.value("dataset_path", "");
    c.interval = j.value("interval", 0);
    c.horizon = j.value("horizon", 24);
    c.metric = j.value("metric", "mae");
    if (j.contains("search")) {
        const Json& s = j["search"];
        c.search.max_trials = s.value("max_trials", c.search.max_trials);
        if (s.contains("epsilon") && !s["epsilon"].is_null()) c.search.epsilon = s["epsilon"].get<double>();
        c.search.init_samples = s.value("init_samples", c.search.init_samples);
        c.search.batch_size = s.value("batch_size", c.search.batch_size);
        c.search.seed = s.value("seed", c.search.seed);
        c.search.workers = s.value("workers", c.search.workers);
    }
    if (j.contains("training")) {
        const Json& t = j["training"];
        c.training.max_epochs = t.value("max_epochs", c.training.max_epochs);
        c.training.batch_size = t.value("batch_size", c.training.batch_size);
        c.training.patience = t.value("patience", c.training.patience);
    }
    c.full_schema = j.value("full_schema", false);
    if (j.contains("ratios")) {
        const auto r = j["ratios"].get<std::vector<double>>();
        if (r.size() != 3) throw ValidationError("ratios needs three entries", "ratios");
        c.ratios = {r[0], r[1], r[2]};
    }
    c.max_steps_per_stage = j.value("max_steps_per_stage", c.max_steps_per_stage);
    c.max_steps_per_guidance = j.value("max_steps_per_guidance", c.max_steps_per_guidance);
    return c;
}

}  // namespace loadloop::agents
