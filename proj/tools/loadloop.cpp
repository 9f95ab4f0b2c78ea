#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "loadloop/agents/pipeline.hpp"
#include "loadloop/service/service.hpp"

namespace fs = std::filesystem;
using namespace loadloop;

namespace {

service::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int run_command(const fs::path& config_path, const std::string& run_dir, const std::string& stop_after) {
    if (!fs::exists(config_path)) {
        std::cerr << "config file not found: " << config_path << "\n";
        return 2;
    }
    service::RunConfig rc = service::load_run_config(config_path);
    if (!run_dir.empty()) rc.pipeline.run_dir = run_dir;
    if (!stop_after.empty()) rc.pipeline.stop_after = stop_after;
    if (rc.pipeline.run_dir.empty()) {
        std::cerr << "no run directory: set run.run_dir or pass --run-dir\n";
        return 2;
    }
    if (rc.pipeline.dataset_path.empty() || !fs::is_regular_file(rc.pipeline.dataset_path)) {
        std::cerr << "dataset not found: " << rc.pipeline.dataset_path << "\n";
        return 2;
    }

    auto backend = service::make_backend(rc.backend);
    agents::ScriptedAnswers answers(rc.answers ? agents::ScriptedAnswers::load(*rc.answers)
                                               : std::map<std::string, std::vector<std::string>>{},
                                    {{"dataset_path", rc.pipeline.dataset_path},
                                     {"semantics", "yes"},
                                     {"task", "interval " + std::to_string(rc.pipeline.interval) + " horizon " +
                                                  std::to_string(rc.pipeline.horizon)},
                                     {"metric", rc.pipeline.metric},
                                     {"postprocess", "none"}});
    agents::Pipeline pipeline(rc.pipeline, *backend, answers, [](const agents::PipelineEvent& e) {
        if (e.kind == "stage_change") std::cerr << "stage: " << e.payload.value("stage", "") << "\n";
        if (e.kind == "batch_completed")
            std::cerr << "  trials " << e.payload.value("trials", 0) << ", best "
                      << (e.payload["best_loss"].is_null() ? std::string("-") : e.payload["best_loss"].dump()) << "\n";
        if (e.kind == "warning") std::cerr << "warning: " << e.payload.dump() << "\n";
    });
    const auto out = pipeline.run();
    if (!out.error.empty()) {
        std::cerr << "run failed: " << out.error << "\n";
        return 1;
    }
    std::cout << "run directory: " << rc.pipeline.run_dir.string() << "\n";
    std::cout << (out.completed ? "completed" : "stopped after " + out.last_stage) << "\n";
    return 0;
}

int replay_command(const fs::path& run_dir) {
    agents::RunDirectory dir(run_dir);
    if (!dir.exists("trials.jsonl")) {
        std::cerr << "no trials log in " << run_dir << "\n";
        return 2;
    }
    std::vector<optimizer::TrialRecord> records;
    for (const auto& j : dir.read_jsonl("trials.jsonl")) records.push_back(optimizer::trial_record_from_json(j));
    const optimizer::Ledger ledger(std::move(records));
    std::size_t batch = 10;
    if (dir.exists("config.json")) batch = agents::pipeline_config_from_json(dir.read_json("config.json")).search.batch_size;

    std::cout << optimizer::summarize_trials(ledger, batch).render() << "\n";
    const auto space = dir.exists("space.json") ? optimizer::search_space_from_json(dir.read_json("space.json"))
                                                : optimizer::default_search_space();
    for (const auto& type : space.types) {
        try {
            const auto imp = optimizer::hyperparameter_importance(ledger, type);
            std::cout << "importance " << type.model_type << ":";
            for (std::size_t i = 0; i < imp.size() && i < 5; ++i)
                std::cout << " " << imp[i].first << "=" << imp[i].second;
            std::cout << "\n";
        } catch (const ValidationError&) {
            // fewer than ten completed trials of this type
        }
    }
    if (dir.exists("best.json")) std::cout << "best: " << dir.read_json("best.json").dump() << "\n";
    if (dir.exists("forecasts/forecast.json")) {
        const auto f = dir.read_json("forecasts/forecast.json");
        if (f.contains("scores")) std::cout << "forecast scores: " << f["scores"].dump() << "\n";
    }
    if (dir.exists("tokens.json")) {
        agents::TokenLedger tokens;
        tokens.restore(dir.read_json("tokens.json"));
        std::cout << tokens.report().render();
    }
    return 0;
}

int serve_command(const fs::path& data_dir, int port, const std::string& host, const std::string& config_path,
                  const std::string& rules) {
    service::BackendConfig backend;
    agents::PipelineConfig defaults;
    if (!config_path.empty()) {
        const auto rc = service::load_run_config(config_path);
        backend = rc.backend;
        defaults = rc.pipeline;
    }
    if (!rules.empty()) {
        backend.kind = "scripted";
        backend.rules = rules;
    }
    if (backend.kind == "scripted" && backend.rules.empty()) {
        std::cerr << "serve needs --rules or a config with a backend section\n";
        return 2;
    }
    service::SessionManager sessions(data_dir, [backend] { return service::make_backend(backend); }, defaults);
    service::Server server(sessions);
    const int bound = server.bind(host, port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << host << ":" << bound << "\n" << std::flush;
    server.listen();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"loadloop: agent-driven load forecasting workbench"};
    app.require_subcommand(1);

    std::string config, run_dir, stop_after;
    auto* run = app.add_subcommand("run", "Run the whole pipeline headless");
    run->add_option("--config", config, "run configuration file")->required();
    run->add_option("--run-dir", run_dir, "override run.run_dir");
    run->add_option("--stop-after", stop_after, "stop once this stage completes");

    std::string replay_dir;
    auto* replay = app.add_subcommand("replay", "Re-render summaries from a run directory");
    replay->add_option("--run-dir", replay_dir, "run directory")->required();

    std::string data_dir = "data-dir", host = "127.0.0.1", serve_config, rules;
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Start the HTTP service");
    serve->add_option("--port", port, "port (0 picks a free one)");
    serve->add_option("--host", host, "bind address");
    serve->add_option("--data-dir", data_dir, "where sessions are stored");
    serve->add_option("--config", serve_config, "config file supplying backend and defaults");
    serve->add_option("--rules", rules, "scripted backend rules");

    std::string out = "synthetic.csv";
    int days = 56;
    unsigned long long seed = 7;
    auto* generate = app.add_subcommand("generate", "Write the synthetic hourly dataset");
    generate->add_option("--out", out, "output CSV");
    generate->add_option("--days", days, "number of days");
    generate->add_option("--seed", seed, "noise seed");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return run_command(config, run_dir, stop_after);
        if (*replay) return replay_command(replay_dir);
        if (*serve) return serve_command(data_dir, port, host, serve_config, rules);
        if (*generate) {
            dataset::SyntheticOptions opt;
            opt.days = days;
            opt.seed = seed;
            std::ofstream f(out, std::ios::binary);
            if (!f) {
                std::cerr << "cannot write " << out << "\n";
                return 2;
            }
            f << dataset::generate_synthetic_csv(opt);
            std::cout << "wrote " << out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
