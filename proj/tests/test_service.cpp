#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "loadloop/service/service.hpp"
#include "support/scratch.hpp"

// after Eigen: resolv.h defines _res
#include <httplib.h>

using namespace loadloop;
using namespace loadloop::service;

namespace {

const std::filesystem::path kData = LOADLOOP_TEST_DATA;

BackendFactory scripted() {
    return [] { return std::make_unique<agents::ScriptedBackend>(agents::ScriptedBackend::from_file(kData / "scripted_rules.json")); };
}

agents::PipelineConfig quick_defaults() {
    agents::PipelineConfig c;
    c.training.max_epochs = 4;
    return c;
}

// Server on an ephemeral port with its listen loop on a thread.
class LiveServer {
public:
    explicit LiveServer(SessionManager& sessions) : server_(sessions) {
        port_ = server_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { server_.listen(); });
        for (int i = 0; i < 200; ++i) {
            httplib::Client c("127.0.0.1", port_);
            if (c.Get("/sessions")) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
    ~LiveServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(120, 0);
        return c;
    }

private:
    Server server_;
    int port_ = 0;
    std::thread thread_;
};

Json body_of(const httplib::Result& r) {
    EXPECT_TRUE(r) << "request failed";
    return r ? Json::parse(r->body) : Json();
}

std::string wait_for_end(httplib::Client& c, const std::string& id) {
    for (int i = 0; i < 1200; ++i) {
        const std::string st = body_of(c.Get(("/sessions/" + id).c_str()))["stage"];
        if (st == "done" || st == "failed") return st;
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    return "timeout";
}

struct Frame {
    std::uint64_t id = 0;
    std::string event;
    Json data;
};

std::vector<Frame> parse_sse(const std::string& text) {
    std::vector<Frame> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto end = text.find("\n\n", pos);
        if (end == std::string::npos) break;
        std::istringstream block(text.substr(pos, end - pos));
        Frame f;
        std::string line;
        while (std::getline(block, line)) {
            if (line.rfind("id: ", 0) == 0) f.id = std::stoull(line.substr(4));
            else if (line.rfind("event: ", 0) == 0) f.event = line.substr(7);
            else if (line.rfind("data: ", 0) == 0) f.data = Json::parse(line.substr(6));
        }
        out.push_back(std::move(f));
        pos = end + 2;
    }
    return out;
}

// Drives a fresh session through preparation; returns its id.
std::string prepared_session(httplib::Client& c) {
    const auto created = c.Post("/sessions");
    EXPECT_EQ(created->status, 201);
    const std::string id = body_of(created)["session_id"];
    const std::string base = "/sessions/" + id;

    const auto up = c.Post((base + "/dataset").c_str(), scratch::slurp(kData / "synthetic.csv"), "text/csv");
    EXPECT_EQ(up->status, 200) << up->body;
    EXPECT_GT(body_of(up)["rows"].get<int>(), 1000);
    EXPECT_EQ(c.Put((base + "/semantics").c_str(), "{}", "application/json")->status, 200);
    const auto task = c.Put((base + "/task").c_str(), R"({"interval":0,"horizon":4})", "application/json");
    EXPECT_EQ(task->status, 200) << task->body;
    EXPECT_EQ(body_of(task)["horizon"], 4);
    const auto cleaned = c.Post((base + "/clean").c_str());
    EXPECT_EQ(cleaned->status, 200) << cleaned->body;
    EXPECT_TRUE(body_of(cleaned).contains("report"));
    EXPECT_EQ(c.Put((base + "/metric").c_str(), R"({"base":"absolute"})", "application/json")->status, 200);
    return id;
}

}  // namespace

TEST(RunConfig, ParsesSectionsAndResolvesPaths) {
    const auto rc = parse_run_config(R"(
[run]
dataset = "series.csv"
run_dir = "/tmp/abs"
stop_after = "optimize"
[task]
horizon = 6
[search]
max_trials = 40
init_samples = 10
batch_size = 5
epsilon = 0.01
seed = 9
[training]
max_epochs = 3
[backend]
kind = "scripted"
rules = "rules.json"
)",
                                     "/base");
    EXPECT_EQ(rc.pipeline.dataset_path, "/base/series.csv");
    EXPECT_EQ(rc.pipeline.run_dir, "/tmp/abs");
    EXPECT_EQ(rc.pipeline.stop_after, "optimize");
    EXPECT_EQ(rc.pipeline.horizon, 6);
    EXPECT_EQ(rc.pipeline.search.max_trials, 40u);
    EXPECT_EQ(rc.pipeline.search.batch_size, 5u);
    EXPECT_DOUBLE_EQ(*rc.pipeline.search.epsilon, 0.01);
    EXPECT_EQ(rc.pipeline.search.seed, 9u);
    EXPECT_EQ(rc.pipeline.training.max_epochs, 3);
    EXPECT_EQ(rc.backend.rules, "/base/rules.json");
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
    const std::string rules = "[backend]\nrules = \"r.json\"\n";
    try {
        parse_run_config("[search]\nmax_trails = 4\n" + rules);
        FAIL() << "typo accepted";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "search.max_trails");
    }
    EXPECT_THROW(parse_run_config("[task]\nhorizon = \"soon\"\n" + rules), ValidationError);
    EXPECT_THROW(parse_run_config("[backend]\nkind = \"carrier-pigeon\"\n"), ValidationError);
    EXPECT_THROW(parse_run_config("[backend]\nkind = \"scripted\"\n"), ValidationError);
    // K > Tr is invalid
    EXPECT_THROW(parse_run_config("[search]\nmax_trials = 5\ninit_samples = 10\n" + rules), Error);
}

TEST(RunConfig, BundledExampleLoads) {
    const auto rc = load_run_config(kData / "example.toml");
    EXPECT_TRUE(std::filesystem::exists(rc.pipeline.dataset_path));
    EXPECT_TRUE(std::filesystem::exists(rc.backend.rules));
    EXPECT_EQ(rc.pipeline.horizon, 4);
}

TEST(EventLogTest, DenseSequenceSurvivesReopen) {
    scratch::TempDir d;
    {
        EventLog log(d / "events.jsonl");
        EXPECT_EQ(log.append("a", {{"x", 1}}), 1u);
        EXPECT_EQ(log.append("b", {{"x", 2}}), 2u);
        EXPECT_EQ(log.append("c", {{"x", 3}}), 3u);
        EXPECT_EQ(log.since(1).size(), 2u);
        EXPECT_TRUE(log.since(3).empty());
        EXPECT_TRUE(log.wait_for(2, std::chrono::milliseconds(1)));
        EXPECT_FALSE(log.wait_for(3, std::chrono::milliseconds(20)));
    }
    {
        std::ofstream(d / "events.jsonl", std::ios::app) << R"({"seq":4,"ki)";
    }
    EventLog again(d / "events.jsonl");
    EXPECT_EQ(again.last_seq(), 3u);
    const auto all = again.since(0);
    ASSERT_EQ(all.size(), 3u);
    EXPECT_EQ(all[1].kind, "b");
    EXPECT_EQ(all[1].payload["x"], 2);
}

TEST(EventLogTest, WaiterWakesOnAppend) {
    scratch::TempDir d;
    EventLog log(d / "events.jsonl");
    std::thread t([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        log.append("late", Json::object());
    });
    EXPECT_TRUE(log.wait_for(0, std::chrono::seconds(10)));
    t.join();
}

TEST(SessionStageText, RoundTrips) {
    for (auto s : {SessionStage::created, SessionStage::preparing, SessionStage::optimizing, SessionStage::deploying,
                   SessionStage::done, SessionStage::failed})
        EXPECT_EQ(parse_session_stage(to_string(s)), s);
    EXPECT_THROW(parse_session_stage("paused"), ValidationError);
}

TEST(Http, ErrorStatuses) {
    scratch::TempDir d;
    SessionManager sessions(d.path(), scripted(), quick_defaults());
    LiveServer live(sessions);
    auto c = live.client();

    EXPECT_EQ(c.Get("/sessions/nope")->status, 404);
    const std::string id = body_of(c.Post("/sessions"))["session_id"];
    const std::string base = "/sessions/" + id;

    // nothing to steer yet
    const auto g = c.Post((base + "/guidance").c_str(), R"({"text":"focus on mlp"})", "application/json");
    EXPECT_EQ(g->status, 409);
    EXPECT_TRUE(body_of(g).contains("error"));
    EXPECT_EQ(c.Put((base + "/task").c_str(), R"({"horizon":4})", "application/json")->status, 409);
    EXPECT_EQ(c.Post((base + "/optimize").c_str(), "{}", "application/json")->status, 409);
    EXPECT_EQ(c.Post((base + "/deploy").c_str(), "{}", "application/json")->status, 409);

    const auto bad_csv = c.Post((base + "/dataset").c_str(), "not,a\ntime,series\n", "text/csv");
    EXPECT_EQ(bad_csv->status, 422);
    EXPECT_EQ(c.Post((base + "/dataset").c_str(), "", "text/csv")->status, 422);
    EXPECT_EQ(c.Post((base + "/chat").c_str(), "{oops", "application/json")->status, 422);
    EXPECT_EQ(c.Post((base + "/chat").c_str(), R"({"words":"hi"})", "application/json")->status, 422);
    EXPECT_EQ(c.Get((base + "/best").c_str())->status, 404);
}

TEST(Http, FullSessionLifecycle) {
    scratch::TempDir d;
    std::string id;
    std::size_t n_events = 0;
    {
        SessionManager sessions(d.path(), scripted(), quick_defaults());
        LiveServer live(sessions);
        auto c = live.client();
        id = prepared_session(c);
        const std::string base = "/sessions/" + id;

        const auto bad = c.Post((base + "/optimize").c_str(), R"({"Tr":5,"K":10})", "application/json");
        EXPECT_EQ(bad->status, 422) << bad->body;
        EXPECT_EQ(c.Post((base + "/optimize").c_str(), R"({"Tr":-1})", "application/json")->status, 422);

        const auto opt = c.Post((base + "/optimize").c_str(), R"({"Tr":5,"K":5,"B":5,"seed":2})", "application/json");
        ASSERT_EQ(opt->status, 202) << opt->body;
        EXPECT_EQ(body_of(opt)["settings"]["max_trials"], 5);
        ASSERT_EQ(wait_for_end(c, id), "done");

        const Json trials = body_of(c.Get((base + "/trials").c_str()));
        ASSERT_EQ(trials.size(), 5u);
        for (const auto& t : trials) EXPECT_EQ(t["iteration"], 0);
        const Json summary = body_of(c.Get((base + "/summary").c_str()));
        EXPECT_TRUE(summary["text"].is_string());
        const Json best = body_of(c.Get((base + "/best").c_str()));
        EXPECT_TRUE(best["loss"].is_number());
        // five trials are too few to rank dimensions
        const auto imp = c.Get((base + "/importance/linear").c_str());
        EXPECT_EQ(imp->status, 422);
        EXPECT_NE(body_of(imp)["error"].get<std::string>().find("at least 10"), std::string::npos);
        EXPECT_EQ(c.Get((base + "/importance/svm").c_str())->status, 404);
        const Json tokens = body_of(c.Get((base + "/tokens").c_str()));
        EXPECT_TRUE(tokens["text"].is_string());

        // a finished run already carries a forecast; deploy again at an explicit window and adjust it
        const Json fc = body_of(c.Post((base + "/deploy").c_str(), "{}", "application/json"));
        ASSERT_EQ(fc["raw"].size(), 4u);
        const auto adj = c.Post((base + "/postprocess").c_str(), R"({"kind":"time_scaling","steps":[0,1,2,3],"lambda":-0.1})",
                                "application/json");
        ASSERT_EQ(adj->status, 200) << adj->body;
        const Json after = body_of(adj);
        for (std::size_t i = 0; i < 4; ++i)
            EXPECT_NEAR(after["adjusted"][i].get<double>(), 0.9 * fc["adjusted"][i].get<double>(), 1e-9);
        EXPECT_EQ(c.Post((base + "/postprocess").c_str(), R"({"kind":"teleport"})", "application/json")->status, 422);
        EXPECT_EQ(c.Post((base + "/guidance").c_str(), R"({"text":"more mlp"})", "application/json")->status, 409);

        const auto sse = c.Get((base + "/events?after=0&follow=0").c_str());
        ASSERT_EQ(sse->status, 200);
        EXPECT_NE(sse->get_header_value("Content-Type").find("text/event-stream"), std::string::npos);
        const auto frames = parse_sse(sse->body);
        ASSERT_FALSE(frames.empty());
        std::set<std::string> kinds;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            EXPECT_EQ(frames[i].id, i + 1);
            EXPECT_EQ(frames[i].data["seq"], i + 1);
            EXPECT_EQ(frames[i].data["kind"], frames[i].event);
            kinds.insert(frames[i].event);
        }
        for (const char* k : {"stage_change", "trial_completed", "batch_completed", "forecast_ready"})
            EXPECT_TRUE(kinds.count(k)) << k;
        bool reached_done = false;
        for (const auto& f : frames)
            reached_done = reached_done || (f.event == "stage_change" && f.data["payload"]["stage"] == "done");
        EXPECT_TRUE(reached_done);
        EXPECT_EQ(frames.back().event, "forecast_ready");

        // resuming from a cursor only replays newer events
        httplib::Headers h{{"Last-Event-ID", std::to_string(frames.size() - 2)}};
        const auto tail = parse_sse(c.Get((base + "/events?follow=0").c_str(), h)->body);
        ASSERT_EQ(tail.size(), 2u);
        EXPECT_EQ(tail[0].id, frames.size() - 1);
        n_events = frames.size();

        const Json listed = body_of(c.Get("/sessions"));
        ASSERT_EQ(listed.size(), 1u);
        EXPECT_EQ(listed[0]["session_id"], id);
        sessions.get(id)->join();
    }

    // a new process over the same data directory sees the same session
    SessionManager reopened(d.path(), scripted(), quick_defaults());
    ASSERT_EQ(reopened.ids(), std::vector<std::string>{id});
    auto s = reopened.get(id);
    EXPECT_EQ(s->stage(), SessionStage::done);
    EXPECT_EQ(s->trials().size(), 5u);
    EXPECT_EQ(s->events().last_seq(), n_events);
    EXPECT_TRUE(s->best()["loss"].is_number());
    // the next session id does not collide
    EXPECT_NE(reopened.create()->id(), id);
}

TEST(Http, GuidanceWhileOptimizing) {
    scratch::TempDir d;
    SessionManager sessions(d.path(), scripted(), quick_defaults());
    LiveServer live(sessions);
    auto c = live.client();
    const std::string id = prepared_session(c);
    const std::string base = "/sessions/" + id;

    ASSERT_EQ(c.Post((base + "/optimize").c_str(), R"({"Tr":30,"K":5,"B":5,"seed":4})", "application/json")->status, 202);
    const auto g = c.Post((base + "/guidance").c_str(),
                          R"({"directives":[{"kind":"prune_space","exclude_types":["gbt"]}]})", "application/json");
    // the run may already be over on a fast machine
    if (g->status == 202) {
        EXPECT_EQ(body_of(g)["queued"], 1);
    } else {
        EXPECT_EQ(g->status, 409) << g->body;
    }
    EXPECT_EQ(c.Post((base + "/guidance").c_str(), R"({"directives":[{"kind":"warp"}]})", "application/json")->status,
              g->status == 202 && sessions.get(id)->stage() == SessionStage::optimizing ? 422 : 409);
    ASSERT_EQ(wait_for_end(c, id), "done");
    if (g->status == 202) {
        bool applied = false;
        for (const auto& e : sessions.get(id)->events().since(0))
            applied = applied || e.kind == "summary_updated" || e.kind == "guidance_applied";
        EXPECT_TRUE(applied);
    }
}

TEST(SessionReload, InFlightRunBecomesFailed) {
    scratch::TempDir d;
    const auto dir = d.path() / "sessions" / "s0001";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "session.json") << R"({"id":"s0001","stage":"optimizing"})";
    SessionManager sessions(d.path(), scripted(), quick_defaults());
    auto s = sessions.get("s0001");
    EXPECT_EQ(s->stage(), SessionStage::failed);
    const auto events = s->events().since(0);
    ASSERT_FALSE(events.empty());
    EXPECT_EQ(events.back().payload["stage"], "failed");
    EXPECT_THROW(sessions.get("s0002"), NotFound);
}
