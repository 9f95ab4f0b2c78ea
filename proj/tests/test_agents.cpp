#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "loadloop/agents/roles.hpp"
#include "support/scratch.hpp"

using namespace loadloop;
using namespace loadloop::agents;

namespace {

const std::filesystem::path kData = LOADLOOP_TEST_DATA;
const std::filesystem::path kFixtures = LOADLOOP_TEST_FIXTURES;

AgentProfile toy_profile(std::string id = "toy") {
    AgentProfile p;
    p.agent_id = std::move(id);
    p.profile_text = "You are a toy agent.";
    p.workflow_text = "1. Read the request.\n2. Call echo.";
    p.actions = {ToolDescriptor{"echo", "Repeat a word", {ToolParam{"word", "string", "the word", true},
                                                         ToolParam{"times", "integer", "repeat count", false}}}};
    p.subscriptions = {"task.prepare"};
    p.output_topic = "task.status";
    return p;
}

Completion says(std::string content, std::vector<ToolCall> calls = {}) {
    Completion c;
    c.content = std::move(content);
    c.tool_calls = std::move(calls);
    c.input_tokens = 10;
    c.output_tokens = 2;
    return c;
}

// Backend replaying a fixed list of completions, or throwing when told to.
class ListBackend : public LlmBackend {
public:
    std::vector<Completion> replies;
    int failures = 0;
    std::size_t calls = 0;
    std::vector<CompletionRequest> requests;

    Completion complete(const CompletionRequest& request) override {
        requests.push_back(request);
        ++calls;
        if (failures > 0) {
            --failures;
            throw BackendError("connection refused");
        }
        const std::size_t k = std::min(calls - 1, replies.size() - 1);
        return replies[k];
    }
};

optimizer::TrialSummary summary_of(std::map<std::string, std::size_t> counts, std::string trend) {
    optimizer::TrialSummary s;
    for (const auto& [type, n] : counts) {
        s.per_type[type].count = n;
        s.total += n;
    }
    s.trend = std::move(trend);
    return s;
}

}  // namespace

// ---- bus -------------------------------------------------------------------

TEST(Bus, DeliveryCountsAndDedup) {
    MessageBus bus;
    bus.register_agent("a", {"task.prepare"});
    bus.register_agent("b", {"task.prepare", "model.optimize"});
    bus.register_agent("c", {"user.io"});
    EXPECT_EQ(bus.publish("c", {"task.prepare"}, RoleMarker::agent, "hi"), 2u);
    EXPECT_EQ(bus.publish("a", {"task.prepare", "model.optimize"}, RoleMarker::agent, "both"), 2u);
    EXPECT_EQ(bus.drain("b").size(), 2u);
    EXPECT_EQ(bus.drain("a").size(), 2u);  // the sender hears its own subscribed topic

    EXPECT_EQ(bus.publish("a", {"deploy.forecast"}, RoleMarker::agent, "nobody"), 0u);
    ASSERT_EQ(bus.warnings().size(), 1u);
    EXPECT_EQ(bus.warnings()[0].message_id, 3u);
    EXPECT_EQ(bus.pool().size(), 3u);  // retained anyway

    EXPECT_THROW(bus.publish("ghost", {"task.prepare"}, RoleMarker::agent, "x"), ValidationError);
    EXPECT_THROW(bus.publish("a", {}, RoleMarker::agent, "x"), ValidationError);
    EXPECT_THROW(bus.publish("a", {"no.such.topic"}, RoleMarker::agent, "x"), ValidationError);
    EXPECT_THROW(bus.register_agent("a", {"task.prepare"}), ValidationError);
    EXPECT_THROW(bus.register_agent("d", {"bogus"}), ValidationError);
}

// Property: exactly-once delivery in pool order under random schedules.
TEST(Bus, ExactlyOnceInPoolOrderOverRandomSchedules) {
    const auto& topics = default_topics();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed);
        MessageBus bus;
        bus.set_clock([] { return 0.0; });
        std::vector<std::string> agents;
        std::map<std::string, std::set<std::string>> subs;
        for (int a = 0; a < 6; ++a) {
            const std::string id = "agent" + std::to_string(a);
            std::set<std::string> s;
            while (s.empty())
                for (const auto& t : topics)
                    if (rng() % 3 == 0) s.insert(t);
            bus.register_agent(id, s);
            agents.push_back(id);
            subs[id] = s;
        }
        std::map<std::string, std::vector<std::uint64_t>> got;
        for (int i = 0; i < 2000; ++i) {
            std::vector<std::string> ts;
            const int k = 1 + static_cast<int>(rng() % 3);
            for (int j = 0; j < k; ++j) ts.push_back(topics[rng() % topics.size()]);  // duplicates allowed
            bus.publish(agents[rng() % agents.size()], ts, RoleMarker::agent, std::to_string(i));
            if (rng() % 7 == 0) {
                const auto& who = agents[rng() % agents.size()];
                for (const auto& m : bus.drain(who)) got[who].push_back(m.id);
            }
        }
        for (const auto& who : agents)
            for (const auto& m : bus.drain(who)) got[who].push_back(m.id);

        for (const auto& who : agents) {
            std::vector<std::uint64_t> expect;
            for (const auto& m : bus.pool())
                if (std::any_of(m.topics.begin(), m.topics.end(), [&](const auto& t) { return subs[who].count(t); }))
                    expect.push_back(m.id);
            EXPECT_EQ(got[who], expect) << "seed " << seed << " " << who;
            EXPECT_EQ(bus.pending(who), 0u);
        }
    }
}

TEST(Bus, MessageJsonRoundTrip) {
    AgentMessage m;
    m.id = 7;
    m.sender = "x";
    m.topics = {"user.io"};
    m.role = RoleMarker::tool;
    m.content = "done";
    m.tool_calls = {ToolCall{"c1", "echo", Json{{"word", "hi"}}}};
    m.reply_to = 3;
    m.tool_call_id = "c0";
    m.stage = "preparation";
    m.timestamp = 12.5;
    EXPECT_EQ(to_json(agent_message_from_json(to_json(m))), to_json(m));
    EXPECT_FALSE(to_json(m, false).contains("timestamp"));
}

// ---- prompts ---------------------------------------------------------------

TEST(Prompt, MatchesTheGoldenFile) {
    std::vector<AgentMessage> memory(3);
    memory[0] = {1, "user", {"user.io"}, RoleMarker::user, "Forecast tomorrow's load.", {}, {}, {}, "preparation", 0};
    memory[1] = {2, "toy", {"task.status"}, RoleMarker::agent, "Echoing.", {ToolCall{"c1", "echo", Json{{"word", "load"}}}}, {}, {}, "preparation", 0};
    memory[2] = {3, "toy", {"task.status"}, RoleMarker::tool, "load", {}, {}, "c1", "preparation", 0};
    const std::string prompt = assemble_prompt(toy_profile(), memory);
    const auto golden = kFixtures / "toy_prompt.txt";
    if (std::getenv("LOADLOOP_UPDATE_GOLDEN")) {
        std::ofstream(golden, std::ios::binary) << prompt;
    }
    EXPECT_EQ(prompt, scratch::slurp(golden));
    EXPECT_EQ(assemble_prompt(toy_profile(), memory), prompt);
    EXPECT_EQ(assemble_prompt(toy_profile(), {}), render_sections(toy_profile()));
}

TEST(Prompt, RoleProfilesAreComplete) {
    const auto profiles = default_profiles();
    ASSERT_EQ(profiles.size(), 5u);
    MessageBus bus;
    for (const auto& p : profiles) {
        EXPECT_FALSE(p.profile_text.empty()) << p.agent_id;
        EXPECT_FALSE(p.workflow_text.empty()) << p.agent_id;
        EXPECT_FALSE(p.actions.empty()) << p.agent_id;
        const std::string s = render_sections(p);
        for (const char* h : {"## Profile", "## Memory", "## Workflow", "## Actions"}) EXPECT_NE(s.find(h), std::string::npos);
        bus.register_agent(p.agent_id, p.subscriptions);
    }
}

// ---- tokens ----------------------------------------------------------------

TEST(Tokens, CostArithmetic) {
    EXPECT_NEAR(token_cost(201534, 24732, Prices{}), 0.751, 0.001);
    EXPECT_EQ(token_cost(0, 0, Prices{}), 0.0);
    EXPECT_DOUBLE_EQ(token_cost(1'000'000, 1'000'000, Prices{1.0, 3.0}), 4.0);
}

TEST(Tokens, ReportSharesAndTotals) {
    TokenLedger l;
    l.record_usage("a", 100, 7);
    l.record_usage("b", 250, 3);
    l.record_usage("a", 50, 0);
    l.record_usage("c", 1, 1);
    const TokenReport r = l.report();
    ASSERT_EQ(r.rows.size(), 3u);
    std::uint64_t in = 0, out = 0;
    double si = 0, so = 0, cost = 0;
    for (const auto& row : r.rows) {
        in += row.input_tokens;
        out += row.output_tokens;
        si += row.input_share;
        so += row.output_share;
        cost += row.cost;
    }
    EXPECT_EQ(in, r.total.input_tokens);
    EXPECT_EQ(out, r.total.output_tokens);
    EXPECT_EQ(r.total.input_tokens, 401u);
    EXPECT_NEAR(si, 100.0, 0.1);
    EXPECT_NEAR(so, 100.0, 0.1);
    EXPECT_NEAR(cost, r.total.cost, 1e-15);
    EXPECT_NE(r.render().find("total"), std::string::npos);

    TokenLedger back;
    back.restore(to_json(r));
    EXPECT_EQ(to_json(back.report()), to_json(r));
    EXPECT_EQ(TokenLedger{}.report().total.cost, 0.0);
}

TEST(Tokens, WordApproximation) {
    EXPECT_EQ(approximate_tokens(""), 0u);
    EXPECT_EQ(approximate_tokens("one two three"), 4u);
    EXPECT_EQ(approximate_tokens("  a\n\tb  "), 3u);  // 2 * 4/3 = 2.67
}

// ---- backends --------------------------------------------------------------

TEST(Scripted, MatchingOrderAndPlaceholders) {
    const Json rules = Json::parse(R"({"rules": [
        {"agent": "toy", "stage": "prep", "from": "user", "contains": "hello",
         "responses": [{"content": "first {{last_user_message}}"}, {"content": "again"}]},
        {"agent": "toy", "response": {"content": "fallback: {{last_message}}",
         "tool_calls": [{"name": "echo", "arguments": {"word": "{{last_user_message}}"}}]}}
    ]})");
    ScriptedBackend b = ScriptedBackend::from_json(rules);
    CompletionRequest req;
    req.agent_id = "toy";
    AgentMessage m;
    m.sender = "user";
    m.role = RoleMarker::user;
    m.content = "hello there";
    m.stage = "prep";
    req.memory = {m};
    EXPECT_EQ(b.complete(req).content, "first hello there");
    EXPECT_EQ(b.complete(req).content, "again");
    EXPECT_EQ(b.complete(req).content, "again");

    req.memory[0].stage = "other";
    const Completion c = b.complete(req);
    EXPECT_EQ(c.content, "fallback: hello there");
    ASSERT_EQ(c.tool_calls.size(), 1u);
    EXPECT_EQ(c.tool_calls[0].arguments["word"], "hello there");
    EXPECT_FALSE(c.tool_calls[0].id.empty());

    req.agent_id = "stranger";
    const Completion none = b.complete(req);
    EXPECT_TRUE(none.content.empty());
    EXPECT_TRUE(none.tool_calls.empty());
    EXPECT_EQ(b.calls(), 5u);
}

TEST(Http, RequestAndResponseWireFormat) {
    HttpBackendConfig cfg;
    cfg.base_url = "http://localhost:9/v1";
    cfg.model = "m";
    CompletionRequest req;
    req.agent_id = "toy";
    req.system_text = "sys";
    req.tools = toy_profile().actions;
    AgentMessage u;
    u.sender = "user";
    u.role = RoleMarker::user;
    u.topics = {"user.io"};
    u.content = "hi";
    AgentMessage own = u;
    own.sender = "toy";
    own.role = RoleMarker::agent;
    own.content = "ok";
    req.memory = {u, own};
    const Json body = HttpBackend::build_request(cfg, req);
    EXPECT_EQ(body["model"], "m");
    ASSERT_EQ(body["messages"].size(), 3u);
    EXPECT_EQ(body["messages"][0]["role"], "system");
    EXPECT_EQ(body["messages"][1]["role"], "user");
    EXPECT_EQ(body["messages"][2]["role"], "assistant");
    EXPECT_EQ(body["messages"][2]["content"], "ok");
    EXPECT_EQ(body["tools"][0]["function"]["name"], "echo");
    EXPECT_EQ(body["tools"][0]["function"]["parameters"]["required"], Json::array({"word"}));

    const Json resp = Json::parse(R"({"choices": [{"message": {"content": null, "tool_calls": [
        {"id": "t1", "type": "function", "function": {"name": "echo", "arguments": "{\"word\": \"x\"}"}}]}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 5}})");
    const Completion c = HttpBackend::parse_response(resp);
    EXPECT_EQ(c.content, "");
    ASSERT_EQ(c.tool_calls.size(), 1u);
    EXPECT_EQ(c.tool_calls[0].id, "t1");
    EXPECT_EQ(c.tool_calls[0].arguments["word"], "x");
    EXPECT_EQ(c.input_tokens, 12u);
    EXPECT_EQ(c.output_tokens, 5u);
    EXPECT_THROW(HttpBackend::parse_response(Json::object()), BackendError);

    // nothing listens on port 9
    HttpBackendConfig dead = cfg;
    dead.timeout_seconds = 1.0;
    HttpBackend http(dead);
    EXPECT_THROW(http.complete(req), BackendError);
}

// ---- agent step ------------------------------------------------------------

TEST(AgentStep, OneToolCallOneHandlerInvocation) {
    MessageBus bus;
    TokenLedger tokens;
    bus.register_agent("user", {"task.status"});
    Agent a(toy_profile(), bus, tokens);
    int invoked = 0;
    a.add_tool("echo", [&](const Json& args) {
        ++invoked;
        return ToolResult{true, args["word"].get<std::string>()};
    });
    bus.publish("user", {"task.prepare"}, RoleMarker::user, "say load");
    ListBackend backend;
    backend.replies = {says("Echoing.", {ToolCall{"c1", "echo", Json{{"word", "load"}}}})};
    const auto out = a.step(backend);
    EXPECT_EQ(invoked, 1);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].role, RoleMarker::agent);
    EXPECT_EQ(out[1].role, RoleMarker::tool);
    EXPECT_EQ(out[1].content, "load");
    EXPECT_EQ(out[1].tool_call_id, "c1");
    EXPECT_EQ(out[1].topics, (std::vector<std::string>{"task.status"}));
    EXPECT_EQ(bus.drain("user").size(), 2u);
    EXPECT_EQ(tokens.report().total.input_tokens, 10u);
    EXPECT_EQ(tokens.report().total.output_tokens, 2u);
    EXPECT_EQ(backend.requests[0].memory.back().content, "say load");
    EXPECT_THROW(a.add_tool("undeclared", [](const Json&) { return ToolResult{}; }), ValidationError);
}

TEST(AgentStep, UnknownToolAndBadArgumentsGetRepairRounds) {
    MessageBus bus;
    TokenLedger tokens;
    bus.register_agent("user", {"task.status"});
    Agent a(toy_profile(), bus, tokens);
    a.add_tool("echo", [](const Json& args) { return ToolResult{true, args["word"].get<std::string>()}; });
    bus.publish("user", {"task.prepare"}, RoleMarker::user, "go");

    ListBackend unknown;
    unknown.replies = {says("", {ToolCall{"c1", "teleport", Json::object()}}), says("fine")};
    auto out = a.step(unknown);
    EXPECT_EQ(unknown.calls, 2u);
    ASSERT_GE(out.size(), 3u);
    EXPECT_EQ(out[1].content.rfind("error: unknown tool 'teleport'", 0), 0u);
    EXPECT_EQ(out.back().content, "fine");

    ListBackend bad;
    bad.replies = {says("", {ToolCall{"c2", "echo", Json{{"times", 2}}}})};  // word missing, forever
    out = a.step(bad);
    EXPECT_EQ(bad.calls, 3u);  // first try plus two repair rounds
    EXPECT_NE(out.back().content.find("missing required argument 'word'"), std::string::npos);

    ListBackend typed;
    typed.replies = {says("", {ToolCall{"c3", "echo", Json{{"word", 5}}}}), says("")};
    out = a.step(typed);
    EXPECT_NE(out[1].content.find("must be string"), std::string::npos);
}

TEST(AgentStep, ThreeBackendFailuresPublishASystemError) {
    MessageBus bus;
    TokenLedger tokens;
    bus.register_agent("watcher", {"system.error"});
    StepOptions opt;
    opt.backoff = std::chrono::milliseconds(0);
    Agent a(toy_profile(), bus, tokens, opt);
    ListBackend b;
    b.failures = 3;
    b.replies = {says("never")};
    const auto out = a.step(b);
    EXPECT_EQ(b.calls, 3u);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].topics, (std::vector<std::string>{"system.error"}));
    EXPECT_NE(out[0].content.find("attempt 3: connection refused"), std::string::npos);
    EXPECT_EQ(bus.drain("watcher").size(), 1u);

    // two failures then success recovers
    ListBackend flaky;
    flaky.failures = 2;
    flaky.replies = {says("ok")};
    const auto ok = a.step(flaky);
    ASSERT_EQ(ok.size(), 1u);
    EXPECT_EQ(ok[0].content, "ok");
}

TEST(AgentStep, MemoryCapKeepsThePreamble) {
    MessageBus bus;
    TokenLedger tokens;
    bus.register_agent("user", {"task.status"});
    StepOptions opt;
    opt.memory_cap = 5;
    opt.preserved_preamble = 2;
    Agent a(toy_profile(), bus, tokens, opt);
    for (int i = 0; i < 12; ++i) bus.publish("user", {"task.prepare"}, RoleMarker::user, std::to_string(i));
    a.ingest();
    ASSERT_EQ(a.memory().size(), 5u);
    std::vector<std::string> kept;
    for (const auto& m : a.memory()) kept.push_back(m.content);
    EXPECT_EQ(kept, (std::vector<std::string>{"0", "1", "9", "10", "11"}));
}

// ---- guidance --------------------------------------------------------------

TEST(GuidanceParse, ScriptedMappingTable) {
    ScriptedBackend b = ScriptedBackend::from_file(kData / "scripted_rules.json");
    const auto s = summary_of({{"linear", 10}, {"mlp", 10}, {"gbt", 10}}, "flat");

    auto p = parse_guidance("please stop exploring gbt", s, b);
    ASSERT_EQ(p.directives.size(), 1u);
    EXPECT_EQ(p.directives[0].kind, optimizer::DirectiveKind::prune_space);
    EXPECT_EQ(p.directives[0].exclude_types, (std::vector<std::string>{"gbt"}));

    p = parse_guidance("try mlp with learning rate 0.001", s, b);
    ASSERT_EQ(p.directives.size(), 1u);
    EXPECT_EQ(p.directives[0].kind, optimizer::DirectiveKind::inject);
    ASSERT_EQ(p.directives[0].injections.size(), 1u);
    EXPECT_EQ(p.directives[0].injections[0], (Configuration{"mlp", {{"h.learning_rate", 0.001}}}));

    p = parse_guidance("focus on linear", s, b);
    EXPECT_EQ(p.directives.at(0).allocation.at("linear"), 5);

    p = parse_guidance("keep going", s, b);
    EXPECT_TRUE(p.directives.empty());
    EXPECT_FALSE(p.clarification);

    const std::size_t before = b.calls();
    p = parse_guidance("   ", s, b);
    EXPECT_TRUE(p.directives.empty());
    EXPECT_EQ(b.calls(), before);  // empty input never reaches the backend
}

TEST(GuidanceParse, OneRepairRoundThenClarification) {
    const auto s = summary_of({{"linear", 3}}, "flat");
    ListBackend garbage;
    garbage.replies = {says("sure thing!")};
    TokenLedger tokens;
    auto p = parse_guidance("do something", s, garbage, &tokens);
    EXPECT_EQ(garbage.calls, 2u);
    EXPECT_TRUE(p.directives.empty());
    ASSERT_TRUE(p.clarification);
    EXPECT_NE(p.clarification->find("do something"), std::string::npos);
    EXPECT_EQ(garbage.requests[1].memory.back().stage, "guidance.repair");
    EXPECT_EQ(tokens.report().rows.size(), 1u);

    ListBackend fixed;
    fixed.replies = {says("nope"), says("```json\n{\"directives\": [{\"kind\": \"allocate\", \"allocation\": {\"mlp\": 2}}]}\n```")};
    p = parse_guidance("more mlp", s, fixed);
    ASSERT_EQ(p.directives.size(), 1u);
    EXPECT_EQ(p.directives[0].allocation.at("mlp"), 2);
}

TEST(DefaultStrategy, BalancesOnlyFlatUnevenSearches) {
    const std::vector<std::string> types{"linear", "mlp", "gbt"};
    auto d = default_strategy(summary_of({{"linear", 50}, {"mlp", 2}, {"gbt", 48}}, "flat"), types, 10);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].kind, optimizer::DirectiveKind::allocate);
    EXPECT_EQ(d[0].allocation, (std::map<std::string, int>{{"mlp", 10}}));

    EXPECT_TRUE(default_strategy(summary_of({{"linear", 34}, {"mlp", 33}, {"gbt", 33}}, "flat"), types, 10).empty());
    EXPECT_TRUE(default_strategy(summary_of({{"linear", 50}, {"mlp", 2}, {"gbt", 48}}, "improving"), types, 10).empty());

    // a type with no trials at all counts as under-explored; B splits with the remainder first
    d = default_strategy(summary_of({{"linear", 95}, {"mlp", 5}}, "flat"), types, 5);
    EXPECT_EQ(d.at(0).allocation, (std::map<std::string, int>{{"gbt", 2}, {"mlp", 3}}));
}
