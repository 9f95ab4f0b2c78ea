#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "loadloop/deployment/deployment.hpp"
#include "loadloop/models/evaluate.hpp"
#include "support/periodic.hpp"

using namespace loadloop;
using namespace loadloop::deployment;

namespace {

// Day-ahead forecast whose first target hour is midnight.
Forecast day_ahead(std::vector<double> raw) {
    Forecast f;
    f.horizon = static_cast<int>(raw.size());
    f.origin = from_civil(2024, 6, 1, 23);
    for (int s = 0; s < f.horizon; ++s) f.target_times.push_back(from_civil(2024, 6, 2) + s * kSecondsPerHour);
    f.raw = std::move(raw);
    f.adjusted = f.raw;
    std::vector<double> temp(static_cast<std::size_t>(f.horizon));
    for (int s = 0; s < f.horizon; ++s) temp[static_cast<std::size_t>(s)] = 20.0 + s;
    f.context["temperature"] = temp;
    return f;
}

std::vector<double> ramp(int n, double start = 100.0) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(start + 3.0 * i);
    return v;
}

PostprocessRule scaling(RuleKind kind, double lambda) {
    PostprocessRule r;
    r.kind = kind;
    r.lambda = lambda;
    return r;
}

std::vector<int> from_hour(int h) {
    std::vector<int> out;
    for (; h < 24; ++h) out.push_back(h);
    return out;
}

Forecast apply_all(Forecast f, const std::vector<PostprocessRule>& rules) {
    for (const auto& r : rules) f = apply_rule(f, r).forecast;
    return f;
}

}  // namespace

TEST(Postprocess, ZeroLambdaAndEmptyGatesAreIdentities) {
    const Forecast f = day_ahead(ramp(24));
    EXPECT_EQ(apply_rule(f, scaling(RuleKind::time_scaling, 0.0)).forecast.adjusted, f.raw);

    PostprocessRule gate = scaling(RuleKind::load_scaling, 0.5);
    gate.threshold = std::numeric_limits<double>::infinity();
    EXPECT_EQ(apply_rule(f, gate).forecast.adjusted, f.raw);
    gate.direction = Direction::below;
    gate.threshold = -std::numeric_limits<double>::infinity();
    EXPECT_EQ(apply_rule(f, gate).forecast.adjusted, f.raw);

    PostprocessRule ext = scaling(RuleKind::external_scaling, -0.3);
    ext.column_role = "temperature";
    ext.threshold = 1e6;
    EXPECT_EQ(apply_rule(f, ext).forecast.adjusted, f.raw);
}

TEST(Postprocess, TenPercentCutAfterThreePm) {
    const Forecast f = day_ahead(ramp(24));
    PostprocessRule r = scaling(RuleKind::time_scaling, -0.10);
    r.hours_of_day = from_hour(15);
    const auto app = apply_rule(f, r);
    for (std::size_t s = 0; s < 24; ++s)
        EXPECT_DOUBLE_EQ(app.forecast.adjusted[s], s >= 15 ? 0.9 * f.raw[s] : f.raw[s]) << s;
    EXPECT_EQ(app.forecast.raw, f.raw);
    EXPECT_EQ(app.record.before, f.raw);
    EXPECT_EQ(app.record.after, app.forecast.adjusted);
    ASSERT_EQ(app.forecast.applied_rules.size(), 1u);
}

TEST(Postprocess, CorrectsAUniformOverPrediction) {
    const std::vector<double> actual = ramp(24, 500.0);
    std::vector<double> raw = actual;
    for (std::size_t s = 15; s < 24; ++s) raw[s] = 1.10 * actual[s];
    Forecast f = day_ahead(raw);
    PostprocessRule r = scaling(RuleKind::time_scaling, -1.0 / 11.0);
    r.hours_of_day = from_hour(15);
    f = apply_rule(f, r).forecast;

    const std::vector<double> span_actual(actual.begin() + 15, actual.end());
    const std::vector<double> span_adj(f.adjusted.begin() + 15, f.adjusted.end());
    const std::vector<double> span_raw(f.raw.begin() + 15, f.raw.end());
    EXPECT_LT(metrics::mape(span_adj, span_actual), 1e-10);
    EXPECT_NEAR(metrics::mape(span_raw, span_actual), 0.10, 1e-12);

    metrics::MetricSpec m;
    m.kind = metrics::MetricKind::plain;
    m.base = metrics::PointLoss::absolute;
    const AdjustmentScores sc = evaluate_adjustment(f, actual, m);
    EXPECT_GT(sc.raw, sc.adjusted);
    EXPECT_LT(sc.adjusted, 1e-9);
}

TEST(Postprocess, NoRulesGiveEqualScores) {
    const Forecast f = day_ahead(ramp(24));
    const AdjustmentScores sc = evaluate_adjustment(f, ramp(24, 90.0), {});
    EXPECT_EQ(sc.raw, sc.adjusted);
    EXPECT_THROW(evaluate_adjustment(f, ramp(23), {}), ValidationError);
}

TEST(Postprocess, GatesAndOverrides) {
    const Forecast f = day_ahead(ramp(24));  // 100, 103, ..., 169
    PostprocessRule load = scaling(RuleKind::load_scaling, 1.0);
    load.threshold = 160.0;
    auto out = apply_rule(f, load).forecast.adjusted;
    for (std::size_t s = 0; s < 24; ++s) EXPECT_DOUBLE_EQ(out[s], f.raw[s] > 160.0 ? 2.0 * f.raw[s] : f.raw[s]);

    PostprocessRule ext = scaling(RuleKind::external_scaling, -0.5);
    ext.column_role = "temperature";
    ext.threshold = 25.0;
    ext.direction = Direction::below;
    out = apply_rule(f, ext).forecast.adjusted;
    for (std::size_t s = 0; s < 24; ++s) EXPECT_DOUBLE_EQ(out[s], 20.0 + static_cast<double>(s) < 25.0 ? 0.5 * f.raw[s] : f.raw[s]);

    PostprocessRule ov;
    ov.kind = RuleKind::manual_override;
    ov.steps = {2, 5};
    ov.values = {1.0, 2.0};
    out = apply_rule(f, ov).forecast.adjusted;
    EXPECT_EQ(out[2], 1.0);
    EXPECT_EQ(out[5], 2.0);
    EXPECT_EQ(out[3], f.raw[3]);
}

TEST(Postprocess, InvalidRulesAreRejected) {
    const Forecast f = day_ahead(ramp(24));
    PostprocessRule r = scaling(RuleKind::time_scaling, -1.0);
    EXPECT_THROW(apply_rule(f, r), ValidationError);
    r.lambda = 0.1;
    r.steps = {24};
    EXPECT_THROW(apply_rule(f, r), ValidationError);
    r.steps = {1, 1};
    EXPECT_THROW(apply_rule(f, r), ValidationError);
    r.steps = {1};
    r.hours_of_day = {1};
    EXPECT_THROW(apply_rule(f, r), ValidationError);

    PostprocessRule ext = scaling(RuleKind::external_scaling, 0.1);
    ext.column_role = "humidity";
    EXPECT_THROW(apply_rule(f, ext), ValidationError);

    PostprocessRule ov;
    ov.kind = RuleKind::manual_override;
    ov.steps = {0, 1};
    ov.values = {5.0};
    EXPECT_THROW(apply_rule(f, ov), ValidationError);
    ov.values = {5.0, std::nan("")};
    EXPECT_THROW(apply_rule(f, ov), ValidationError);
}

// Property: replay reproduces adjusted values bit-exactly, raw is never touched, signs survive.
TEST(Postprocess, RandomRuleChainsReplayExactly) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> lam(-0.95, 2.0), val(-500.0, 500.0);
    std::uniform_int_distribution<int> kind(0, 3), hour(0, 23), len(1, 6);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> raw(24);
        for (double& x : raw) x = val(rng);
        Forecast f = day_ahead(raw);
        std::vector<PostprocessRule> rules;
        bool overridden = false;
        for (int k = len(rng); k > 0; --k) {
            PostprocessRule r = scaling(static_cast<RuleKind>(kind(rng)), lam(rng));
            const int from = hour(rng);
            if (rng() % 2) r.hours_of_day = from_hour(from);
            else r.steps = {from};
            if (r.kind == RuleKind::manual_override) {
                r.values.assign(r.hours_of_day.empty() ? 1 : r.hours_of_day.size(), val(rng));
                overridden = true;
            }
            r.threshold = val(rng);
            r.direction = rng() % 2 ? Direction::above : Direction::below;
            if (r.kind == RuleKind::external_scaling) {
                r.column_role = "temperature";
                r.threshold = 20.0 + hour(rng);
            }
            rules.push_back(r);
        }
        const Forecast out = apply_all(f, rules);
        ASSERT_EQ(out.raw, raw);
        ASSERT_EQ(replay_rules(out), out.adjusted) << trial;
        for (std::size_t s = 0; s < 24 && !overridden; ++s) ASSERT_EQ(std::signbit(out.adjusted[s]), std::signbit(raw[s]));
        // the JSON form replays the same way
        ASSERT_EQ(replay_rules(forecast_from_json(to_json(out))), out.adjusted);
    }
}

TEST(Postprocess, OrderMattersOnlyWhenHoursOverlap) {
    const Forecast f = day_ahead(ramp(24));
    PostprocessRule ov;
    ov.kind = RuleKind::manual_override;
    ov.steps = {3};
    ov.values = {50.0};
    PostprocessRule disjoint = scaling(RuleKind::time_scaling, 0.2);
    disjoint.steps = {4, 5};
    EXPECT_EQ(apply_all(f, {ov, disjoint}).adjusted, apply_all(f, {disjoint, ov}).adjusted);

    PostprocessRule overlap = scaling(RuleKind::time_scaling, 0.2);
    overlap.steps = {3};
    const Forecast a = apply_all(f, {ov, overlap});
    const Forecast b = apply_all(f, {overlap, ov});
    EXPECT_DOUBLE_EQ(a.adjusted[3], 60.0);
    EXPECT_DOUBLE_EQ(b.adjusted[3], 50.0);
    EXPECT_EQ(replay_rules(a), a.adjusted);
    EXPECT_EQ(replay_rules(b), b.adjusted);
}

TEST(Postprocess, JsonAndLogRoundTrip) {
    PostprocessRule r = scaling(RuleKind::external_scaling, -0.2);
    r.column_role = "temperature";
    r.threshold = 30;
    r.direction = Direction::below;
    r.hours_of_day = {9, 10};
    r.note = "heat";
    EXPECT_EQ(to_json(postprocess_rule_from_json(to_json(r))), to_json(r));

    AdjustmentLog log;
    const auto app = apply_rule(day_ahead(ramp(24)), r);
    log.append(app.record);
    const AdjustmentLog back = AdjustmentLog::from_jsonl(log.to_jsonl());
    ASSERT_EQ(back.records().size(), 1u);
    EXPECT_EQ(back.records()[0].after, app.record.after);
    EXPECT_EQ(back.records()[0].note, "heat");
    EXPECT_EQ(log.to_jsonl(false).find("recorded_at"), std::string::npos);
}

TEST(Postprocess, CsvHasOneRowPerStep) {
    const Forecast f = day_ahead(ramp(6));
    const std::string csv = forecast_csv(f);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

// ---- forecasting with a trained model ---------------------------------------

TEST(Forecast, MatchesTheEvaluationTimePrediction) {
    auto data = std::make_shared<const dataset::CleanDataset>(periodic::data(60));
    models::ForecastProblem p;
    p.task = periodic::task(2, 6);
    p.splits = dataset::split_chronological(data->rows(), {}, dataset::min_split_length(p.task));
    p.data = data;
    const Configuration c{"linear",
                          {{"f.calendar", std::string("trigonometric")}, {"f.temp_lags", std::string("correlation")},
                           {"f.temp_lags_ratio", 0.2}, {"f.interaction", std::string("none")},
                           {"f.load_lags", std::string("fixed")}, {"f.other", std::string("none")},
                           {"h.regularization", std::string("ridge")}, {"h.alpha", 0.01}}};
    const auto fitted = models::fit_configuration(c, p, 9);
    const DeployedModel deployed{fitted.plan, fitted.model};

    const std::size_t origin = p.splits.test.begin + 200;
    const Forecast f = forecast(deployed, *data, p.task, origin);
    ASSERT_EQ(f.raw.size(), 6u);
    EXPECT_EQ(f.adjusted, f.raw);
    EXPECT_EQ(f.origin, data->timestamps[origin]);
    EXPECT_EQ(f.target_times.front(), data->timestamps[origin + 3]);
    ASSERT_TRUE(f.actual);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ((*f.actual)[i], data->load()[origin + 3 + i]);
    EXPECT_EQ(f.context.at("temperature").front(), data->values[1][origin + 3]);

    const std::size_t origins[] = {origin};
    const auto rows = features::assemble_for_origins(fitted.plan, *data, p.task, origins, true);
    EXPECT_EQ(models::predict(fitted.model, rows).front(), f.raw);

    // the last row has no actuals
    const Forecast tail = forecast(deployed, *data, p.task);
    EXPECT_FALSE(tail.actual);
    EXPECT_EQ(tail.raw.size(), 6u);
    EXPECT_THROW(forecast(deployed, *data, p.task, 10), ValidationError);
}
