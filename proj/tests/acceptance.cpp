// One PASS/FAIL line per acceptance criterion; exits nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "loadloop/agents/pipeline.hpp"
#include "loadloop/deployment/deployment.hpp"
#include "loadloop/features/features.hpp"
#include "loadloop/metrics/metrics.hpp"
#include "loadloop/models/evaluate.hpp"
#include "loadloop/optimizer/optimizer.hpp"
#include "support/bowls.hpp"
#include "support/scratch.hpp"

using namespace loadloop;

namespace {

const std::filesystem::path kData = LOADLOOP_TEST_DATA;

struct Outcome {
    bool ok = true;
    std::ostringstream detail;

    void check(bool cond, const std::string& what) {
        if (!cond) {
            if (!ok) detail << "; ";
            else detail.str("");
            detail << what;
            ok = false;
        }
    }
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

// ---- loss formulas ----------------------------------------------------------

void loss_formulas(Outcome& o) {
    using namespace metrics;
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 1 + rng() % 50;
        const auto p = uniform(rng, n, -100, 100), a = uniform(rng, n, -100, 100), w = std::vector<double>(n, 2.5);
        const PointLoss base = i % 2 ? PointLoss::absolute : PointLoss::squared;
        double plain = 0.0;
        for (std::size_t k = 0; k < n; ++k) plain += base == PointLoss::absolute ? std::abs(p[k] - a[k]) : (p[k] - a[k]) * (p[k] - a[k]);
        plain /= static_cast<double>(n);
        const double scale = std::max(1.0, plain);
        worst = std::max({worst, std::abs(asymmetric_loss(p, a, 1.0, 1.0, base) - plain) / scale,
                          std::abs(weighted_loss(p, a, w, base) - plain) / scale});
    }
    o.check(worst <= 1e-12, "alpha=beta or uniform weights drift from the plain mean by " + std::to_string(worst));
    const double ex = asymmetric_loss(std::vector<double>{10, 10}, std::vector<double>{8, 12}, 2.0, 1.0, PointLoss::absolute);
    o.check(ex == 3.0, "hand example gave " + std::to_string(ex));
    o.detail << "max rel diff " << worst << " over 1000 cases, hand example " << ex;
}

// ---- postprocessing ---------------------------------------------------------

deployment::Forecast day_ahead(std::vector<double> raw) {
    deployment::Forecast f;
    f.horizon = static_cast<int>(raw.size());
    f.origin = from_civil(2024, 6, 1, 23);
    for (int s = 0; s < f.horizon; ++s) f.target_times.push_back(from_civil(2024, 6, 2) + s * kSecondsPerHour);
    f.raw = std::move(raw);
    f.adjusted = f.raw;
    std::vector<double> temp;
    for (int s = 0; s < f.horizon; ++s) temp.push_back(20.0 + s);
    f.context["temperature"] = temp;
    return f;
}

void postprocessing(Outcome& o) {
    using namespace deployment;
    std::vector<double> actual;
    for (int s = 0; s < 24; ++s) actual.push_back(500.0 + 3.0 * s);
    const Forecast base = day_ahead(actual);

    PostprocessRule zero;
    zero.kind = RuleKind::time_scaling;
    o.check(apply_rule(base, zero).forecast.adjusted == base.raw, "lambda=0 changed values");
    PostprocessRule gate;
    gate.kind = RuleKind::load_scaling;
    gate.lambda = 0.7;
    gate.threshold = std::numeric_limits<double>::infinity();
    o.check(apply_rule(base, gate).forecast.adjusted == base.raw, "empty load gate changed values");
    gate.kind = RuleKind::external_scaling;
    gate.column_role = "temperature";
    o.check(apply_rule(base, gate).forecast.adjusted == base.raw, "empty external gate changed values");

    // random chains replay bit-exactly
    std::mt19937_64 rng(17);
    std::size_t chains = 0;
    for (; chains < 500; ++chains) {
        Forecast f = day_ahead(uniform(rng, 24, -300, 300));
        for (int k = 1 + static_cast<int>(rng() % 5); k > 0; --k) {
            PostprocessRule r;
            r.kind = static_cast<RuleKind>(rng() % 4);
            r.lambda = uniform(rng, 1, -0.9, 1.5)[0];
            r.steps = {static_cast<int>(rng() % 24)};
            if (r.kind == RuleKind::manual_override) r.values = {uniform(rng, 1, -300, 300)[0]};
            if (r.kind == RuleKind::external_scaling) r.column_role = "temperature";
            r.threshold = r.kind == RuleKind::external_scaling ? 30.0 : uniform(rng, 1, -300, 300)[0];
            f = apply_rule(f, r).forecast;
        }
        if (replay_rules(f) != f.adjusted || replay_rules(forecast_from_json(to_json(f))) != f.adjusted) break;
    }
    o.check(chains == 500, "replay diverged on chain " + std::to_string(chains));

    std::vector<double> raw = actual;
    for (int s = 15; s < 24; ++s) raw[static_cast<std::size_t>(s)] *= 1.10;
    PostprocessRule cut;
    cut.kind = RuleKind::time_scaling;
    cut.lambda = -1.0 / 11.0;
    for (int h = 15; h < 24; ++h) cut.hours_of_day.push_back(h);
    const Forecast fixed = apply_rule(day_ahead(raw), cut).forecast;
    const std::vector<double> span_adj(fixed.adjusted.begin() + 15, fixed.adjusted.end());
    const std::vector<double> span_act(actual.begin() + 15, actual.end());
    const double mape = metrics::mape(span_adj, span_act);
    o.check(mape < 1e-10, "span MAPE after correction " + std::to_string(mape));
    o.detail << "identities hold, 500 chains replay exactly, span MAPE " << mape;
}

// ---- token cost -------------------------------------------------------------

void token_cost_check(Outcome& o) {
    const double c = agents::token_cost(201534, 24732, agents::Prices{2.50, 10.00});
    o.check(std::abs(c - 0.751) <= 0.001, "cost " + std::to_string(c));
    o.detail << "cost " << std::fixed << std::setprecision(6) << c;
}

// ---- optimizer --------------------------------------------------------------

optimizer::RunSettings bowl_settings(std::uint64_t seed) {
    optimizer::RunSettings s;
    s.max_trials = 100;
    s.init_samples = 20;
    s.batch_size = 10;
    s.seed = seed;
    return s;
}

void convergence(Outcome& o) {
    const auto space = bowls::space();
    std::vector<double> tpe, rnd;
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto r = optimizer::run_optimization(space, bowl_settings(seed), nullptr, bowls::evaluator());
        const double best = *r.ledger[*r.best_index].loss;
        tpe.push_back(best);
        hits += best <= 0.2;
        optimizer::Rng rng(seed);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& c : optimizer::random_sample(space, 100, rng)) b = std::min(b, bowls::loss(c));
        rnd.push_back(b);
    }
    o.check(hits >= 18, std::to_string(hits) + "/20 seeds reached 0.2");
    o.check(median(tpe) < median(rnd), "TPE median not below random median");
    o.detail << hits << "/20 seeds <= 0.2, median best TPE " << median(tpe) << " vs random " << median(rnd);
}

class InjectAt : public optimizer::GuidanceSource {
public:
    InjectAt(std::size_t iteration, std::vector<optimizer::GuidanceDirective> directives)
        : iteration_(iteration), directives_(std::move(directives)) {}
    std::vector<optimizer::GuidanceDirective> poll(const optimizer::IterationInfo& info, const optimizer::Ledger&,
                                                   const optimizer::SearchSpace&) override {
        return info.iteration == iteration_ ? directives_ : std::vector<optimizer::GuidanceDirective>{};
    }
    void rejected(const std::string& reason) override { rejections.push_back(reason); }
    std::vector<std::string> rejections;

private:
    std::size_t iteration_;
    std::vector<optimizer::GuidanceDirective> directives_;
};

void guidance_efficacy(Outcome& o) {
    const auto space = bowls::space();
    // every axis off by d puts the injection at distance d*sqrt(3) from the optimum
    const double offset = 0.05 / std::sqrt(3.0) * 0.99;
    const Configuration hint = bowls::near_optimum(offset);
    double dist = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        dist += std::pow(param_number(hint.params, bowls::dim_name(i)) - bowls::bowls().front().centre[i], 2);
    dist = std::sqrt(dist);
    o.check(dist < 0.05, "injection distance " + std::to_string(dist));

    std::vector<double> unguided, guided;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto a = optimizer::run_optimization(space, bowl_settings(seed), nullptr, bowls::evaluator());
        unguided.push_back(static_cast<double>(bowls::trials_to_reach(a.ledger, 0.2)));
        optimizer::GuidanceDirective inject;
        inject.kind = optimizer::DirectiveKind::inject;
        inject.injections = {hint};
        InjectAt g(2, {inject});
        const auto b = optimizer::run_optimization(space, bowl_settings(seed), &g, bowls::evaluator());
        o.check(g.rejections.empty(), "injection rejected");
        guided.push_back(static_cast<double>(bowls::trials_to_reach(b.ledger, 0.2)));
    }
    const double mu = median(unguided), mg = median(guided);
    const double reduction = 1.0 - mg / mu;
    o.check(reduction >= 0.30, "reduction " + std::to_string(reduction));
    o.detail << "median trials to 0.2: unguided " << mu << ", guided " << mg << " (" << std::setprecision(3)
             << 100.0 * reduction << "% fewer)";
}

void pruning(Outcome& o) {
    std::size_t scanned = 0, violations = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        optimizer::GuidanceDirective prune;
        prune.exclude_types = {seed % 2 ? "beta" : "alpha"};
        const std::size_t at = 1 + seed % 4;
        InjectAt g(at, {prune});
        auto s = bowl_settings(seed);
        s.max_trials = 80;
        const auto r = optimizer::run_optimization(bowls::space(), s, &g, bowls::evaluator());
        o.check(r.ledger.size() == 80, "short ledger");
        for (const auto& t : r.ledger.records()) {
            if (t.iteration < at) continue;
            ++scanned;
            violations += t.config.model_type == prune.exclude_types.front();
        }
    }
    o.check(violations == 0, std::to_string(violations) + " trials used an excluded type");
    o.detail << "20 runs, " << scanned << " post-prune trials scanned, " << violations << " violations";
}

void stopping(Outcome& o) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto s = bowl_settings(seed);
        s.max_trials = s.init_samples;
        const auto a = optimizer::run_optimization(bowls::space(), s, nullptr, bowls::evaluator());
        o.check(a.ledger.size() == 20 && a.stop_reason == "max_trials", "Tr=K did not halt after the initial design");

        auto e = bowl_settings(seed);
        e.epsilon = *a.ledger[*a.best_index].loss + 1e-9;
        const auto b = optimizer::run_optimization(bowls::space(), e, nullptr, bowls::evaluator());
        o.check(b.ledger.size() == 20 && b.stop_reason == "target_reached", "epsilon above the initial best did not halt");
    }
    o.detail << "both rules halt at exactly K=20 trials over 5 seeds";
}

// ---- models -----------------------------------------------------------------

models::Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> n(0.0, 1.0);
    models::Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
    return m;
}

double brute_force_stump_sse(const models::Matrix& x, const models::Vector& y) {
    double best = (y.array() - y.mean()).square().sum();
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        std::vector<double> cuts(x.col(f).data(), x.col(f).data() + x.rows());
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            const double thr = (cuts[k] + cuts[k + 1]) / 2.0;
            double sl = 0, sr = 0;
            int nl = 0, nr = 0;
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                if (x(r, f) <= thr) sl += y(r), ++nl;
                else sr += y(r), ++nr;
            }
            double sse = 0;
            for (Eigen::Index r = 0; r < x.rows(); ++r) sse += std::pow(y(r) - (x(r, f) <= thr ? sl / nl : sr / nr), 2);
            best = std::min(best, sse);
        }
    }
    return best;
}

void model_checks(Outcome& o) {
    using namespace models;
    std::mt19937_64 rng(3);
    const Matrix x = gaussian(rng, 200, 6);
    const Matrix y = x * gaussian(rng, 6, 3) + gaussian(rng, 200, 3) * 0.1 + Matrix::Constant(200, 3, 4.0);
    Matrix a(200, 7);
    a.leftCols(6) = x;
    a.col(6).setOnes();
    const Matrix ols = (a.transpose() * a).ldlt().solve(a.transpose() * y);
    const double ridge_gap = (fit_linear(x, y, 1e-8).coef - ols.topRows(6)).cwiseAbs().maxCoeff();
    o.check(ridge_gap < 1e-6, "ridge-OLS gap " + std::to_string(ridge_gap));

    double grad = 0.0;
    for (Activation act : {Activation::relu, Activation::identity})
        grad = std::max(grad, gradient_check(init_mlp(5, {8, 6}, 3, act, 9), gaussian(rng, 16, 5), gaussian(rng, 16, 3), 1e-5, 256, 1));
    o.check(grad < 1e-4, "MLP gradient rel err " + std::to_string(grad));

    double stump_gap = 0.0;
    bool monotone = true;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 r(seed);
        const Matrix xs = gaussian(r, 40, 3);
        Matrix ys(40, 1);
        for (Eigen::Index i = 0; i < 40; ++i) ys(i, 0) = (xs(i, seed % 3) > 0.2 ? 3.0 : -1.0) + 0.5 * xs(i, 0) * xs(i, 1);
        TrainReport rep;
        const GbtEnsemble m = fit_gbt(xs, ys, Matrix(0, 3), Matrix(0, 1), GbtParams{1, 1, 1.0}, rep);
        stump_gap = std::max(stump_gap, std::abs((predict_gbt(m, xs) - ys).squaredNorm() - brute_force_stump_sse(xs, ys.col(0))));

        TrainReport curve;
        fit_gbt(xs, ys, xs, ys, GbtParams{25, 3, 0.1 + 0.04 * static_cast<double>(seed)}, curve);
        for (std::size_t i = 1; i < curve.train_curve.size(); ++i)
            monotone = monotone && curve.train_curve[i] <= curve.train_curve[i - 1] + 1e-12;
    }
    o.check(stump_gap < 1e-9, "stump SSE off brute force by " + std::to_string(stump_gap));
    o.check(monotone, "GBT train loss increased");
    o.detail << "ridge gap " << ridge_gap << ", grad rel err " << grad << ", stump gap " << stump_gap
             << ", GBT train loss non-increasing";
}

// ---- feature selection ------------------------------------------------------

void feature_selection(Outcome& o) {
    std::normal_distribution<double> n(0, 1);
    int first = 0;
    for (unsigned seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed + 1000);
        std::vector<double> target(200);
        for (double& v : target) v = n(rng);
        features::NamedColumns c;
        const int at = static_cast<int>(rng() % 51);
        for (int k = 0; k <= 50; ++k) {
            std::vector<double> col(200);
            if (k == at) {
                for (std::size_t i = 0; i < col.size(); ++i) col[i] = 2.0 * target[i] - 1.0;
                c.append("planted", col);
            } else {
                for (double& v : col) v = n(rng);
                c.append("noise_" + std::to_string(k), col);
            }
        }
        first += features::rank_by_correlation(c, target).front() == "planted";
    }
    o.check(first == 100, "planted feature first in only " + std::to_string(first) + "/100");

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    int monotone = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int cols = 1 + static_cast<int>(rng() % 30);
        std::vector<double> target(30);
        for (double& v : target) v = n(rng);
        features::NamedColumns c;
        for (int k = 0; k < cols; ++k) {
            std::vector<double> col(30);
            for (std::size_t i = 0; i < col.size(); ++i) col[i] = k % 5 == 2 ? 4.0 : n(rng) + 0.2 * k * target[i];
            c.append("c" + std::to_string(k), col);
        }
        double r1 = u(rng), r2 = u(rng);
        if (r1 > r2) std::swap(r1, r2);
        const auto a = features::pearson_select(c, target, r1).names;
        const auto b = features::pearson_select(c, target, r2).names;
        monotone += a.size() <= b.size() && std::equal(a.begin(), a.end(), b.begin());
    }
    o.check(monotone == 1000, "monotonicity held in only " + std::to_string(monotone) + "/1000 cases");
    o.detail << "planted first in " << first << "/100, monotone in " << monotone << "/1000";
}

// ---- bus and end to end -----------------------------------------------------

std::size_t bus_property(Outcome& o) {
    const auto& topics = agents::default_topics();
    std::size_t total = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed * 101);
        agents::MessageBus bus;
        bus.set_clock([] { return 0.0; });
        std::vector<std::string> ids;
        std::map<std::string, std::set<std::string>> subs;
        for (int a = 0; a < 7; ++a) {
            const std::string id = "a" + std::to_string(a);
            while (subs[id].empty())
                for (const auto& t : topics)
                    if (rng() % 3 == 0) subs[id].insert(t);
            bus.register_agent(id, subs[id]);
            ids.push_back(id);
        }
        // expected deliveries come from the publish schedule alone
        std::map<std::string, std::vector<int>> expect, got;
        for (int i = 0; i < 2000; ++i, ++total) {
            std::vector<std::string> ts;
            for (int k = 1 + static_cast<int>(rng() % 3); k > 0; --k) ts.push_back(topics[rng() % topics.size()]);
            std::size_t receivers = 0;
            for (const auto& id : ids) {
                if (std::any_of(ts.begin(), ts.end(), [&](const std::string& t) { return subs[id].count(t) > 0; })) {
                    expect[id].push_back(i);
                    ++receivers;
                }
            }
            const std::size_t delivered = bus.publish(ids[rng() % ids.size()], ts, agents::RoleMarker::agent, std::to_string(i));
            o.check(delivered == receivers, "multi-topic message delivered more than once");
            if (rng() % 5 == 0) {
                const auto& who = ids[rng() % ids.size()];
                for (const auto& m : bus.drain(who)) got[who].push_back(std::stoi(m.content));
            }
        }
        for (const auto& id : ids) {
            for (const auto& m : bus.drain(id)) got[id].push_back(std::stoi(m.content));
            o.check(got[id] == expect[id], "seed " + std::to_string(seed) + " receiver " + id + " saw a different sequence");
        }
    }
    return total;
}

agents::PipelineConfig e2e_config(const std::filesystem::path& run_dir) {
    agents::PipelineConfig c;
    c.run_dir = run_dir;
    c.dataset_path = (kData / "synthetic.csv").string();
    c.horizon = 4;
    c.search.max_trials = 20;
    c.search.init_samples = 10;
    c.search.batch_size = 5;
    c.search.seed = 3;
    c.training.max_epochs = 8;
    return c;
}

std::string reproducible(const agents::RunDirectory& dir, const std::string& file, const char* volatile_key) {
    std::string out;
    for (auto j : dir.read_jsonl(file)) {
        j.erase(volatile_key);
        out += j.dump() + "\n";
    }
    return out;
}

void bus_and_pipeline(Outcome& o) {
    const std::size_t messages = bus_property(o);

    scratch::TempDir a("accept-a"), b("accept-b");
    std::vector<std::string> trials, transcripts;
    double loss = 0.0, persistence = 0.0;
    for (const auto* dir : {&a, &b}) {
        const auto cfg = e2e_config(dir->path());
        agents::ScriptedAnswers answers({}, {{"dataset_path", cfg.dataset_path},
                                             {"semantics", "yes"},
                                             {"task", "interval 0 horizon 4"},
                                             {"metric", "mae"},
                                             {"postprocess", "none"}});
        auto backend = agents::ScriptedBackend::from_file(kData / "scripted_rules.json");
        agents::Pipeline p(cfg, backend, answers);
        const auto out = p.run();
        o.check(out.completed, "pipeline did not complete: " + out.error);
        if (!out.completed) return;
        const agents::RunDirectory run(dir->path());
        const Json state = run.read_json("state.json");
        for (const char* stage : {"prepare.metric", "optimize", "deploy"}) {
            const auto& done = state["completed"];
            o.check(std::find(done.begin(), done.end(), stage) != done.end(), std::string("stage missing: ") + stage);
        }
        const Json best = run.read_json("best.json");
        loss = best["loss"].get<double>();
        persistence = best["persistence_val_mae"].get<double>();
        o.check(loss < persistence, "val MAE " + std::to_string(loss) + " not below persistence " + std::to_string(persistence));
        trials.push_back(reproducible(run, "trials.jsonl", "timing"));
        transcripts.push_back(reproducible(run, "transcript.jsonl", "timestamp"));
    }
    o.check(trials[0] == trials[1], "ledgers differ between identical runs");
    o.check(transcripts[0] == transcripts[1], "transcripts differ between identical runs");
    o.detail << messages << " bus messages exactly once in order; pipeline val MAE " << loss << " < persistence "
             << persistence << "; ledger and transcript byte-identical";
}

struct Criterion {
    std::string name;
    std::function<void(Outcome&)> run;
    double limit_seconds;
};

}  // namespace

int main() {
    const double none = std::numeric_limits<double>::infinity();
    const std::vector<Criterion> criteria = {
        {"loss formulas", loss_formulas, 1.0},
        {"postprocessing", postprocessing, 1.0},
        {"token cost", token_cost_check, 1.0},
        {"optimizer convergence", convergence, 60.0},
        {"guidance efficacy", guidance_efficacy, 120.0},
        {"pruning invariant", pruning, none},
        {"stopping rules", stopping, none},
        {"models", model_checks, none},
        {"feature selection", feature_selection, none},
        {"bus and end-to-end pipeline", bus_and_pipeline, 300.0},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.check(false, std::string("threw: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs >= c.limit_seconds) o.check(false, "took " + std::to_string(secs) + " s");
        failed += !o.ok;
        std::cout << (o.ok ? "PASS " : "FAIL ") << c.name << ": " << o.detail.str() << " [" << std::fixed
                  << std::setprecision(2) << secs << " s]" << std::defaultfloat << std::setprecision(6) << "\n"
                  << std::flush;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
    return failed ? 1 : 0;
}
