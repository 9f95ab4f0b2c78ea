#include <atomic>
#include <chrono>
#include <deque>
#include <thread>

#include "loadloop/optimizer/optimizer.hpp"

namespace loadloop::optimizer {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double unix_now() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::optional<double> best_loss(const Ledger& ledger) {
    const auto i = ledger.best_index();
    if (!i) return std::nullopt;
    return ledger[*i].loss;
}

std::vector<TrialRecord> evaluate_batch(const std::vector<Proposal>& proposals, std::size_t first_index,
                                        std::size_t iteration, const RunSettings& settings, const Evaluator& evaluator) {
    std::vector<TrialRecord> out(proposals.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t k = next++; k < proposals.size(); k = next++) {
            TrialRecord& r = out[k];
            r.trial_index = first_index + k;
            r.config = proposals[k].config;
            r.origin = proposals[k].origin;
            r.iteration = iteration;
            r.seed = trial_seed(settings.seed, r.trial_index);
            r.timing.started_at = unix_now();
            const auto t0 = std::chrono::steady_clock::now();
            try {
                EvalResult e = evaluator(r.config, r.seed);
                r.loss = e.loss;
                r.error = std::move(e.error);
                r.report = std::move(e.report);
                if (r.loss && !std::isfinite(*r.loss)) {
                    r.loss.reset();
                    if (r.error.empty()) r.error = "non-finite loss";
                }
                if (!r.loss && r.error.empty()) r.error = "evaluation failed";
            } catch (const std::exception& ex) {
                r.loss.reset();
                r.error = ex.what();
            }
            r.timing.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            r.timing.finished_at = unix_now();
        }
    };
    const std::size_t workers = std::min(std::max<std::size_t>(1, settings.workers), proposals.size());
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return out;
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t run_seed, std::size_t trial_index) {
    return splitmix64(run_seed ^ splitmix64(static_cast<std::uint64_t>(trial_index) + 1));
}

void RunSettings::validate() const {
    if (batch_size < 1) throw ValidationError("batch size must be at least 1", "batch_size");
    if (max_trials < 1) throw ValidationError("max trials must be at least 1", "max_trials");
    if (init_samples < 1) throw ValidationError("init samples must be at least 1", "init_samples");
    if (init_samples > max_trials) throw ValidationError("init samples exceed max trials", "init_samples");
    if (!(tpe.gamma > 0 && tpe.gamma < 1)) throw ValidationError("gamma must lie in (0, 1)", "gamma");
}

RunResult run_optimization(const SearchSpace& space, const RunSettings& settings, GuidanceSource* guidance,
                           const Evaluator& evaluator, const EventSink& sink, Ledger prior) {
    settings.validate();
    space.validate();
    const SearchSpace original = space;
    RunResult result;
    result.ledger = std::move(prior);
    result.final_space = space;
    Ledger& ledger = result.ledger;
    SearchSpace& current = result.final_space;
    auto emit = [&](std::string type, Json payload) {
        if (sink) sink(OptimizerEvent{std::move(type), std::move(payload)});
    };
    auto commit = [&](std::vector<TrialRecord> records) {
        for (auto& r : records) {
            ledger.append(std::move(r));
            emit("trial", to_json(ledger.records().back()));
        }
    };
    auto halted = [&]() -> std::optional<std::string> {
        if (ledger.size() >= settings.max_trials) return "max_trials";
        const auto best = best_loss(ledger);
        if (settings.epsilon && best && *best <= *settings.epsilon) return "target_reached";
        return std::nullopt;
    };

    // initial design; a resumed run only evaluates the part it has not seen
    if (ledger.size() < settings.init_samples) {
        Rng rng(splitmix64(settings.seed));
        const auto init = random_sample(space, settings.init_samples, rng);
        std::vector<Proposal> todo;
        for (std::size_t i = ledger.size(); i < init.size(); ++i) todo.push_back({init[i], TrialOrigin::random_init});
        commit(evaluate_batch(todo, ledger.size(), 0, settings, evaluator));
        emit("iteration", {{"iteration", 0}, {"trials", ledger.size()}, {"best_loss", best_loss(ledger) ? Json(*best_loss(ledger)) : Json(nullptr)}});
    }

    std::size_t iteration = 1;
    for (const auto& r : ledger.records()) iteration = std::max(iteration, r.iteration + 1);
    std::deque<Configuration> pending;

    while (true) {
        if (auto why = halted()) {
            result.stop_reason = *why;
            break;
        }
        GuidanceContext ctx;
        if (guidance) {
            const IterationInfo info{iteration, ledger.size(), best_loss(ledger)};
            auto directives = guidance->poll(info, ledger, current);
            if (!directives.empty()) {
                Json list = Json::array();
                for (const auto& d : directives) list.push_back(to_json(d));
                try {
                    GuidanceResult g = apply_guidance(current, original, directives);
                    current = std::move(g.space);
                    ctx = std::move(g.context);
                    emit("guidance", {{"iteration", iteration}, {"directives", list}});
                } catch (const ValidationError& e) {
                    guidance->rejected(e.what());
                    emit("guidance_rejected", {{"iteration", iteration}, {"directives", list}, {"reason", e.what()}});
                }
            }
        }
        for (auto& c : ctx.injections) pending.push_back(std::move(c));
        ctx.injections.clear();

        const std::size_t b = std::min(settings.batch_size, settings.max_trials - ledger.size());
        while (!pending.empty() && ctx.injections.size() < b) {
            ctx.injections.push_back(std::move(pending.front()));
            pending.pop_front();
        }
        Rng rng(splitmix64(settings.seed ^ splitmix64(0x1000 + iteration)));
        const auto proposals = propose_batch(current, ledger, ctx, b, rng, settings.tpe);
        commit(evaluate_batch(proposals, ledger.size(), iteration, settings, evaluator));
        emit("iteration", {{"iteration", iteration},
                           {"trials", ledger.size()},
                           {"best_loss", best_loss(ledger) ? Json(*best_loss(ledger)) : Json(nullptr)},
                           {"summary", to_json(summarize_trials(ledger, settings.batch_size))}});
        ++iteration;
    }
    result.best_index = ledger.best_index();
    emit("halt", {{"reason", result.stop_reason},
                  {"trials", ledger.size()},
                  {"best_index", result.best_index ? Json(*result.best_index) : Json(nullptr)}});
    return result;
}

}  // namespace loadloop::optimizer
