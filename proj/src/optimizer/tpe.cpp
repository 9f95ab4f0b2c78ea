#include <cmath>
#include <limits>
#include <numeric>

#include "loadloop/optimizer/optimizer.hpp"

namespace loadloop::optimizer {

namespace {

constexpr double kLogZero = -1e300;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double log_sum_exp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return kLogZero;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

std::optional<std::size_t> choice_index(const Dimension& d, const ParamValue& v) {
    for (std::size_t i = 0; i < d.choices.size(); ++i) {
        Dimension probe;
        probe.kind = DimKind::categorical;
        probe.choices = {d.choices[i]};
        if (probe.contains(v)) return i;
    }
    return std::nullopt;
}

// Trials sorted best first; failed trials sort last.
std::vector<std::size_t> rank_trials(const Ledger& ledger, const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> order = idx;
    auto key = [&](std::size_t i) {
        const auto& r = ledger[i];
        return r.loss ? *r.loss : std::numeric_limits<double>::infinity();
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    return order;
}

DimDensity fit_density(const Dimension& d, const Ledger& ledger, const std::vector<std::size_t>& trials,
                       const TpeSettings& settings) {
    DimDensity out;
    if (d.kind == DimKind::categorical) {
        std::vector<std::size_t> picks;
        for (std::size_t i : trials) {
            const auto it = ledger[i].config.params.find(d.name);
            if (it == ledger[i].config.params.end()) continue;
            if (auto c = choice_index(d, it->second)) picks.push_back(*c);
        }
        out.categorical = CategoricalDensity::fit(picks, d.choices.size(), settings.prior_weight);
    } else {
        std::vector<double> pts;
        for (std::size_t i : trials) {
            const auto it = ledger[i].config.params.find(d.name);
            if (it == ledger[i].config.params.end() || std::holds_alternative<std::string>(it->second)) continue;
            const double v = as_number(it->second);
            if (d.scale == Scale::log && v <= 0) continue;
            pts.push_back(d.to_working(v));
        }
        const auto [lo, hi] = d.working_bounds();
        out.numeric = Parzen::fit(pts, lo, hi, settings);
    }
    return out;
}

double dim_log_ratio(const Dimension& d, const DimDensity& good, const DimDensity& bad, const ParamValue& v) {
    if (d.kind == DimKind::categorical) {
        const auto c = choice_index(d, v);
        if (!c || !good.categorical || !bad.categorical) return 0.0;
        return std::log(good.categorical->probs[*c]) - std::log(bad.categorical->probs[*c]);
    }
    if (!good.numeric || !bad.numeric || std::holds_alternative<std::string>(v)) return 0.0;
    const double w = d.to_working(as_number(v));
    return good.numeric->log_pdf(w) - bad.numeric->log_pdf(w);
}

}  // namespace

Parzen Parzen::fit(const std::vector<double>& points, double low, double high, const TpeSettings& settings) {
    Parzen p;
    p.low = low;
    p.high = high;
    const double range = high - low;
    // the floor starts wide and only reaches bandwidth_floor near 200 points; a fixed 1% floor
    // collapsed the good-set kernels onto the first basin found
    const double n = static_cast<double>(points.size());
    const double floor = std::max(settings.bandwidth_floor, 1.0 / std::min(1.0 / settings.bandwidth_floor, 0.5 * n + 1.0)) * range;
    double bw = floor;
    if (points.size() >= 2) {
        const double mean = std::accumulate(points.begin(), points.end(), 0.0) / static_cast<double>(points.size());
        double var = 0.0;
        for (double x : points) var += (x - mean) * (x - mean);
        var /= static_cast<double>(points.size() - 1);
        const double scott = 1.06 * std::sqrt(var) * std::pow(static_cast<double>(points.size()), -0.2);
        bw = std::clamp(scott, floor, range);
    }
    for (double x : points) {
        p.mus.push_back(x);
        p.sigmas.push_back(bw);
        p.weights.push_back(1.0);
    }
    // broad prior component keeps every region reachable
    p.mus.push_back(low + range / 2.0);
    p.sigmas.push_back(range);
    p.weights.push_back(settings.prior_weight);
    return p;
}

double Parzen::log_pdf(double x) const {
    if (x < low - 1e-12 || x > high + 1e-12) return kLogZero;
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<double> terms;
    terms.reserve(mus.size());
    for (std::size_t i = 0; i < mus.size(); ++i) {
        const double s = sigmas[i];
        const double mass = normal_cdf((high - mus[i]) / s) - normal_cdf((low - mus[i]) / s);
        if (mass <= 0) continue;
        const double z = (x - mus[i]) / s;
        terms.push_back(std::log(weights[i] / total) - 0.5 * z * z - std::log(s * std::sqrt(2.0 * M_PI)) - std::log(mass));
    }
    return log_sum_exp(terms);
}

double Parzen::sample(Rng& rng) const {
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const std::size_t i = pick(rng);
    std::normal_distribution<double> n(mus[i], sigmas[i]);
    for (int tries = 0; tries < 64; ++tries) {
        const double x = n(rng);
        if (x >= low && x <= high) return x;
    }
    return std::clamp(mus[i], low, high);
}

CategoricalDensity CategoricalDensity::fit(const std::vector<std::size_t>& picks, std::size_t choices, double prior_weight) {
    CategoricalDensity d;
    d.probs.assign(choices, prior_weight);
    for (std::size_t c : picks) d.probs[c] += 1.0;
    const double total = std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
    for (double& p : d.probs) p /= total;
    return d;
}

std::size_t CategoricalDensity::sample(Rng& rng) const {
    std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
    return pick(rng);
}

SurrogateState fit_surrogate(const SearchSpace& space, const Ledger& ledger, const TpeSettings& settings) {
    SurrogateState state;
    std::vector<std::size_t> all;
    for (const auto& t : space.types) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ledger.size(); ++i)
            if (ledger[i].config.model_type == t.model_type) idx.push_back(i);
        all.insert(all.end(), idx.begin(), idx.end());

        TypeSurrogate s;
        s.model_type = t.model_type;
        s.trials = idx.size();
        if (idx.size() >= 2) {
            const auto order = rank_trials(ledger, idx);
            s.good = good_set_size(order.size(), settings.gamma);
            const std::vector<std::size_t> good(order.begin(), order.begin() + static_cast<long>(s.good));
            const std::vector<std::size_t> bad(order.begin() + static_cast<long>(s.good), order.end());
            for (const auto& d : t.dims) {
                s.good_density[d.name] = fit_density(d, ledger, good, settings);
                s.bad_density[d.name] = fit_density(d, ledger, bad, settings);
            }
        }
        state.per_type[t.model_type] = std::move(s);
    }

    const std::size_t m = space.types.size();
    std::vector<double> q(m, 1.0 / static_cast<double>(m));
    if (all.size() >= 2) {
        std::sort(all.begin(), all.end());
        const auto order = rank_trials(ledger, all);
        const std::size_t n_good = good_set_size(order.size(), settings.gamma);
        const double w = settings.prior_weight;
        double total = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            double g = 0, b = 0;
            for (std::size_t r = 0; r < order.size(); ++r)
                if (ledger[order[r]].config.model_type == space.types[k].model_type) (r < n_good ? g : b) += 1.0;
            const double l_m = (g + w) / (static_cast<double>(n_good) + w * static_cast<double>(m));
            const double g_m = (b + w) / (static_cast<double>(order.size() - n_good) + w * static_cast<double>(m));
            q[k] = l_m / g_m;
            total += q[k];
        }
        for (double& v : q) v /= total;
    }
    const double floor = std::min(settings.type_floor, 1.0 / static_cast<double>(m));
    for (std::size_t k = 0; k < m; ++k)
        state.type_probability[space.types[k].model_type] = floor + (1.0 - floor * static_cast<double>(m)) * q[k];
    return state;
}

double acquisition(const TypeSpace& type, const TypeSurrogate& s, const ParamMap& params) {
    double score = 0.0;
    for (const auto& d : type.dims) {
        const auto it = params.find(d.name);
        if (it == params.end()) continue;
        const auto g = s.good_density.find(d.name);
        const auto b = s.bad_density.find(d.name);
        if (g == s.good_density.end() || b == s.bad_density.end()) continue;
        score += dim_log_ratio(d, g->second, b->second, it->second);
    }
    return score;
}

ParamMap propose_for_type(const TypeSpace& type, const SurrogateState& state, const TpeSettings& settings, Rng& rng,
                          const ParamMap& fixed) {
    const auto it = state.per_type.find(type.model_type);
    if (it == state.per_type.end() || it->second.trials < 2) return sample_type(type, rng, fixed);
    const TypeSurrogate& s = it->second;

    ParamMap best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < std::max<std::size_t>(1, settings.candidates); ++c) {
        ParamMap params;
        for (const auto& d : type.dims) {
            if (!type.active(d, params)) continue;
            if (const auto f = fixed.find(d.name); f != fixed.end()) {
                params[d.name] = f->second;
                continue;
            }
            const DimDensity& g = s.good_density.at(d.name);
            if (d.kind == DimKind::categorical) params[d.name] = d.choices[g.categorical->sample(rng)];
            else params[d.name] = d.from_working(g.numeric->sample(rng));
        }
        const double score = acquisition(type, s, params);
        if (score > best_score || best.empty()) {
            best_score = score;
            best = std::move(params);
        }
    }
    return best;
}

std::vector<Proposal> propose_batch(const SearchSpace& space, const Ledger& ledger, const GuidanceContext& context,
                                    std::size_t batch, Rng& rng, const TpeSettings& settings) {
    if (context.injections.size() > batch)
        throw ValidationError("batch of " + std::to_string(batch) + " cannot hold " +
                              std::to_string(context.injections.size()) + " injected configurations");
    const SurrogateState state = fit_surrogate(space, ledger, settings);
    std::vector<Proposal> out;

    for (const auto& cfg : context.injections) {
        const TypeSpace* t = space.find(cfg.model_type);
        Configuration full = cfg;
        if (t) full.params = propose_for_type(*t, state, settings, rng, cfg.params);
        out.push_back({std::move(full), TrialOrigin::user_injected});
    }

    for (const auto& [type, count] : context.allocation) {
        const TypeSpace* t = space.find(type);
        if (!t) continue;
        for (int k = 0; k < count && out.size() < batch; ++k)
            out.push_back({{type, propose_for_type(*t, state, settings, rng)}, TrialOrigin::acquisition});
    }

    std::vector<double> weights;
    for (const auto& t : space.types) weights.push_back(state.type_probability.at(t.model_type));
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    while (out.size() < batch) {
        const TypeSpace& t = space.types[pick(rng)];
        out.push_back({{t.model_type, propose_for_type(t, state, settings, rng)}, TrialOrigin::acquisition});
    }
    return out;
}

}  // namespace loadloop::optimizer
