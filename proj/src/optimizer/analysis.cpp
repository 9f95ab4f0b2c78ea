#include <cmath>
#include <numeric>
#include <sstream>

#include "loadloop/optimizer/optimizer.hpp"

namespace loadloop::optimizer {

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("spearman needs equal-length inputs");
    if (a.size() < 2) return 0.0;
    return pearson(ranks(a), ranks(b));
}

TrialSummary summarize_trials(const Ledger& ledger, std::size_t batch_size) {
    TrialSummary s;
    s.total = ledger.size();
    for (const auto& r : ledger.records()) {
        TypeSummary& t = s.per_type[r.config.model_type];
        ++t.count;
        if (r.failed()) {
            ++t.failed;
            ++s.failed;
            continue;
        }
        if (!t.best_loss || *r.loss < *t.best_loss) {
            t.best_loss = r.loss;
            t.best_config = r.config;
        }
    }
    s.best_index = ledger.best_index();
    if (s.best_index) s.best_loss = ledger[*s.best_index].loss;

    const std::size_t window = 2 * std::max<std::size_t>(1, batch_size);
    const std::size_t split = ledger.size() > window ? ledger.size() - window : 0;
    double before = std::numeric_limits<double>::infinity(), recent = before;
    for (std::size_t i = 0; i < ledger.size(); ++i) {
        if (!ledger[i].loss) continue;
        double& slot = i < split ? before : recent;
        slot = std::min(slot, *ledger[i].loss);
    }
    s.trend = recent < before ? "improving" : "flat";
    return s;
}

std::string TrialSummary::render() const {
    std::ostringstream out;
    out << total << " trials (" << failed << " failed)";
    if (best_loss) out << ", best loss " << fmt(*best_loss) << " at trial " << *best_index;
    out << ", recent trend " << trend << "\n";
    for (const auto& [type, t] : per_type) {
        out << "  " << type << ": " << t.count << " trials";
        if (t.failed) out << ", " << t.failed << " failed";
        if (t.best_loss) out << ", best " << fmt(*t.best_loss);
        out << "\n";
    }
    return out.str();
}

Json to_json(const TrialSummary& s) {
    Json types = Json::object();
    for (const auto& [type, t] : s.per_type) {
        types[type] = {{"count", t.count},
                       {"failed", t.failed},
                       {"best_loss", t.best_loss ? Json(*t.best_loss) : Json(nullptr)},
                       {"best_config", t.best_config ? to_json(*t.best_config) : Json(nullptr)}};
    }
    return {{"total", s.total},
            {"failed", s.failed},
            {"per_type", types},
            {"best_loss", s.best_loss ? Json(*s.best_loss) : Json(nullptr)},
            {"best_index", s.best_index ? Json(*s.best_index) : Json(nullptr)},
            {"trend", s.trend},
            {"text", s.render()}};
}

std::vector<std::pair<std::string, double>> hyperparameter_importance(const Ledger& ledger, const TypeSpace& type) {
    std::vector<const TrialRecord*> trials;
    for (const auto& r : ledger.records())
        if (r.config.model_type == type.model_type && r.loss) trials.push_back(&r);
    if (trials.size() < 10)
        throw ValidationError("importance needs at least 10 completed " + type.model_type + " trials, have " +
                              std::to_string(trials.size()));

    std::vector<std::pair<std::string, double>> out;
    for (const auto& d : type.dims) {
        std::vector<const TrialRecord*> on;
        for (const auto* r : trials)
            if (r->config.params.count(d.name)) on.push_back(r);
        double score = 0.0;
        if (on.size() >= 3) {
            std::vector<double> loss;
            for (const auto* r : on) loss.push_back(*r->loss);
            if (d.kind == DimKind::categorical) {
                for (const auto& c : d.choices) {
                    std::vector<double> ind;
                    for (const auto* r : on) ind.push_back(r->config.params.at(d.name) == c ? 1.0 : 0.0);
                    score = std::max(score, std::abs(spearman(ind, loss)));
                }
            } else {
                std::vector<double> val;
                for (const auto* r : on) val.push_back(as_number(r->config.params.at(d.name)));
                score = std::abs(spearman(val, loss));
            }
        }
        out.emplace_back(d.name, score);
    }
    const double total = std::accumulate(out.begin(), out.end(), 0.0, [](double a, const auto& p) { return a + p.second; });
    for (auto& p : out) p.second = total > 0 ? p.second / total : 1.0 / static_cast<double>(out.size());
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return out;
}

std::vector<double> best_so_far(const Ledger& ledger) {
    std::vector<double> curve;
    std::optional<double> best;
    for (const auto& r : ledger.records()) {
        if (r.loss && (!best || *r.loss < *best)) best = r.loss;
        curve.push_back(best ? *best : std::numeric_limits<double>::infinity());
    }
    if (!best) throw ValidationError("no completed trial in the ledger");
    return curve;
}

}  // namespace loadloop::optimizer
