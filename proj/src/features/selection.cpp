#include <algorithm>
#include <cmath>
#include <numeric>

#include "loadloop/features/features.hpp"

namespace loadloop::features {

namespace {

// Returns 0 for a zero-variance column.
double abs_pearson(std::span<const double> x, std::span<const double> y, double y_mean, double y_ss) {
    const auto n = static_cast<double>(x.size());
    const double x_mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - x_mean;
        sxy += dx * (y[i] - y_mean);
        sxx += dx * dx;
    }
    if (sxx <= 0.0) return 0.0;
    return std::abs(sxy / std::sqrt(sxx * y_ss));
}

}  // namespace

std::vector<std::string> rank_by_correlation(const NamedColumns& candidates, std::span<const double> target) {
    if (target.size() < 3) throw ValidationError("correlation selection needs at least 3 aligned rows");
    const auto n = static_cast<double>(target.size());
    const double y_mean = std::accumulate(target.begin(), target.end(), 0.0) / n;
    double y_ss = 0.0;
    for (double y : target) y_ss += (y - y_mean) * (y - y_mean);
    if (y_ss <= 0.0) throw ValidationError("constant target");

    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (candidates.columns[c].size() != target.size())
            throw ValidationError("candidate '" + candidates.names[c] + "' is not aligned with the target");
        scored.emplace_back(abs_pearson(candidates.columns[c], target, y_mean, y_ss), c);
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return candidates.names[a.second] < candidates.names[b.second];
    });
    std::vector<std::string> out;
    out.reserve(scored.size());
    for (const auto& [r, c] : scored) out.push_back(candidates.names[c]);
    return out;
}

NamedColumns pearson_select(const NamedColumns& candidates, std::span<const double> target, double top_ratio) {
    if (top_ratio < 0.0 || top_ratio > 1.0) throw ValidationError("top ratio outside [0, 1]");
    const auto ranked = rank_by_correlation(candidates, target);
    // Guard against 0.3 * 10 = 3.0000000000000004 rounding up.
    const auto keep = static_cast<std::size_t>(std::ceil(top_ratio * static_cast<double>(ranked.size()) - 1e-9));
    NamedColumns out;
    for (std::size_t i = 0; i < keep && i < ranked.size(); ++i) {
        const auto it = std::find(candidates.names.begin(), candidates.names.end(), ranked[i]);
        out.append(*it, candidates.columns[static_cast<std::size_t>(it - candidates.names.begin())]);
    }
    return out;
}

}  // namespace loadloop::features
