#include "loadloop/agents/agents.hpp"

namespace loadloop::agents {

std::vector<optimizer::GuidanceDirective> default_strategy(const optimizer::TrialSummary& summary,
                                                           const std::vector<std::string>& enabled_types,
                                                           std::size_t batch_size) {
    if (summary.trend != "flat" || summary.total == 0 || enabled_types.empty() || batch_size == 0) return {};
    std::vector<std::string> under;
    for (const auto& t : enabled_types) {
        const auto it = summary.per_type.find(t);
        const std::size_t n = it == summary.per_type.end() ? 0 : it->second.count;
        if (static_cast<double>(n) < 0.1 * static_cast<double>(summary.total)) under.push_back(t);
    }
    if (under.empty()) return {};
    optimizer::GuidanceDirective d;
    d.kind = optimizer::DirectiveKind::allocate;
    const std::size_t share = batch_size / under.size();
    std::size_t extra = batch_size % under.size();
    for (const auto& t : under) {
        std::size_t n = share + (extra > 0 ? 1 : 0);
        if (extra > 0) --extra;
        if (n > 0) d.allocation[t] = static_cast<int>(n);
    }
    return {d};
}

}  // namespace loadloop::agents
