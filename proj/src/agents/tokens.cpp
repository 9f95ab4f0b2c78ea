#include <cmath>
#include <iomanip>
#include <sstream>

#include "loadloop/agents/agents.hpp"

namespace loadloop::agents {

double token_cost(std::uint64_t input_tokens, std::uint64_t output_tokens, const Prices& prices) {
    return (static_cast<double>(input_tokens) * prices.input_per_million +
            static_cast<double>(output_tokens) * prices.output_per_million) / 1e6;
}

std::uint64_t approximate_tokens(std::string_view text) {
    std::uint64_t words = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return (words * 4 + 1) / 3;
}

void TokenLedger::record_usage(const std::string& agent_id, std::uint64_t input_tokens, std::uint64_t output_tokens) {
    std::lock_guard lock(mu_);
    auto& u = usage_[agent_id];
    u.first += input_tokens;
    u.second += output_tokens;
}

TokenReport TokenLedger::report() const {
    std::lock_guard lock(mu_);
    TokenReport r;
    r.total.agent_id = "total";
    for (const auto& [id, u] : usage_) {
        r.total.input_tokens += u.first;
        r.total.output_tokens += u.second;
    }
    auto share = [](std::uint64_t part, std::uint64_t whole) {
        return whole ? 100.0 * static_cast<double>(part) / static_cast<double>(whole) : 0.0;
    };
    for (const auto& [id, u] : usage_) {
        TokenRow row{id, u.first, u.second, share(u.first, r.total.input_tokens), share(u.second, r.total.output_tokens),
                     token_cost(u.first, u.second, prices_)};
        r.rows.push_back(row);
    }
    r.total.input_share = r.total.input_tokens ? 100.0 : 0.0;
    r.total.output_share = r.total.output_tokens ? 100.0 : 0.0;
    r.total.cost = token_cost(r.total.input_tokens, r.total.output_tokens, prices_);
    return r;
}

void TokenLedger::restore(const Json& j) {
    std::lock_guard lock(mu_);
    usage_.clear();
    for (const auto& row : j.at("rows"))
        usage_[row.at("agent").get<std::string>()] = {row.at("input_tokens").get<std::uint64_t>(),
                                                     row.at("output_tokens").get<std::uint64_t>()};
}

std::string TokenReport::render() const {
    std::ostringstream out;
    out << std::left << std::setw(24) << "agent" << std::right << std::setw(12) << "input" << std::setw(9) << "%"
        << std::setw(12) << "output" << std::setw(9) << "%" << std::setw(10) << "cost\n";
    auto line = [&](const TokenRow& r) {
        out << std::left << std::setw(24) << r.agent_id << std::right << std::setw(12) << r.input_tokens << std::setw(8)
            << std::fixed << std::setprecision(1) << r.input_share << "%" << std::setw(12) << r.output_tokens
            << std::setw(8) << r.output_share << "%" << std::setw(10) << std::setprecision(3) << r.cost << "\n";
    };
    for (const auto& r : rows) line(r);
    line(total);
    return out.str();
}

Json to_json(const TokenReport& report) {
    auto row = [](const TokenRow& r) {
        return Json{{"agent", r.agent_id},        {"input_tokens", r.input_tokens}, {"output_tokens", r.output_tokens},
                    {"input_share", r.input_share}, {"output_share", r.output_share}, {"cost", r.cost}};
    };
    Json rows = Json::array();
    for (const auto& r : report.rows) rows.push_back(row(r));
    return {{"rows", rows}, {"total", row(report.total)}};
}

}  // namespace loadloop::agents
