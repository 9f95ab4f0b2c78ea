#include <algorithm>

#include "loadloop/features/features.hpp"

namespace loadloop::features {

namespace {

std::size_t first_fixed_day(int interval) { return static_cast<std::size_t>((interval + 2 + 23) / 24); }

void require_history(std::size_t origin, std::size_t needed, const char* what) {
    if (origin < needed)
        throw ValidationError(std::string("insufficient ") + what + " history: origin " + std::to_string(origin) +
                              " needs " + std::to_string(needed) + " rows before it");
}

}  // namespace

NamedColumns candidate_temperature_lags(std::span<const double> temperature, std::span<const std::size_t> origins) {
    NamedColumns out;
    out.names.reserve(kTemperatureLagHours + 3);
    for (int k = 1; k <= kTemperatureLagHours; ++k) out.names.push_back("temp_lag_" + std::to_string(k));
    for (int d = 1; d <= 3; ++d) out.names.push_back("temp_day_mean_" + std::to_string(d));
    out.columns.assign(out.names.size(), std::vector<double>(origins.size()));
    for (std::size_t r = 0; r < origins.size(); ++r) {
        const std::size_t t = origins[r];
        require_history(t, kTemperatureLagHours, "temperature");
        for (int k = 1; k <= kTemperatureLagHours; ++k) out.columns[k - 1][r] = temperature[t - k];
        for (int d = 0; d < 3; ++d) {
            double sum = 0.0;
            for (int k = 1; k <= 24; ++k) sum += temperature[t - (d * 24 + k)];
            out.columns[kTemperatureLagHours + d][r] = sum / 24.0;
        }
    }
    return out;
}

NamedColumns candidate_load_lags(std::span<const double> load, std::span<const std::size_t> origins) {
    NamedColumns out;
    for (int k = 1; k <= kLoadLagHours; ++k) out.names.push_back("load_lag_" + std::to_string(k));
    out.columns.assign(out.names.size(), std::vector<double>(origins.size()));
    for (std::size_t r = 0; r < origins.size(); ++r) {
        const std::size_t t = origins[r];
        require_history(t, kLoadLagHours, "load");
        for (int k = 1; k <= kLoadLagHours; ++k) out.columns[k - 1][r] = load[t - k];
    }
    return out;
}

NamedColumns fixed_load_lags(std::span<const double> load, std::span<const std::size_t> origins, int interval) {
    const std::size_t k0 = first_fixed_day(interval);
    NamedColumns out;
    for (std::size_t k = k0; k < k0 + kFixedLagDays; ++k) out.names.push_back("load_same_hour_d" + std::to_string(k));
    out.columns.assign(out.names.size(), std::vector<double>(origins.size()));
    for (std::size_t r = 0; r < origins.size(); ++r) {
        const std::size_t first_target = origins[r] + static_cast<std::size_t>(interval) + 1;
        require_history(first_target, 24 * (k0 + kFixedLagDays - 1), "load");
        for (std::size_t j = 0; j < static_cast<std::size_t>(kFixedLagDays); ++j)
            out.columns[j][r] = load[first_target - 24 * (k0 + j)];
    }
    return out;
}

std::vector<double> build_sequence_input(std::span<const double> load, int frequency, int length, std::size_t origin) {
    if (frequency < 1 || length < 1) throw ValidationError("sequence frequency and length must be positive");
    const auto span = static_cast<std::size_t>(frequency) * static_cast<std::size_t>(length);
    require_history(origin, span, "load sequence");
    std::vector<double> out(static_cast<std::size_t>(length));
    for (int j = 0; j < length; ++j)
        out[static_cast<std::size_t>(j)] = load[origin - static_cast<std::size_t>(frequency) * static_cast<std::size_t>(length - j)];
    return out;
}

NamedColumns interaction_terms(const NamedColumns& calendar, const NamedColumns& temperature) {
    NamedColumns out;
    for (std::size_t a = 0; a < calendar.size(); ++a) {
        for (std::size_t b = 0; b < temperature.size(); ++b) {
            const auto& x = calendar.columns[a];
            const auto& y = temperature.columns[b];
            std::vector<double> p(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) p[i] = x[i] * y[i];
            out.append(calendar.names[a] + "*" + temperature.names[b], std::move(p));
        }
    }
    return out;
}

std::size_t required_history(const FeatureConfig& config, int interval) {
    std::size_t need = kLoadLagHours;
    // Fixed same-hour lags reach 24 * (k0 + 6) rows behind the first target hour.
    const std::size_t fixed_reach = 24 * (first_fixed_day(interval) + kFixedLagDays - 1);
    const std::size_t fixed_need = fixed_reach > static_cast<std::size_t>(interval) + 1
                                       ? fixed_reach - static_cast<std::size_t>(interval) - 1
                                       : 0;
    need = std::max(need, fixed_need);
    if (config.sequence_input)
        need = std::max(need, static_cast<std::size_t>(config.sequence_frequency * config.sequence_length));
    return need;
}

}  // namespace loadloop::features
