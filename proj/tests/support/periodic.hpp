#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "loadloop/core/time.hpp"
#include "loadloop/dataset/dataset.hpp"

namespace periodic {

inline std::vector<loadloop::Timestamp> hours_from(loadloop::Timestamp t0, int n) {
    std::vector<loadloop::Timestamp> out;
    for (int h = 0; h < n; ++h) out.push_back(t0 + h * loadloop::kSecondsPerHour);
    return out;
}

// Daily-periodic load driven by temperature, plus a noise-only humidity column.
inline loadloop::dataset::CleanDataset data(int days, unsigned seed = 1) {
    using loadloop::dataset::ColumnRole;
    loadloop::dataset::CleanDataset d;
    d.timestamps = hours_from(loadloop::from_civil(2024, 1, 1), days * 24);
    d.columns = {"load", "temperature", "humidity"};
    d.roles = {ColumnRole::load, ColumnRole::temperature, ColumnRole::humidity};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    d.values.assign(3, std::vector<double>(d.timestamps.size()));
    for (std::size_t r = 0; r < d.timestamps.size(); ++r) {
        const double h = static_cast<double>(r % 24);
        d.values[1][r] = 15.0 + 8.0 * std::sin(2 * M_PI * (h - 9) / 24.0) + noise(rng);
        d.values[0][r] = 500.0 + 100.0 * std::sin(2 * M_PI * h / 24.0) + 3.0 * d.values[1][r] + noise(rng);
        d.values[2][r] = 60.0 + 5.0 * noise(rng);
    }
    return d;
}

inline loadloop::dataset::TaskSpec task(int interval, int horizon) {
    loadloop::dataset::TaskSpec t;
    t.interval = interval;
    t.horizon = horizon;
    return t;
}

}  // namespace periodic
