#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "loadloop/dataset/dataset.hpp"

namespace loadloop::dataset {

std::string generate_synthetic_csv(const SyntheticOptions& options) {
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << "timestamp,load,temperature,humidity\n";

    double temp_noise = 0.0;
    double load_noise = 0.0;
    const int hours = options.days * 24;
    for (int h = 0; h < hours; ++h) {
        const Timestamp ts = options.start + static_cast<Timestamp>(h) * kSecondsPerHour;
        const CivilTime c = to_civil(ts);
        const double day = h / 24.0;

        temp_noise = 0.8 * temp_noise + 0.6 * unit(rng);
        const double temperature = 18.0 + 6.0 * std::sin(two_pi * day / 60.0) +
                                   5.0 * std::sin(two_pi * (c.hour - 9) / 24.0) + temp_noise;
        const double humidity = std::clamp(65.0 - 1.5 * (temperature - 18.0) + 4.0 * unit(rng), 5.0, 100.0);

        const double daily = 0.55 * std::sin(two_pi * (c.hour - 7) / 24.0) +
                             0.25 * std::sin(2.0 * two_pi * (c.hour - 3) / 24.0);
        const double weekend = c.weekday >= 5 ? -0.15 : 0.0;
        const double cooling = 12.0 * std::max(0.0, temperature - 22.0);
        const double heating = 8.0 * std::max(0.0, 14.0 - temperature);

        load_noise = 0.7 * load_noise + options.noise * unit(rng);
        const double load = 1000.0 * (1.0 + weekend) + 250.0 * daily + cooling + heating + load_noise;

        os << format_timestamp(ts) << ',' << load << ',' << temperature << ',' << humidity << '\n';
    }
    return os.str();
}

}  // namespace loadloop::dataset
