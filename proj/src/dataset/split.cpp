#include <cmath>

#include "loadloop/dataset/dataset.hpp"

namespace loadloop::dataset {

SplitRanges split_chronological(std::size_t rows, const SplitRatios& ratios, std::size_t min_length) {
    if (!(ratios.train > 0.0) || !(ratios.val > 0.0) || !(ratios.test > 0.0))
        throw ValidationError("split ratios must all be positive", "ratios");
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw ValidationError("split ratios must sum to 1", "ratios");

    const auto n = static_cast<double>(rows);
    const auto train_end = static_cast<std::size_t>(std::floor(n * ratios.train));
    const auto val_end = train_end + static_cast<std::size_t>(std::floor(n * ratios.val));
    SplitRanges s{{0, train_end}, {train_end, val_end}, {val_end, rows}};

    auto check = [&](const IndexRange& r, const char* name) {
        if (r.size() < min_length)
            throw ValidationError(std::string(name) + " split has " + std::to_string(r.size()) +
                                      " rows, shorter than the lookback requirement of " + std::to_string(min_length),
                                  "ratios");
    };
    check(s.train, "train");
    check(s.val, "val");
    check(s.test, "test");
    return s;
}

}  // namespace loadloop::dataset
