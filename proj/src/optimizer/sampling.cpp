#include "loadloop/optimizer/optimizer.hpp"

namespace loadloop::optimizer {

ParamValue sample_dimension(const Dimension& dim, Rng& rng) {
    if (dim.kind == DimKind::categorical) {
        std::uniform_int_distribution<std::size_t> pick(0, dim.choices.size() - 1);
        return dim.choices[pick(rng)];
    }
    const auto [lo, hi] = dim.working_bounds();
    std::uniform_real_distribution<double> u(lo, hi);
    return dim.from_working(u(rng));
}

ParamMap sample_type(const TypeSpace& type, Rng& rng, const ParamMap& fixed) {
    ParamMap params;
    for (const auto& d : type.dims) {
        if (!type.active(d, params)) continue;
        const auto it = fixed.find(d.name);
        params[d.name] = it != fixed.end() ? it->second : sample_dimension(d, rng);
    }
    return params;
}

std::vector<Configuration> random_sample(const SearchSpace& space, std::size_t count, Rng& rng) {
    if (space.types.empty()) throw ValidationError("cannot sample from an empty space");
    std::uniform_int_distribution<std::size_t> pick(0, space.types.size() - 1);
    std::vector<Configuration> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const TypeSpace& t = space.types[pick(rng)];
        out.push_back({t.model_type, sample_type(t, rng)});
    }
    return out;
}

}  // namespace loadloop::optimizer
