#include <cmath>

#include "loadloop/optimizer/optimizer.hpp"

namespace loadloop::optimizer {

namespace {

std::string kind_name(DirectiveKind k) {
    switch (k) {
        case DirectiveKind::prune_space: return "prune_space";
        case DirectiveKind::allocate: return "allocate";
        case DirectiveKind::inject: return "inject";
    }
    return "prune_space";
}

void restrict_dim(Dimension& d, const DimRestriction& r, const std::string& type) {
    const std::string where = type + "/" + d.name;
    if (d.kind == DimKind::categorical) {
        if (r.low || r.high) throw ValidationError(where + " is categorical; restrict it with choices", r.dim);
        if (r.choices.empty()) return;
        std::vector<ParamValue> kept;
        for (const auto& c : d.choices) {
            Dimension probe;
            probe.kind = DimKind::categorical;
            probe.choices = r.choices;
            if (probe.contains(c)) kept.push_back(c);
        }
        if (kept.empty()) throw ValidationError("restriction leaves " + where + " with no choices", r.dim);
        d.choices = std::move(kept);
        return;
    }
    if (!r.choices.empty()) throw ValidationError(where + " is numeric; restrict it with low/high", r.dim);
    double lo = std::max(d.low, r.low.value_or(d.low));
    double hi = std::min(d.high, r.high.value_or(d.high));
    if (d.kind == DimKind::integer) {
        const double base = d.low;
        lo = base + std::ceil((lo - base) / d.step - 1e-9) * d.step;
        hi = base + std::floor((hi - base) / d.step + 1e-9) * d.step;
        if (lo > hi) throw ValidationError("restriction leaves " + where + " with no grid points", r.dim);
    } else if (!(lo < hi)) {
        throw ValidationError("restriction leaves " + where + " empty", r.dim);
    }
    d.low = lo;
    d.high = hi;
}

}  // namespace

Json to_json(const GuidanceDirective& g) {
    Json j{{"kind", kind_name(g.kind)}};
    switch (g.kind) {
        case DirectiveKind::prune_space: {
            j["exclude_types"] = g.exclude_types;
            Json rs = Json::array();
            for (const auto& r : g.restrictions) {
                Json rj{{"model_type", r.model_type}, {"dim", r.dim}};
                if (r.low) rj["low"] = *r.low;
                if (r.high) rj["high"] = *r.high;
                if (!r.choices.empty()) {
                    Json c = Json::array();
                    for (const auto& v : r.choices) c.push_back(to_json(v));
                    rj["choices"] = c;
                }
                rs.push_back(rj);
            }
            j["restrict"] = rs;
            break;
        }
        case DirectiveKind::allocate: j["allocation"] = g.allocation; break;
        case DirectiveKind::inject: {
            Json c = Json::array();
            for (const auto& cfg : g.injections) c.push_back(to_json(cfg));
            j["configs"] = c;
            break;
        }
    }
    return j;
}

GuidanceDirective guidance_directive_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("directive must be an object");
    GuidanceDirective g;
    const std::string kind = j.value("kind", "");
    if (kind == "prune_space") {
        g.kind = DirectiveKind::prune_space;
        if (j.contains("exclude_types")) g.exclude_types = j["exclude_types"].get<std::vector<std::string>>();
        if (j.contains("restrict")) {
            for (const auto& rj : j["restrict"]) {
                DimRestriction r;
                r.model_type = rj.value("model_type", "*");
                r.dim = rj.at("dim").get<std::string>();
                if (rj.contains("low")) r.low = rj["low"].get<double>();
                if (rj.contains("high")) r.high = rj["high"].get<double>();
                if (rj.contains("choices"))
                    for (const auto& c : rj["choices"]) r.choices.push_back(param_value_from_json(c));
                g.restrictions.push_back(std::move(r));
            }
        }
    } else if (kind == "allocate") {
        g.kind = DirectiveKind::allocate;
        g.allocation = j.at("allocation").get<std::map<std::string, int>>();
    } else if (kind == "inject") {
        g.kind = DirectiveKind::inject;
        for (const auto& c : j.at("configs")) g.injections.push_back(configuration_from_json(c));
    } else {
        throw ValidationError("unknown directive kind '" + kind + "'", "kind");
    }
    return g;
}

GuidanceResult apply_guidance(const SearchSpace& current, const SearchSpace& original,
                              const std::vector<GuidanceDirective>& directives) {
    GuidanceResult out{current, {}};
    SearchSpace& space = out.space;
    for (const auto& g : directives) {
        switch (g.kind) {
            case DirectiveKind::prune_space: {
                for (const auto& name : g.exclude_types) {
                    if (!original.find(name)) throw ValidationError("unknown model type '" + name + "'", "exclude_types");
                    std::erase_if(space.types, [&](const TypeSpace& t) { return t.model_type == name; });
                }
                if (space.types.empty()) throw ValidationError("pruning would remove every model type", "exclude_types");
                for (const auto& r : g.restrictions) {
                    std::size_t hits = 0;
                    for (auto& t : space.types) {
                        if (r.model_type != "*" && r.model_type != t.model_type) continue;
                        if (Dimension* d = t.find(r.dim)) {
                            restrict_dim(*d, r, t.model_type);
                            ++hits;
                        }
                    }
                    if (hits == 0)
                        throw ValidationError("no enabled model type has dimension '" + r.dim + "' (" + r.model_type + ")", r.dim);
                }
                break;
            }
            case DirectiveKind::allocate:
                for (const auto& [type, count] : g.allocation) {
                    if (count < 0) throw ValidationError("allocation for " + type + " is negative", "allocation");
                    if (!space.find(type)) throw ValidationError("cannot allocate to disabled model type '" + type + "'", "allocation");
                    out.context.allocation[type] = count;
                }
                break;
            case DirectiveKind::inject:
                for (const auto& cfg : g.injections) {
                    if (cfg.model_type.empty()) throw ValidationError("injected configuration needs a model_type", "model_type");
                    std::string why;
                    if (!original.admits_partial(cfg, &why)) throw ValidationError("injected configuration rejected: " + why, "configs");
                    out.context.injections.push_back(cfg);
                }
                break;
        }
    }
    for (const auto& [type, count] : out.context.allocation)
        if (!space.find(type)) throw ValidationError("allocation names excluded model type '" + type + "'", "allocation");
    for (const auto& cfg : out.context.injections)
        if (!space.find(cfg.model_type) && !original.contains(cfg))
            throw ValidationError("partial injection for excluded model type '" + cfg.model_type + "'", "configs");
    space.validate();
    return out;
}

}  // namespace loadloop::optimizer
