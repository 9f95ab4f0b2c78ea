#include <cmath>
#include <set>

#include "loadloop/core/model_type.hpp"
#include "loadloop/optimizer/optimizer.hpp"

namespace loadloop::optimizer {

namespace {

Dimension categorical(std::string name, std::vector<ParamValue> choices, std::optional<Condition> cond = {}) {
    Dimension d;
    d.name = std::move(name);
    d.kind = DimKind::categorical;
    d.choices = std::move(choices);
    d.condition = std::move(cond);
    return d;
}

Dimension real(std::string name, double low, double high, Scale scale = Scale::uniform, std::optional<Condition> cond = {}) {
    Dimension d;
    d.name = std::move(name);
    d.kind = DimKind::real;
    d.scale = scale;
    d.low = low;
    d.high = high;
    d.condition = std::move(cond);
    return d;
}

Dimension integer(std::string name, int low, int high, int step = 1, Scale scale = Scale::uniform) {
    Dimension d;
    d.name = std::move(name);
    d.kind = DimKind::integer;
    d.scale = scale;
    d.low = low;
    d.high = high;
    d.step = step;
    return d;
}

std::vector<ParamValue> words(std::initializer_list<const char*> w) {
    std::vector<ParamValue> out;
    for (const char* s : w) out.emplace_back(std::string(s));
    return out;
}

std::vector<Dimension> feature_dims(bool sequence) {
    std::vector<Dimension> d;
    d.push_back(categorical("f.calendar", words({"none", "numerical", "categorical", "trigonometric"})));
    d.push_back(categorical("f.temp_lags", words({"none", "correlation"})));
    d.push_back(real("f.temp_lags_ratio", 0.0, 1.0, Scale::uniform, Condition{"f.temp_lags", {"correlation"}}));
    d.push_back(categorical("f.interaction", words({"none", "all"})));
    if (sequence) {
        std::vector<ParamValue> freq;
        for (std::int64_t f : {1, 2, 3, 4, 6, 12, 24}) freq.emplace_back(f);
        d.push_back(categorical("f.sequence_frequency", freq));
        d.push_back(integer("f.sequence_length", 1, 24));
    } else {
        d.push_back(categorical("f.load_lags", words({"none", "correlation", "fixed"})));
        d.push_back(real("f.load_lags_ratio", 0.0, 1.0, Scale::uniform, Condition{"f.load_lags", {"correlation"}}));
    }
    d.push_back(categorical("f.other", words({"none", "correlation"})));
    d.push_back(real("f.other_ratio", 0.0, 1.0, Scale::uniform, Condition{"f.other", {"correlation"}}));
    return d;
}

std::vector<Dimension> hyper_dims(ModelType type) {
    std::vector<Dimension> d;
    switch (type) {
        case ModelType::linear:
            d.push_back(categorical("h.regularization", words({"none", "ridge"})));
            d.push_back(real("h.alpha", 1e-4, 1.0, Scale::log, Condition{"h.regularization", {"ridge"}}));
            break;
        case ModelType::svr:
            d.push_back(real("h.C", 1e-3, 1e3, Scale::log));
            d.push_back(real("h.gamma", 1e-3, 1e3, Scale::log));
            break;
        case ModelType::mlp:
            d.push_back(integer("h.hidden_layers", 2, 5));
            d.push_back(integer("h.hidden_size", 16, 512, 1, Scale::log));
            d.push_back(real("h.learning_rate", 1e-4, 0.1, Scale::log));
            d.push_back(real("h.dropout", 0.0, 0.5));
            break;
        case ModelType::gbt:
            d.push_back(integer("h.n_estimators", 10, 300, 10));
            d.push_back(integer("h.max_depth", 4, 16, 2));
            d.push_back(real("h.learning_rate", 1e-4, 0.1, Scale::log));
            break;
        case ModelType::lstm:
        case ModelType::gru:
            d.push_back(integer("h.layers", 1, 3));
            d.push_back(integer("h.hidden_size", 16, 512, 1, Scale::log));
            d.push_back(integer("h.fc_size", 16, 512, 1, Scale::log));
            d.push_back(real("h.learning_rate", 1e-4, 0.1, Scale::log));
            break;
        case ModelType::cnn:
            d.push_back(integer("h.layers", 1, 3));
            d.push_back(integer("h.kernel_size", 1, 5));
            d.push_back(integer("h.filters", 16, 128, 1, Scale::log));
            d.push_back(integer("h.fc_size", 16, 512, 1, Scale::log));
            d.push_back(real("h.learning_rate", 1e-4, 0.1, Scale::log));
            break;
    }
    return d;
}

std::string kind_name(DimKind k) {
    switch (k) {
        case DimKind::categorical: return "categorical";
        case DimKind::real: return "real";
        case DimKind::integer: return "integer";
    }
    return "real";
}

bool is_number(const ParamValue& v) { return !std::holds_alternative<std::string>(v); }

}  // namespace

bool Dimension::contains(const ParamValue& value) const {
    if (kind == DimKind::categorical) {
        for (const auto& c : choices) {
            if (c == value) return true;
            // 6 and 6.0 name the same numeric choice
            if (is_number(c) && is_number(value) && as_number(c) == as_number(value)) return true;
        }
        return false;
    }
    if (!is_number(value)) return false;
    const double v = as_number(value);
    if (!std::isfinite(v) || v < low || v > high) return false;
    if (kind == DimKind::integer) {
        if (std::abs(v - std::round(v)) > 1e-9) return false;
        const auto off = static_cast<long long>(std::llround(v - low));
        return off % step == 0;
    }
    return true;
}

std::pair<double, double> Dimension::working_bounds() const {
    double lo = low, hi = high;
    if (kind == DimKind::integer) {
        lo -= step / 2.0;
        hi += step / 2.0;
    }
    if (scale == Scale::log) return {std::log(std::max(lo, low * 0.5)), std::log(hi)};
    return {lo, hi};
}

double Dimension::to_working(double value) const { return scale == Scale::log ? std::log(value) : value; }

ParamValue Dimension::from_working(double w) const {
    double v = scale == Scale::log ? std::exp(w) : w;
    if (kind == DimKind::integer) {
        double k = std::round((v - low) / step);
        const double max_k = std::floor((high - low) / step + 1e-9);
        k = std::clamp(k, 0.0, max_k);
        return static_cast<std::int64_t>(std::llround(low + k * step));
    }
    return std::clamp(v, low, high);
}

const Dimension* TypeSpace::find(const std::string& name) const {
    for (const auto& d : dims)
        if (d.name == name) return &d;
    return nullptr;
}

Dimension* TypeSpace::find(const std::string& name) {
    for (auto& d : dims)
        if (d.name == name) return &d;
    return nullptr;
}

bool TypeSpace::active(const Dimension& dim, const ParamMap& params) const {
    if (!dim.condition) return true;
    const auto it = params.find(dim.condition->dim);
    if (it == params.end() || !std::holds_alternative<std::string>(it->second)) return false;
    for (const auto& v : dim.condition->values)
        if (std::get<std::string>(it->second) == v) return true;
    return false;
}

const TypeSpace* SearchSpace::find(const std::string& model_type) const {
    for (const auto& t : types)
        if (t.model_type == model_type) return &t;
    return nullptr;
}

std::vector<std::string> SearchSpace::type_names() const {
    std::vector<std::string> out;
    for (const auto& t : types) out.push_back(t.model_type);
    return out;
}

bool SearchSpace::contains(const Configuration& config, std::string* why) const {
    auto fail = [&](std::string msg) {
        if (why) *why = std::move(msg);
        return false;
    };
    const TypeSpace* type = find(config.model_type);
    if (!type) return fail("model type '" + config.model_type + "' is not in the space");
    std::size_t used = 0;
    for (const auto& d : type->dims) {
        const auto it = config.params.find(d.name);
        const bool on = type->active(d, config.params);
        if (!on) {
            if (it != config.params.end()) return fail(d.name + " is set but inactive");
            continue;
        }
        if (it == config.params.end()) return fail(d.name + " is missing");
        if (!d.contains(it->second)) return fail(d.name + " is outside its range");
        ++used;
    }
    if (used != config.params.size()) return fail("configuration has parameters outside the space");
    return true;
}

bool SearchSpace::admits_partial(const Configuration& config, std::string* why) const {
    auto fail = [&](std::string msg) {
        if (why) *why = std::move(msg);
        return false;
    };
    const TypeSpace* type = find(config.model_type);
    if (!type) return fail("model type '" + config.model_type + "' is not in the space");
    for (const auto& [name, value] : config.params) {
        const Dimension* d = type->find(name);
        if (!d) return fail(name + " is not a dimension of " + config.model_type);
        if (!d->contains(value)) return fail(name + " is outside its range");
        if (d->condition) {
            const auto parent = config.params.find(d->condition->dim);
            if (parent != config.params.end() && !type->active(*d, config.params))
                return fail(name + " is set but inactive");
        }
    }
    return true;
}

void SearchSpace::validate() const {
    if (types.empty()) throw ValidationError("search space has no model types");
    std::set<std::string> seen;
    for (const auto& t : types) {
        if (!seen.insert(t.model_type).second) throw ValidationError("duplicate model type " + t.model_type);
        if (t.dims.empty()) throw ValidationError("model type " + t.model_type + " has no dimensions");
        std::set<std::string> names;
        for (const auto& d : t.dims) {
            if (d.condition && !names.count(d.condition->dim))
                throw ValidationError(d.name + " depends on a later or unknown dimension", d.name);
            names.insert(d.name);
            if (d.kind == DimKind::categorical) {
                if (d.choices.empty()) throw ValidationError(d.name + " has no choices", d.name);
            } else {
                if (!(d.low < d.high) && !(d.kind == DimKind::integer && d.low == d.high))
                    throw ValidationError(d.name + " needs low < high", d.name);
                if (d.scale == Scale::log && d.low <= 0) throw ValidationError(d.name + " log scale needs low > 0", d.name);
                if (d.kind == DimKind::integer && d.step < 1) throw ValidationError(d.name + " step must be >= 1", d.name);
            }
        }
    }
}

SearchSpace default_search_space(bool full_schema) {
    SearchSpace s;
    for (ModelType m : kAllModelTypes) {
        if (!full_schema && !is_implemented(m)) continue;
        TypeSpace t;
        t.model_type = std::string(to_string(m));
        t.dims = feature_dims(uses_sequence_input(m));
        auto h = hyper_dims(m);
        t.dims.insert(t.dims.end(), h.begin(), h.end());
        s.types.push_back(std::move(t));
    }
    return s;
}

Json to_json(const Dimension& d) {
    Json j{{"name", d.name}, {"kind", kind_name(d.kind)}};
    if (d.kind == DimKind::categorical) {
        Json c = Json::array();
        for (const auto& v : d.choices) c.push_back(to_json(v));
        j["choices"] = c;
    } else {
        j["low"] = d.low;
        j["high"] = d.high;
        j["scale"] = d.scale == Scale::log ? "log" : "uniform";
        if (d.kind == DimKind::integer) j["step"] = d.step;
    }
    if (d.condition) j["condition"] = {{"dim", d.condition->dim}, {"values", d.condition->values}};
    return j;
}

Dimension dimension_from_json(const Json& j) {
    Dimension d;
    d.name = j.at("name").get<std::string>();
    const std::string kind = j.at("kind");
    if (kind == "categorical") {
        d.kind = DimKind::categorical;
        for (const auto& c : j.at("choices")) d.choices.push_back(param_value_from_json(c));
    } else {
        if (kind == "real") d.kind = DimKind::real;
        else if (kind == "integer") d.kind = DimKind::integer;
        else throw ValidationError("unknown dimension kind '" + kind + "'", "kind");
        d.low = j.at("low").get<double>();
        d.high = j.at("high").get<double>();
        d.scale = j.value("scale", "uniform") == "log" ? Scale::log : Scale::uniform;
        d.step = j.value("step", 1);
    }
    if (j.contains("condition"))
        d.condition = Condition{j["condition"].at("dim"), j["condition"].at("values").get<std::vector<std::string>>()};
    return d;
}

Json to_json(const SearchSpace& space) {
    Json types = Json::array();
    for (const auto& t : space.types) {
        Json dims = Json::array();
        for (const auto& d : t.dims) dims.push_back(to_json(d));
        types.push_back({{"model_type", t.model_type}, {"dims", dims}});
    }
    return {{"types", types}};
}

SearchSpace search_space_from_json(const Json& j) {
    SearchSpace s;
    for (const auto& t : j.at("types")) {
        TypeSpace ts;
        ts.model_type = t.at("model_type");
        for (const auto& d : t.at("dims")) ts.dims.push_back(dimension_from_json(d));
        s.types.push_back(std::move(ts));
    }
    s.validate();
    return s;
}

}  // namespace loadloop::optimizer
