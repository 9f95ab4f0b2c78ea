#include "loadloop/core/configuration.hpp"

#include "loadloop/core/error.hpp"

namespace loadloop {

double as_number(const ParamValue& value) {
    if (const auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&value)) return *d;
    throw ValidationError("expected a numeric parameter, got text '" + std::get<std::string>(value) + "'");
}

const std::string& as_text(const ParamValue& value) {
    if (const auto* s = std::get_if<std::string>(&value)) return *s;
    throw ValidationError("expected a categorical parameter, got a number");
}

bool has_param(const ParamMap& params, const std::string& key) { return params.count(key) != 0; }

double param_number(const ParamMap& params, const std::string& key) {
    auto it = params.find(key);
    if (it == params.end()) throw ValidationError("missing parameter '" + key + "'", key);
    try {
        return as_number(it->second);
    } catch (const ValidationError& e) {
        throw ValidationError(key + ": " + e.what(), key);
    }
}

const std::string& param_text(const ParamMap& params, const std::string& key) {
    auto it = params.find(key);
    if (it == params.end()) throw ValidationError("missing parameter '" + key + "'", key);
    try {
        return as_text(it->second);
    } catch (const ValidationError& e) {
        throw ValidationError(key + ": " + e.what(), key);
    }
}

Json to_json(const ParamValue& value) {
    return std::visit([](const auto& v) { return Json(v); }, value);
}

ParamValue param_value_from_json(const Json& j) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw ValidationError("parameter values must be numbers or strings");
}

Json to_json(const Configuration& config) {
    Json params = Json::object();
    for (const auto& [k, v] : config.params) params[k] = to_json(v);
    return Json{{"model_type", config.model_type}, {"params", params}};
}

Configuration configuration_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("model_type") || !j["model_type"].is_string())
        throw ValidationError("configuration requires a string 'model_type'", "model_type");
    Configuration c;
    c.model_type = j["model_type"].get<std::string>();
    if (j.contains("params")) {
        if (!j["params"].is_object()) throw ValidationError("'params' must be an object", "params");
        for (const auto& [k, v] : j["params"].items()) c.params[k] = param_value_from_json(v);
    }
    return c;
}

}  // namespace loadloop
