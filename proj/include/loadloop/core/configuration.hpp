#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include "loadloop/core/json.hpp"

namespace loadloop {

using ParamValue = std::variant<std::int64_t, double, std::string>;

// Keys are dimension names: "f.*" for feature construction, "h.*" for model hyperparameters.
using ParamMap = std::map<std::string, ParamValue>;

// One point (m, f, h) of the hierarchical search space.
struct Configuration {
    std::string model_type;
    ParamMap params;

    bool operator==(const Configuration&) const = default;
};

double as_number(const ParamValue& value);
const std::string& as_text(const ParamValue& value);

// Lookup helpers; throw ValidationError when the key is absent or has the wrong kind.
double param_number(const ParamMap& params, const std::string& key);
const std::string& param_text(const ParamMap& params, const std::string& key);
bool has_param(const ParamMap& params, const std::string& key);

Json to_json(const ParamValue& value);
ParamValue param_value_from_json(const Json& j);

Json to_json(const Configuration& config);
Configuration configuration_from_json(const Json& j);

}  // namespace loadloop
