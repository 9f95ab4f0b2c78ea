#include "loadloop/core/model_type.hpp"

namespace loadloop {

std::string_view to_string(ModelType type) {
    switch (type) {
        case ModelType::linear: return "linear";
        case ModelType::svr: return "svr";
        case ModelType::mlp: return "mlp";
        case ModelType::gbt: return "gbt";
        case ModelType::lstm: return "lstm";
        case ModelType::gru: return "gru";
        case ModelType::cnn: return "cnn";
    }
    return "unknown";
}

std::optional<ModelType> parse_model_type(std::string_view name) {
    for (ModelType t : kAllModelTypes) {
        if (to_string(t) == name) return t;
    }
    return std::nullopt;
}

bool is_implemented(ModelType type) {
    return type == ModelType::linear || type == ModelType::mlp || type == ModelType::gbt;
}

bool uses_sequence_input(ModelType type) {
    return type == ModelType::lstm || type == ModelType::gru || type == ModelType::cnn;
}

}  // namespace loadloop
