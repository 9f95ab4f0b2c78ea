#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace loadloop {

enum class ModelType { linear, svr, mlp, gbt, lstm, gru, cnn };

inline constexpr std::array<ModelType, 7> kAllModelTypes = {
    ModelType::linear, ModelType::svr, ModelType::mlp, ModelType::gbt,
    ModelType::lstm,   ModelType::gru, ModelType::cnn};

std::string_view to_string(ModelType type);
std::optional<ModelType> parse_model_type(std::string_view name);

// linear, mlp and gbt have trainers; the rest exist only in the search-space schema.
bool is_implemented(ModelType type);

// Regression-style models consume lag features; lstm/gru/cnn consume a load sequence.
bool uses_sequence_input(ModelType type);

}  // namespace loadloop
