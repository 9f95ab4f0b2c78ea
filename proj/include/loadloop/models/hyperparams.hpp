#pragma once

#include <variant>

#include "loadloop/core/configuration.hpp"
#include "loadloop/core/error.hpp"
#include "loadloop/core/model_type.hpp"

namespace loadloop::models {

using loadloop::to_json;

class UnimplementedModelType : public Error {
public:
    explicit UnimplementedModelType(ModelType type)
        : Error("unimplemented model type '" + std::string(to_string(type)) + "'"), type_(type) {}
    ModelType type() const noexcept { return type_; }

private:
    ModelType type_;
};

class TrainingDiverged : public Error {
public:
    using Error::Error;
};

class FeatureMismatch : public Error {
public:
    using Error::Error;
};

struct LinearParams {
    bool ridge = false;
    double alpha = 1.0;
};

struct MlpParams {
    int hidden_layers = 2;
    int hidden_size = 64;
    double learning_rate = 1e-3;
    double dropout = 0.0;
};

struct GbtParams {
    int n_estimators = 100;
    int max_depth = 6;
    double learning_rate = 0.1;
};

using HyperParams = std::variant<LinearParams, MlpParams, GbtParams>;

// Decodes and range-checks the "h.*" entries. Schema-only types throw UnimplementedModelType.
HyperParams hyperparams_from_params(ModelType type, const ParamMap& params);

Json to_json(const HyperParams& params);
HyperParams hyperparams_from_json(ModelType type, const Json& j);

// Training budget shared by all trials of a run.
struct TrainOptions {
    int max_epochs = 200;
    int batch_size = 64;
    int patience = 20;
};

}  // namespace loadloop::models
