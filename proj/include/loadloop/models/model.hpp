#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "loadloop/core/model_type.hpp"
#include "loadloop/features/features.hpp"
#include "loadloop/models/hyperparams.hpp"

namespace loadloop::models {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Per-column affine map x -> (x - mean) / scale. Pass-through columns keep mean 0, scale 1.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer identity(std::size_t columns);
    static Standardizer fit(const Matrix& data, const std::vector<bool>& active);

    Matrix apply(const Matrix& data) const;
    Matrix invert(const Matrix& data) const;
};

struct LinearFit {
    Matrix coef;       // features x horizon
    Vector intercept;  // horizon
};

// alpha == 0 gives the minimum-norm least-squares solution. The intercept is never penalized.
LinearFit fit_linear(const Matrix& x, const Matrix& y, double alpha);
Matrix predict_linear(const LinearFit& fit, const Matrix& x);

enum class Activation { relu, identity };

// weights[l] is in x out, so a batch forward step is A * W + b.
struct MlpNetwork {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Activation activation = Activation::relu;

    std::size_t inputs() const { return static_cast<std::size_t>(weights.front().rows()); }
    std::size_t outputs() const { return static_cast<std::size_t>(weights.back().cols()); }
    std::size_t parameter_count() const;
};

MlpNetwork init_mlp(int inputs, const std::vector<int>& hidden, int outputs, Activation activation,
                    std::uint64_t seed);
Matrix mlp_forward(const MlpNetwork& net, const Matrix& x);

struct MlpGradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};

// Loss is (1 / (rows * outputs)) * sum of squared errors, no dropout.
double mlp_loss(const MlpNetwork& net, const Matrix& x, const Matrix& y);
double mlp_loss_and_gradient(const MlpNetwork& net, const Matrix& x, const Matrix& y, MlpGradients& grad);

// Max relative error |a - n| / max(|a|, |n|, 1e-7) between analytic and central-difference
// gradients over at most `max_params` parameters sampled with `seed`.
double gradient_check(const MlpNetwork& net, const Matrix& x, const Matrix& y, double h = 1e-5,
                      std::size_t max_params = 256, std::uint64_t seed = 0);

struct GbtNode {
    int feature = -1;  // -1 for a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct GbtTree {
    std::vector<GbtNode> nodes;
    double predict(std::span<const double> row) const;
};

// One boosted ensemble per output step.
struct GbtEnsemble {
    std::vector<double> base;
    std::vector<std::vector<GbtTree>> heads;
};

Matrix predict_gbt(const GbtEnsemble& model, const Matrix& x);

struct TrainReport {
    std::vector<double> train_curve;
    std::vector<double> val_curve;
    double wall_seconds = 0.0;
    std::optional<int> early_stop_round;
};

Json to_json(const TrainReport& report);

// Trainers on already-scaled matrices. They throw TrainingDiverged on non-finite losses.
MlpNetwork fit_mlp(const Matrix& x, const Matrix& y, const Matrix& xv, const Matrix& yv, const MlpParams& params,
                   const TrainOptions& options, std::uint64_t seed, TrainReport& report);
GbtEnsemble fit_gbt(const Matrix& x, const Matrix& y, const Matrix& xv, const Matrix& yv, const GbtParams& params,
                    TrainReport& report);

struct TrainedModel {
    ModelType type = ModelType::linear;
    HyperParams hyper;
    std::vector<std::string> feature_names;
    std::uint64_t seed = 0;
    int horizon = 0;
    Standardizer x_scaler;
    Standardizer y_scaler;
    std::variant<LinearFit, MlpNetwork, GbtEnsemble> fitted;
};

struct TrainResult {
    TrainedModel model;
    TrainReport report;
};

TrainResult train(ModelType type, const HyperParams& hyper, const features::DesignMatrix& train,
                  const features::DesignMatrix& val, std::uint64_t seed, const TrainOptions& options = {});

// One H-vector per row. Throws FeatureMismatch when names differ from training.
std::vector<std::vector<double>> predict(const TrainedModel& model, const features::DesignMatrix& rows);
Matrix predict_matrix(const TrainedModel& model, const Matrix& raw_rows);

Matrix to_matrix(const std::vector<double>& row_major, std::size_t rows, std::size_t cols);
Matrix feature_matrix(const features::DesignMatrix& m);
Matrix target_matrix(const features::DesignMatrix& m);

// Binary container: magic line, u64 header length, JSON header, u64 count, raw doubles.
inline constexpr std::string_view kModelMagic = "LOADLOOP-MODEL 1\n";

void save_model(const std::filesystem::path& path, const TrainedModel& model, const Json& extra = Json::object());
std::string serialize_model(const TrainedModel& model, const Json& extra = Json::object());

struct LoadedModel {
    TrainedModel model;
    Json extra;
};

LoadedModel load_model(const std::filesystem::path& path);
LoadedModel deserialize_model(std::string_view bytes);

}  // namespace loadloop::models
