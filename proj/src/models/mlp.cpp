#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "loadloop/models/model.hpp"

namespace loadloop::models {

namespace {

void activate(Matrix& z, Activation a) {
    if (a == Activation::relu) z = z.cwiseMax(0.0);
}

// Forward pass that keeps every layer's output; masks (if any) multiply hidden outputs.
double forward_backward(const MlpNetwork& net, const Matrix& x, const Matrix& y, const std::vector<Matrix>* masks,
                        MlpGradients* grad) {
    const std::size_t layers = net.weights.size();
    std::vector<Matrix> acts;
    acts.reserve(layers + 1);
    acts.push_back(x);
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix z = acts.back() * net.weights[l];
        z.rowwise() += net.biases[l].transpose();
        if (l + 1 < layers) {
            activate(z, net.activation);
            if (masks) z = z.cwiseProduct((*masks)[l]);
        }
        acts.push_back(std::move(z));
    }
    const double denom = static_cast<double>(x.rows()) * static_cast<double>(y.cols());
    const Matrix diff = acts.back() - y;
    const double loss = diff.squaredNorm() / denom;
    if (!grad) return loss;

    grad->weights.resize(layers);
    grad->biases.resize(layers);
    Matrix delta = diff * (2.0 / denom);
    for (std::size_t l = layers; l-- > 0;) {
        grad->weights[l] = acts[l].transpose() * delta;
        grad->biases[l] = delta.colwise().sum().transpose();
        if (l == 0) break;
        Matrix back = delta * net.weights[l].transpose();
        if (masks) back = back.cwiseProduct((*masks)[l - 1]);
        // acts[l] is post-activation (and post-mask); relu' is 1 where it is positive
        if (net.activation == Activation::relu) back = back.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
        delta = std::move(back);
    }
    return loss;
}

double& param_at(MlpNetwork& net, std::size_t index) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const auto nw = static_cast<std::size_t>(net.weights[l].size());
        if (index < nw) return net.weights[l].data()[index];
        index -= nw;
        const auto nb = static_cast<std::size_t>(net.biases[l].size());
        if (index < nb) return net.biases[l].data()[index];
        index -= nb;
    }
    throw Error("parameter index out of range");
}

double grad_at(const MlpGradients& g, std::size_t index) {
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        const auto nw = static_cast<std::size_t>(g.weights[l].size());
        if (index < nw) return g.weights[l].data()[index];
        index -= nw;
        const auto nb = static_cast<std::size_t>(g.biases[l].size());
        if (index < nb) return g.biases[l].data()[index];
        index -= nb;
    }
    throw Error("parameter index out of range");
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
    return out;
}

}  // namespace

std::size_t MlpNetwork::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
}

MlpNetwork init_mlp(int inputs, const std::vector<int>& hidden, int outputs, Activation activation, std::uint64_t seed) {
    if (inputs < 0 || outputs < 1) throw ValidationError("network needs at least one output");
    std::mt19937_64 rng(seed);
    MlpNetwork net;
    net.activation = activation;
    std::vector<int> sizes{inputs};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(outputs);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int in = sizes[l];
        const int out = sizes[l + 1];
        const bool last = l + 2 == sizes.size();
        const double limit = (activation == Activation::relu && !last) ? std::sqrt(6.0 / std::max(in, 1)) : std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        Matrix w(in, out);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Vector::Zero(out));
    }
    return net;
}

// Row-at-a-time with a fixed summation order (batch size never changes the result).
Matrix mlp_forward(const MlpNetwork& net, const Matrix& x) {
    Matrix out(x.rows(), static_cast<Eigen::Index>(net.outputs()));
    std::vector<double> cur, next;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        cur.resize(static_cast<std::size_t>(x.cols()));
        for (Eigen::Index c = 0; c < x.cols(); ++c) cur[static_cast<std::size_t>(c)] = x(r, c);
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            const Matrix& w = net.weights[l];
            next.assign(static_cast<std::size_t>(w.cols()), 0.0);
            for (Eigen::Index k = 0; k < w.cols(); ++k) {
                double acc = net.biases[l](k);
                for (Eigen::Index j = 0; j < w.rows(); ++j) acc += cur[static_cast<std::size_t>(j)] * w(j, k);
                if (l + 1 < net.weights.size() && net.activation == Activation::relu) acc = std::max(acc, 0.0);
                next[static_cast<std::size_t>(k)] = acc;
            }
            cur.swap(next);
        }
        for (std::size_t k = 0; k < cur.size(); ++k) out(r, static_cast<Eigen::Index>(k)) = cur[k];
    }
    return out;
}

double mlp_loss(const MlpNetwork& net, const Matrix& x, const Matrix& y) {
    return forward_backward(net, x, y, nullptr, nullptr);
}

double mlp_loss_and_gradient(const MlpNetwork& net, const Matrix& x, const Matrix& y, MlpGradients& grad) {
    return forward_backward(net, x, y, nullptr, &grad);
}

double gradient_check(const MlpNetwork& net, const Matrix& x, const Matrix& y, double h, std::size_t max_params,
                      std::uint64_t seed) {
    MlpGradients grad;
    mlp_loss_and_gradient(net, x, y, grad);
    const std::size_t total = net.parameter_count();
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    if (total > max_params) {
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(max_params);
    }
    MlpNetwork probe = net;
    double worst = 0.0;
    for (std::size_t i : idx) {
        double& p = param_at(probe, i);
        const double saved = p;
        p = saved + h;
        const double up = mlp_loss(probe, x, y);
        p = saved - h;
        const double down = mlp_loss(probe, x, y);
        p = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = grad_at(grad, i);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    return worst;
}

MlpNetwork fit_mlp(const Matrix& x, const Matrix& y, const Matrix& xv, const Matrix& yv, const MlpParams& params,
                   const TrainOptions& options, std::uint64_t seed, TrainReport& report) {
    if (x.rows() == 0) throw ValidationError("no training rows");
    std::vector<int> hidden(static_cast<std::size_t>(params.hidden_layers), params.hidden_size);
    MlpNetwork net = init_mlp(static_cast<int>(x.cols()), hidden, static_cast<int>(y.cols()), Activation::relu, seed);

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::bernoulli_distribution keep(1.0 - params.dropout);
    const double keep_scale = params.dropout > 0 ? 1.0 / (1.0 - params.dropout) : 1.0;

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    MlpGradients m, v, g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        m.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
        m.biases.push_back(Vector::Zero(net.biases[l].size()));
    }
    v = m;
    long step = 0;

    std::vector<std::size_t> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), 0);
    const auto batch = static_cast<std::size_t>(std::max(1, options.batch_size));
    const bool has_val = xv.rows() > 0;

    MlpNetwork best = net;
    double best_loss = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::span<const std::size_t> idx(order.data() + start, std::min(batch, order.size() - start));
            const Matrix xb = gather_rows(x, idx);
            const Matrix yb = gather_rows(y, idx);
            std::vector<Matrix> masks;
            if (params.dropout > 0) {
                for (std::size_t l = 0; l + 1 < net.weights.size(); ++l) {
                    Matrix mask(xb.rows(), net.weights[l].cols());
                    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? keep_scale : 0.0;
                    masks.push_back(std::move(mask));
                }
            }
            forward_backward(net, xb, yb, masks.empty() ? nullptr : &masks, &g);
            ++step;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
            auto update = [&](auto& param, auto& mm, auto& vv, const auto& gg) {
                mm = b1 * mm + (1.0 - b1) * gg;
                vv = b2 * vv + (1.0 - b2) * gg.cwiseProduct(gg);
                param.array() -= params.learning_rate * (mm.array() / c1) / ((vv.array() / c2).sqrt() + eps);
            };
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                update(net.weights[l], m.weights[l], v.weights[l], g.weights[l]);
                update(net.biases[l], m.biases[l], v.biases[l], g.biases[l]);
            }
        }
        const double train_loss = mlp_loss(net, x, y);
        const double val_loss = has_val ? mlp_loss(net, xv, yv) : train_loss;
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw TrainingDiverged("mlp loss became non-finite at epoch " + std::to_string(epoch + 1));
        report.train_curve.push_back(train_loss);
        report.val_curve.push_back(val_loss);
        if (val_loss < best_loss) {
            best_loss = val_loss;
            best = net;
            stale = 0;
        } else if (++stale >= options.patience) {
            report.early_stop_round = epoch + 1;
            break;
        }
    }
    return best;
}

}  // namespace loadloop::models
