#include <algorithm>
#include <cmath>
#include <numeric>

#include "loadloop/models/model.hpp"

namespace loadloop::models {

double GbtTree::predict(std::span<const double> row) const {
    int at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
        const GbtNode& n = nodes[static_cast<std::size_t>(at)];
        at = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(at)].value;
}

namespace {

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

// Running left-hand statistics for one leaf while scanning one feature.
struct Scan {
    double sum = 0.0;
    std::size_t count = 0;
    double last = 0.0;
};

// Grows one level-wise tree on `residual` with exact greedy variance-reduction splits.
GbtTree grow_tree(const Matrix& x, const std::vector<std::vector<std::size_t>>& sorted, const std::vector<double>& residual,
                  int max_depth, double learning_rate, std::vector<int>& leaf_of) {
    const std::size_t n = residual.size();
    GbtTree tree;
    tree.nodes.push_back(GbtNode{});
    std::fill(leaf_of.begin(), leaf_of.end(), 0);
    std::vector<int> frontier{0};

    for (int depth = 0; depth < max_depth && !frontier.empty(); ++depth) {
        const std::size_t nodes = tree.nodes.size();
        std::vector<double> sum(nodes, 0.0);
        std::vector<std::size_t> count(nodes, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sum[static_cast<std::size_t>(leaf_of[i])] += residual[i];
            ++count[static_cast<std::size_t>(leaf_of[i])];
        }
        std::vector<char> open(nodes, 0);
        for (int id : frontier)
            if (count[static_cast<std::size_t>(id)] >= 2) open[static_cast<std::size_t>(id)] = 1;

        std::vector<SplitCandidate> best(nodes);
        std::vector<Scan> scan(nodes);
        for (Eigen::Index f = 0; f < x.cols(); ++f) {
            std::fill(scan.begin(), scan.end(), Scan{});
            for (std::size_t i : sorted[static_cast<std::size_t>(f)]) {
                const auto leaf = static_cast<std::size_t>(leaf_of[i]);
                if (!open[leaf]) continue;
                Scan& s = scan[leaf];
                const double xi = x(static_cast<Eigen::Index>(i), f);
                if (s.count > 0 && xi > s.last) {
                    const double nl = static_cast<double>(s.count);
                    const double nr = static_cast<double>(count[leaf] - s.count);
                    const double sr = sum[leaf] - s.sum;
                    const double gain = s.sum * s.sum / nl + sr * sr / nr - sum[leaf] * sum[leaf] / static_cast<double>(count[leaf]);
                    if (gain > best[leaf].gain) {
                        double thr = s.last + (xi - s.last) / 2.0;
                        if (thr >= xi) thr = s.last;
                        best[leaf] = {gain, static_cast<int>(f), thr};
                    }
                }
                s.sum += residual[i];
                ++s.count;
                s.last = xi;
            }
        }

        std::vector<int> next;
        for (int id : frontier) {
            const SplitCandidate& c = best[static_cast<std::size_t>(id)];
            if (c.feature < 0 || c.gain <= 1e-12) continue;
            const int l = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(GbtNode{});
            tree.nodes.push_back(GbtNode{});
            GbtNode& node = tree.nodes[static_cast<std::size_t>(id)];
            node.feature = c.feature;
            node.threshold = c.threshold;
            node.left = l;
            node.right = l + 1;
            next.push_back(l);
            next.push_back(l + 1);
        }
        if (next.empty()) break;
        for (std::size_t i = 0; i < n; ++i) {
            const GbtNode& node = tree.nodes[static_cast<std::size_t>(leaf_of[i])];
            if (node.feature >= 0)
                leaf_of[i] = x(static_cast<Eigen::Index>(i), node.feature) <= node.threshold ? node.left : node.right;
        }
        frontier = std::move(next);
    }

    std::vector<double> sum(tree.nodes.size(), 0.0);
    std::vector<std::size_t> count(tree.nodes.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        sum[static_cast<std::size_t>(leaf_of[i])] += residual[i];
        ++count[static_cast<std::size_t>(leaf_of[i])];
    }
    for (std::size_t id = 0; id < tree.nodes.size(); ++id)
        if (tree.nodes[id].feature < 0 && count[id] > 0)
            tree.nodes[id].value = learning_rate * sum[id] / static_cast<double>(count[id]);
    return tree;
}

double row_predict(const GbtTree& tree, const Matrix& x, Eigen::Index r, std::vector<double>& buf) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) buf[static_cast<std::size_t>(c)] = x(r, c);
    return tree.predict(buf);
}

}  // namespace

GbtEnsemble fit_gbt(const Matrix& x, const Matrix& y, const Matrix& xv, const Matrix& yv, const GbtParams& params,
                    TrainReport& report) {
    if (x.rows() == 0) throw ValidationError("no training rows");
    const auto n = static_cast<std::size_t>(x.rows());
    const auto heads = static_cast<std::size_t>(y.cols());

    std::vector<std::vector<std::size_t>> sorted(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        auto& idx = sorted[static_cast<std::size_t>(f)];
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return x(static_cast<Eigen::Index>(a), f) < x(static_cast<Eigen::Index>(b), f);
        });
    }

    GbtEnsemble model;
    model.base.resize(heads);
    model.heads.resize(heads);
    Matrix fit(x.rows(), y.cols());
    Matrix fit_val(xv.rows(), y.cols());
    for (std::size_t h = 0; h < heads; ++h) {
        model.base[h] = y.col(static_cast<Eigen::Index>(h)).mean();
        fit.col(static_cast<Eigen::Index>(h)).setConstant(model.base[h]);
        fit_val.col(static_cast<Eigen::Index>(h)).setConstant(model.base[h]);
    }

    std::vector<int> leaf_of(n);
    std::vector<double> residual(n);
    std::vector<double> buf(static_cast<std::size_t>(x.cols()));
    for (int round = 0; round < params.n_estimators; ++round) {
        for (std::size_t h = 0; h < heads; ++h) {
            const auto hc = static_cast<Eigen::Index>(h);
            for (std::size_t i = 0; i < n; ++i)
                residual[i] = y(static_cast<Eigen::Index>(i), hc) - fit(static_cast<Eigen::Index>(i), hc);
            GbtTree tree = grow_tree(x, sorted, residual, params.max_depth, params.learning_rate, leaf_of);
            for (std::size_t i = 0; i < n; ++i)
                fit(static_cast<Eigen::Index>(i), hc) += tree.nodes[static_cast<std::size_t>(leaf_of[i])].value;
            for (Eigen::Index r = 0; r < xv.rows(); ++r) fit_val(r, hc) += row_predict(tree, xv, r, buf);
            model.heads[h].push_back(std::move(tree));
        }
        const double train_loss = (fit - y).squaredNorm() / static_cast<double>(y.size());
        const double val_loss = xv.rows() > 0 ? (fit_val - yv).squaredNorm() / static_cast<double>(yv.size()) : train_loss;
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw TrainingDiverged("gbt loss became non-finite at round " + std::to_string(round + 1));
        report.train_curve.push_back(train_loss);
        report.val_curve.push_back(val_loss);
    }
    return model;
}

Matrix predict_gbt(const GbtEnsemble& model, const Matrix& x) {
    Matrix out(x.rows(), static_cast<Eigen::Index>(model.base.size()));
    std::vector<double> buf(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) buf[static_cast<std::size_t>(c)] = x(r, c);
        for (std::size_t h = 0; h < model.base.size(); ++h) {
            double v = model.base[h];
            for (const GbtTree& t : model.heads[h]) v += t.predict(buf);
            out(r, static_cast<Eigen::Index>(h)) = v;
        }
    }
    return out;
}

}  // namespace loadloop::models
