#include <cmath>

#include "loadloop/models/model.hpp"

namespace loadloop::models {

Standardizer Standardizer::identity(std::size_t columns) {
    return {std::vector<double>(columns, 0.0), std::vector<double>(columns, 1.0)};
}

Standardizer Standardizer::fit(const Matrix& data, const std::vector<bool>& active) {
    const auto cols = static_cast<std::size_t>(data.cols());
    Standardizer s = identity(cols);
    if (data.rows() == 0) return s;
    for (std::size_t c = 0; c < cols; ++c) {
        if (c < active.size() && !active[c]) continue;
        const auto col = data.col(static_cast<Eigen::Index>(c));
        const double mean = col.mean();
        const double var = (col.array() - mean).square().mean();
        s.mean[c] = mean;
        // constant columns only get centered
        s.scale[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& data) const {
    Matrix out = data;
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        out.col(c) = (out.col(c).array() - mean[c]) / scale[c];
    return out;
}

Matrix Standardizer::invert(const Matrix& data) const {
    Matrix out = data;
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        out.col(c) = out.col(c).array() * scale[c] + mean[c];
    return out;
}

Matrix to_matrix(const std::vector<double>& row_major, std::size_t rows, std::size_t cols) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row_major[r * cols + c];
    return m;
}

Matrix feature_matrix(const features::DesignMatrix& m) { return to_matrix(m.values, m.rows(), m.cols()); }

Matrix target_matrix(const features::DesignMatrix& m) {
    return to_matrix(m.targets, m.rows(), static_cast<std::size_t>(m.horizon));
}

}  // namespace loadloop::models
