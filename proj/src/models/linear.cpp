#include "loadloop/models/model.hpp"

namespace loadloop::models {

LinearFit fit_linear(const Matrix& x, const Matrix& y, double alpha) {
    if (x.rows() != y.rows()) throw ValidationError("feature and target row counts differ");
    if (x.rows() == 0) throw ValidationError("no training rows");
    if (alpha < 0) throw ValidationError("alpha must be non-negative", "h.alpha");

    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const Eigen::RowVectorXd y_mean = y.colwise().mean();
    const Matrix xc = x.rowwise() - x_mean;
    const Matrix yc = y.rowwise() - y_mean;

    LinearFit fit;
    if (x.cols() == 0) {
        fit.coef = Matrix::Zero(0, y.cols());
    } else if (alpha == 0.0) {
        // rank-deficient designs (e.g. one-hot blocks) get the minimum-norm solution
        fit.coef = xc.completeOrthogonalDecomposition().solve(yc);
    } else {
        Matrix gram = xc.transpose() * xc;
        gram.diagonal().array() += alpha;
        fit.coef = gram.ldlt().solve(xc.transpose() * yc);
    }
    fit.intercept = (y_mean - x_mean * fit.coef).transpose();
    return fit;
}

// Fixed summation order per row, so a single row predicts exactly as it does inside a batch.
Matrix predict_linear(const LinearFit& fit, const Matrix& x) {
    Matrix out(x.rows(), fit.coef.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index h = 0; h < fit.coef.cols(); ++h) {
            double acc = fit.intercept(h);
            for (Eigen::Index j = 0; j < x.cols(); ++j) acc += x(r, j) * fit.coef(j, h);
            out(r, h) = acc;
        }
    return out;
}

}  // namespace loadloop::models
