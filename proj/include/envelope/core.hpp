#pragma once

#include <envelope/error.hpp>
#include <envelope/linalg.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace envelope {

/// Column-wise affine map learned on training predictors and replayed on
/// new rows. Constant columns are centered only (sd recorded as 1).
struct Standardization
{
    VectorXd means;
    VectorXd sds;
    std::vector<bool> constant;

    Index size() const { return means.size(); }

    static Standardization identity(Index p)
    {
        return {VectorXd::Zero(p), VectorXd::Ones(p), std::vector<bool>(p, false)};
    }

    MatrixXd apply(const MatrixXd& x) const
    {
        detail::require(x.cols() == means.size(),
                        "predictor matrix has " + std::to_string(x.cols()) +
                            " columns, model expects " + std::to_string(means.size()));
        return (x.rowwise() - means.transpose()).array().rowwise() /
               sds.transpose().array();
    }

    bool any_constant() const
    {
        for (bool c : constant)
            if (c) return true;
        return false;
    }
};

struct StandardizeResult
{
    MatrixXd X;
    Standardization transform;
};

/// Centers every column and scales it to unit sample standard deviation
/// (1/(n-1) convention).
inline StandardizeResult standardize_columns(const MatrixXd& x)
{
    detail::require(x.size() > 0, "cannot standardize an empty matrix");
    detail::require(x.rows() >= 2, "standardization needs at least 2 rows");
    const Index n = x.rows(), p = x.cols();

    StandardizeResult out;
    auto& t = out.transform;
    t.means = x.colwise().mean().transpose();
    t.sds.resize(p);
    t.constant.assign(p, false);
    for (Index j = 0; j < p; ++j) {
        const double ss = (x.col(j).array() - t.means(j)).square().sum();
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        // relative test so columns like 1e6 + tiny jitter still count as constant
        if (!(sd > 1e-12 * std::max(1.0, std::abs(t.means(j))))) {
            t.sds(j) = 1.0;
            t.constant[j] = true;
        } else {
            t.sds(j) = sd;
        }
    }
    out.X = t.apply(x);
    return out;
}

/// Predictor/response pair. When `standardized` is set, X holds the
/// standardized predictors and column_means/column_sds the transform that
/// produced them; when `y_centered` is set, y_means holds the removed
/// response means.
struct DataSet
{
    MatrixXd X;
    MatrixXd Y;
    VectorXd column_means;
    VectorXd column_sds;
    std::vector<bool> constant_columns;
    VectorXd y_means;
    bool standardized = false;
    bool y_centered = false;

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }
    Index r() const { return Y.cols(); }

    static DataSet from_matrices(MatrixXd x, MatrixXd y)
    {
        detail::require(x.rows() >= 1 && x.cols() >= 1, "X must be nonempty");
        detail::require(y.rows() >= 1 && y.cols() >= 1, "Y must be nonempty");
        detail::require(x.rows() == y.rows(),
                        "X has " + std::to_string(x.rows()) + " rows but Y has " +
                            std::to_string(y.rows()));
        DataSet d;
        d.X = std::move(x);
        d.Y = std::move(y);
        d.column_means = VectorXd::Zero(d.X.cols());
        d.column_sds = VectorXd::Ones(d.X.cols());
        d.constant_columns.assign(d.X.cols(), false);
        d.y_means = VectorXd::Zero(d.Y.cols());
        return d;
    }

    Standardization x_transform() const
    {
        return {column_means, column_sds, constant_columns};
    }

    /// Rows `idx` of this data set, unprepared metadata reset.
    DataSet subset(const std::vector<Index>& idx) const
    {
        MatrixXd xs(idx.size(), X.cols()), ys(idx.size(), Y.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            xs.row(i) = X.row(idx[i]);
            ys.row(i) = Y.row(idx[i]);
        }
        return from_matrices(std::move(xs), std::move(ys));
    }
};

struct PrepareOptions
{
    bool standardize_x = true;
    bool center_y = true;
};

/// Standardizes X and centers Y of a raw data set, recording the transform.
inline DataSet prepare(const DataSet& raw, const PrepareOptions& opts = {})
{
    DataSet d = DataSet::from_matrices(raw.X, raw.Y);
    if (opts.standardize_x) {
        auto s = standardize_columns(raw.X);
        d.X = std::move(s.X);
        d.column_means = std::move(s.transform.means);
        d.column_sds = std::move(s.transform.sds);
        d.constant_columns = std::move(s.transform.constant);
        d.standardized = true;
    }
    if (opts.center_y) {
        d.y_means = raw.Y.colwise().mean().transpose();
        d.Y = raw.Y.rowwise() - d.y_means.transpose();
        d.y_centered = true;
    }
    return d;
}

struct SufficientStats
{
    MatrixXd S_X;   // p x p, n^{-1} X^T X
    MatrixXd S_Y;   // r x r, n^{-1} Y^T Y
    MatrixXd S_YX;  // r x p, n^{-1} Y^T X
    Index n = 0, p = 0, r = 0;
    bool S_Y_invertible = false;

    void require_invertible_S_Y() const
    {
        if (!S_Y_invertible)
            throw InvalidArgument(
                "S_Y is singular (r = " + std::to_string(r) + ", n = " + std::to_string(n) +
                "); envelope fitting needs a positive definite response covariance, "
                "which requires r <= n and non-degenerate responses");
    }
};

inline bool is_positive_definite(const MatrixXd& a)
{
    if (a.size() == 0) return false;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
    const double hi = es.eigenvalues().maxCoeff();
    return hi > 0 && es.eigenvalues().minCoeff() > 1e-12 * hi;
}

inline SufficientStats compute_sufficient_stats(const MatrixXd& x, const MatrixXd& y)
{
    detail::require(x.size() > 0 && y.size() > 0, "data must be nonempty");
    detail::require(x.rows() == y.rows(), "X and Y row counts differ");
    SufficientStats s;
    s.n = x.rows();
    s.p = x.cols();
    s.r = y.cols();
    const double inv_n = 1.0 / static_cast<double>(s.n);
    s.S_X = MatrixXd::Zero(s.p, s.p);
    s.S_X.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), inv_n);
    s.S_X = s.S_X.selfadjointView<Eigen::Lower>();
    s.S_Y = linalg::symmetrize(inv_n * y.transpose() * y);
    s.S_YX = inv_n * y.transpose() * x;
    s.S_Y_invertible = s.r <= s.n && is_positive_definite(s.S_Y);
    return s;
}

inline SufficientStats compute_sufficient_stats(const DataSet& data)
{
    return compute_sufficient_stats(data.X, data.Y);
}

struct RegularizedStats
{
    SufficientStats base;
    double lambda = 0;
    MatrixXd S_X_lambda;     // S_X + lambda I
    MatrixXd S_YgX_lambda;   // S_Y - S_YX (S_X + lambda I)^{-1} S_XY
};

/// Direct evaluation of the ridge-conditioned residual covariance.
inline RegularizedStats regularize_stats(const SufficientStats& stats, double lambda)
{
    detail::require(lambda >= 0 && std::isfinite(lambda), "lambda must be a finite value >= 0");
    RegularizedStats out;
    out.base = stats;
    out.lambda = lambda;
    out.S_X_lambda = stats.S_X;
    out.S_X_lambda.diagonal().array() += lambda;

    Eigen::LDLT<MatrixXd> ldlt(out.S_X_lambda);
    const VectorXd dd = ldlt.vectorD();
    const double scale = std::max(stats.S_X.diagonal().cwiseAbs().maxCoeff(), lambda);
    const bool singular = ldlt.info() != Eigen::Success ||
                          (dd.array() <= linalg::kRankTolerance * std::max(scale, 1e-300)).any();
    if (singular) {
        throw InvalidArgument(lambda == 0
                                  ? "S_X is singular at lambda = 0; use the ridgeless path "
                                    "(lambda = 1e-8) for p >= n"
                                  : "S_X + lambda I is not positive definite");
    }
    const MatrixXd solved = ldlt.solve(stats.S_YX.transpose());  // p x r
    out.S_YgX_lambda = linalg::symmetrize(stats.S_Y - stats.S_YX * solved);
    return out;
}

} // namespace envelope
