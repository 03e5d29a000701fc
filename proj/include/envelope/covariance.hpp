#pragma once

#include <envelope/error.hpp>
#include <envelope/linalg.hpp>

#include <Eigen/Dense>

#include <cmath>

namespace envelope {

// Predictor covariance operators. Each provides size(), apply(B) = Sigma * B
// for a p x m block B, and dense(). Risk formulas only need products, so the
// structured forms never materialize p x p matrices.

struct IdentityCovariance
{
    Index p = 0;

    Index size() const { return p; }
    MatrixXd apply(const MatrixXd& b) const { return b; }
    MatrixXd dense() const { return MatrixXd::Identity(p, p); }
};

/// Sigma_ij = rho^|i-j|.
struct Ar1Covariance
{
    Index p = 0;
    double rho = 0;

    Index size() const { return p; }

    // forward and backward geometric sums: O(p) per column
    MatrixXd apply(const MatrixXd& b) const
    {
        detail::require(b.rows() == p, "AR(1) operator dimension mismatch");
        if (rho == 0) return b;
        MatrixXd fwd = b, bwd = b;
        for (Index i = 1; i < p; ++i) fwd.row(i) += rho * fwd.row(i - 1);
        for (Index i = p - 2; i >= 0; --i) bwd.row(i) += rho * bwd.row(i + 1);
        return fwd + bwd - b;
    }

    MatrixXd dense() const
    {
        MatrixXd s(p, p);
        for (Index i = 0; i < p; ++i)
            for (Index j = 0; j < p; ++j)
                s(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
        return s;
    }

    /// Rows z of i.i.d. standard normals mapped to N(0, Sigma) rows. This is
    /// multiplication by the lower Cholesky factor of Sigma written as the
    /// AR(1) recursion x_1 = z_1, x_j = rho x_{j-1} + sqrt(1 - rho^2) z_j.
    MatrixXd correlate_rows(MatrixXd z) const
    {
        detail::require(z.cols() == p, "AR(1) operator dimension mismatch");
        if (rho == 0) return z;
        const double s = std::sqrt(1.0 - rho * rho);
        for (Index j = 1; j < p; ++j) z.col(j) = rho * z.col(j - 1) + s * z.col(j);
        return z;
    }
};

struct DenseCovariance
{
    MatrixXd sigma;

    Index size() const { return sigma.rows(); }
    MatrixXd apply(const MatrixXd& b) const { return sigma * b; }
    MatrixXd dense() const { return sigma; }
};

/// tr(D Sigma D^T) for an r x p matrix D.
template <class Cov>
double trace_quadratic(const MatrixXd& d, const Cov& cov)
{
    detail::require(d.cols() == cov.size(), "coefficient and covariance dimensions differ");
    const MatrixXd sd = cov.apply(d.transpose());   // p x r
    return (d.transpose().array() * sd.array()).sum();
}

} // namespace envelope
