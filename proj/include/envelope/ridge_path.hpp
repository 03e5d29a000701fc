#pragma once

#include <envelope/core.hpp>
#include <envelope/error.hpp>
#include <envelope/linalg.hpp>

#include <Eigen/Dense>

namespace envelope {

/// Spectral precomputation of a (prepared) design that evaluates every
/// lambda-dependent quantity of the ridge / enhanced-envelope family in
/// O(k r^2) or O(k p r), k = rank(S_X).
///
/// With S_X = V diag(d) V^T restricted to its range and B = diag(d)^{-1/2} V^T S_XY:
///   S^lambda_{Y|X} = R0 + B^T diag(lambda / (d + lambda)) B
///   S_YX (S_X + lambda I)^{-1} = B^T diag(1 / (d + lambda)) W,  W = diag(d)^{1/2} V^T
/// where R0 is the least-squares residual covariance. Built from data, R0 is
/// formed from explicit residuals, which keeps S^lambda accurate when
/// p >= n and lambda is tiny.
class RidgePath
{
public:
    static RidgePath from_data(const MatrixXd& x, const MatrixXd& y)
    {
        detail::require(x.rows() == y.rows(), "X and Y row counts differ");
        detail::require(x.size() > 0 && y.size() > 0, "data must be nonempty");
        RidgePath rp;
        rp.n_ = x.rows();
        rp.p_ = x.cols();
        rp.r_ = y.cols();
        const double n = static_cast<double>(rp.n_);
        rp.S_Y_ = linalg::symmetrize(y.transpose() * y / n);

        MatrixXd u;  // n x k orthonormal basis of col(X)
        if (rp.n_ >= rp.p_) {
            MatrixXd gram = MatrixXd::Zero(rp.p_, rp.p_);
            gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), 1.0 / n);
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram.selfadjointView<Eigen::Lower>());
            const auto keep = rp.select(es.eigenvalues());
            MatrixXd v(rp.p_, keep.size());
            for (Index j = 0; j < v.cols(); ++j) v.col(j) = es.eigenvectors().col(keep[j]);
            rp.W_ = rp.d_.cwiseSqrt().asDiagonal() * v.transpose();
            u = x * v * (rp.d_.array() * n).sqrt().inverse().matrix().asDiagonal();
        } else {
            MatrixXd gram = MatrixXd::Zero(rp.n_, rp.n_);
            gram.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0 / n);
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram.selfadjointView<Eigen::Lower>());
            const auto keep = rp.select(es.eigenvalues());
            u.resize(rp.n_, keep.size());
            for (Index j = 0; j < u.cols(); ++j) u.col(j) = es.eigenvectors().col(keep[j]);
            rp.sample_mode_ = true;
            rp.Ut_ = u.transpose() / std::sqrt(n);
            rp.X_ = x;
        }
        rp.B_ = u.transpose() * y / std::sqrt(n);
        const MatrixXd resid = y - u * (u.transpose() * y);
        rp.R0_ = linalg::symmetrize(resid.transpose() * resid / n);
        rp.finish();
        return rp;
    }

    static RidgePath from_stats(const SufficientStats& s)
    {
        RidgePath rp;
        rp.n_ = s.n;
        rp.p_ = s.p;
        rp.r_ = s.r;
        rp.S_Y_ = s.S_Y;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(linalg::symmetrize(s.S_X));
        const auto keep = rp.select(es.eigenvalues());
        MatrixXd v(rp.p_, keep.size());
        for (Index j = 0; j < v.cols(); ++j) v.col(j) = es.eigenvectors().col(keep[j]);
        rp.W_ = rp.d_.cwiseSqrt().asDiagonal() * v.transpose();
        rp.B_ = rp.d_.cwiseSqrt().cwiseInverse().asDiagonal() * (v.transpose() * s.S_YX.transpose());
        rp.R0_ = linalg::symmetrize(s.S_Y - rp.B_.transpose() * rp.B_);
        rp.finish();
        return rp;
    }

    Index n() const { return n_; }
    Index p() const { return p_; }
    Index r() const { return r_; }
    Index rank() const { return d_.size(); }
    bool full_rank() const { return rank() == p_; }
    const VectorXd& eigenvalues() const { return d_; }
    const MatrixXd& S_Y() const { return S_Y_; }
    bool S_Y_invertible() const { return S_Y_invertible_; }

    const MatrixXd& S_Y_inv() const
    {
        require_S_Y();
        return S_Y_inv_;
    }

    void require_S_Y() const
    {
        if (!S_Y_invertible_)
            throw InvalidArgument("S_Y is singular (r = " + std::to_string(r_) + ", n = " +
                                  std::to_string(n_) +
                                  "); envelope fitting requires r <= n and non-degenerate responses");
    }

    /// S^lambda_{Y|X} = S_Y - S_YX (S_X + lambda I)^{-1} S_XY.
    MatrixXd conditional_covariance(double lambda) const
    {
        check_lambda(lambda);
        const VectorXd w = shrink_weights(lambda);
        return linalg::symmetrize(R0_ + B_.transpose() * w.asDiagonal() * B_);
    }

    /// S_YX (S_X + lambda I)^{-1}; lambda = 0 gives the minimum-norm least squares solution
    /// restricted to the numerical range of S_X.
    MatrixXd ridge_coefficients(double lambda) const
    {
        check_lambda(lambda);
        const VectorXd inv = (d_.array() + lambda).inverse().matrix();
        if (!sample_mode_) return B_.transpose() * inv.asDiagonal() * W_;
        const MatrixXd left = B_.transpose() * inv.asDiagonal() * Ut_;  // r x n
        return left * X_;
    }

    /// Coordinates of new (already transformed) rows such that
    /// predict_projected(project(Xnew), lambda) = Xnew * ridge_coefficients(lambda)^T.
    MatrixXd project(const MatrixXd& x_new) const
    {
        detail::require(x_new.cols() == p_, "new rows have the wrong number of columns");
        if (!sample_mode_) return x_new * W_.transpose();
        return (x_new * X_.transpose()) * Ut_.transpose();
    }

    /// Ridge predictions from projected rows, optionally followed by a right
    /// multiplication with an r x r matrix (e.g. the envelope projection).
    MatrixXd predict_projected(const MatrixXd& projected, double lambda) const
    {
        check_lambda(lambda);
        const VectorXd inv = (d_.array() + lambda).inverse().matrix();
        return projected * inv.asDiagonal() * B_;
    }

private:
    std::vector<Index> select(const VectorXd& ev)
    {
        const double hi = ev.size() ? ev.maxCoeff() : 0.0;
        std::vector<Index> keep;
        for (Index j = ev.size() - 1; j >= 0; --j) {
            if (hi > 0 && ev(j) > linalg::kRankTolerance * hi) keep.push_back(j);
        }
        d_.resize(keep.size());
        for (std::size_t j = 0; j < keep.size(); ++j) d_(j) = ev(keep[j]);
        return keep;
    }

    void finish()
    {
        S_Y_invertible_ = r_ <= n_ && is_positive_definite(S_Y_);
        if (S_Y_invertible_) S_Y_inv_ = linalg::spd_inverse(S_Y_, "S_Y");
    }

    void check_lambda(double lambda) const
    {
        detail::require(lambda >= 0 && std::isfinite(lambda), "lambda must be a finite value >= 0");
        if (lambda == 0 && !full_rank())
            throw InvalidArgument(
                "S_X is singular at lambda = 0; use the ridgeless path (lambda = 1e-8) for p >= n");
    }

    VectorXd shrink_weights(double lambda) const
    {
        return (lambda / (d_.array() + lambda)).matrix();
    }

    Index n_ = 0, p_ = 0, r_ = 0;
    VectorXd d_;
    MatrixXd B_;      // k x r
    MatrixXd W_;      // k x p (dense-eigen mode)
    MatrixXd Ut_;     // k x n, U^T / sqrt(n) (sample mode)
    MatrixXd X_;      // n x p (sample mode)
    MatrixXd R0_;
    MatrixXd S_Y_;
    MatrixXd S_Y_inv_;
    bool S_Y_invertible_ = false;
    bool sample_mode_ = false;
};

} // namespace envelope
