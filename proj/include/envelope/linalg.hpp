#pragma once

#include <envelope/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace envelope {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace linalg {

/// Relative cutoff below which eigen/singular values are treated as zero.
inline constexpr double kRankTolerance = 1e-10;

inline MatrixXd symmetrize(const MatrixXd& a)
{
    return 0.5 * (a + a.transpose());
}

inline double min_eigenvalue(const MatrixXd& a)
{
    if (a.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

/// Cholesky of a symmetric positive definite matrix; throws NumericalError
/// with the extreme eigenvalues when the factorization breaks down.
inline Eigen::LLT<MatrixXd> spd_factor(const MatrixXd& a, const char* what = "matrix")
{
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a), Eigen::EigenvaluesOnly);
        std::ostringstream ss;
        ss << what << " is not positive definite (eigenvalue range ["
           << es.eigenvalues().minCoeff() << ", " << es.eigenvalues().maxCoeff() << "])";
        throw NumericalError(ss.str());
    }
    return llt;
}

inline double log_det_spd(const MatrixXd& a, const char* what = "matrix")
{
    if (a.size() == 0) return 0.0;
    const auto llt = spd_factor(a, what);
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline MatrixXd spd_inverse(const MatrixXd& a, const char* what = "matrix")
{
    const auto llt = spd_factor(a, what);
    return symmetrize(llt.solve(MatrixXd::Identity(a.rows(), a.cols())));
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues
/// below kRankTolerance * max are dropped.
inline MatrixXd pseudo_inverse_psd(const MatrixXd& a)
{
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
    const VectorXd& ev = es.eigenvalues();
    const double cutoff = kRankTolerance * std::max(ev.cwiseAbs().maxCoeff(), 0.0);
    VectorXd inv = VectorXd::Zero(ev.size());
    for (Index i = 0; i < ev.size(); ++i) {
        if (ev(i) > cutoff && ev(i) > 0) inv(i) = 1.0 / ev(i);
    }
    return symmetrize(es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose());
}

/// Q factor of a thin Householder QR with columns sign-normalized so that
/// diag(R) >= 0. The result spans the same column space as `a`.
inline MatrixXd orthonormalize(const MatrixXd& a)
{
    const Index m = a.rows(), k = a.cols();
    if (k == 0) return MatrixXd(m, 0);
    Eigen::HouseholderQR<MatrixXd> qr(a);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(m, k);
    const MatrixXd& r = qr.matrixQR();
    for (Index j = 0; j < k; ++j) {
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    }
    return q;
}

/// Orthonormal basis of the orthogonal complement of span(g), taken from the
/// trailing columns of the full Householder Q of g.
inline MatrixXd complement_basis(const MatrixXd& g)
{
    const Index r = g.rows(), u = g.cols();
    if (u == 0) return MatrixXd::Identity(r, r);
    Eigen::HouseholderQR<MatrixXd> qr(g);
    MatrixXd q = qr.householderQ();
    return q.rightCols(r - u);
}

inline double orthogonality_error(const MatrixXd& g)
{
    return (g.transpose() * g - MatrixXd::Identity(g.cols(), g.cols())).norm();
}

} // namespace linalg
} // namespace envelope
