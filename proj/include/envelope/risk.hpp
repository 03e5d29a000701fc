#pragma once

#include <envelope/covariance.hpp>
#include <envelope/error.hpp>
#include <envelope/linalg.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace envelope {

/// Range eigenpairs of a sample covariance S_X = V diag(d) V^T; eigenvalues
/// below 1e-10 * max are treated as zero, which defines S_X^+ and the
/// null-space projector I - V V^T.
struct DesignSpectrum
{
    MatrixXd V;   // p x k
    VectorXd d;   // k

    Index p() const { return V.rows(); }

    static DesignSpectrum from_covariance(const MatrixXd& s_x)
    {
        detail::require(s_x.rows() == s_x.cols(), "S_X must be square");
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(linalg::symmetrize(s_x));
        return keep_range(es.eigenvalues(), es.eigenvectors(), nullptr, 0);
    }

    /// From an n x p design via the smaller Gram matrix; S_X = X^T X / n.
    static DesignSpectrum from_design(const MatrixXd& x)
    {
        const Index n = x.rows(), p = x.cols();
        const double inv_n = 1.0 / static_cast<double>(n);
        if (n >= p) {
            MatrixXd g = MatrixXd::Zero(p, p);
            g.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), inv_n);
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(g.selfadjointView<Eigen::Lower>());
            return keep_range(es.eigenvalues(), es.eigenvectors(), nullptr, 0);
        }
        MatrixXd g = MatrixXd::Zero(n, n);
        g.selfadjointView<Eigen::Lower>().rankUpdate(x, inv_n);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(g.selfadjointView<Eigen::Lower>());
        return keep_range(es.eigenvalues(), es.eigenvectors(), &x, n);
    }

private:
    static DesignSpectrum keep_range(const VectorXd& ev, const MatrixXd& vecs, const MatrixXd* x,
                                     Index n)
    {
        const double hi = ev.size() ? ev.maxCoeff() : 0.0;
        std::vector<Index> keep;
        for (Index j = 0; j < ev.size(); ++j)
            if (hi > 0 && ev(j) > linalg::kRankTolerance * hi) keep.push_back(j);
        DesignSpectrum s;
        s.d.resize(keep.size());
        MatrixXd sel(vecs.rows(), keep.size());
        for (std::size_t j = 0; j < keep.size(); ++j) {
            s.d(j) = ev(keep[j]);
            sel.col(j) = vecs.col(keep[j]);
        }
        if (x == nullptr) {
            s.V = std::move(sel);
        } else {
            // right singular vectors from left ones: V = X^T U diag(1 / sqrt(n d))
            s.V = x->transpose() * sel *
                  (s.d.array() * static_cast<double>(n)).sqrt().inverse().matrix().asDiagonal();
        }
        return s;
    }
};

namespace detail {

template <class Cov>
VectorXd range_weights(const DesignSpectrum& s, const Cov& cov)
{
    // v_j^T Sigma_x v_j
    const MatrixXd sv = cov.apply(s.V);
    return (s.V.array() * sv.array()).colwise().sum().transpose();
}

inline VectorXd range_weights(const DesignSpectrum& s, const IdentityCovariance&)
{
    return VectorXd::Ones(s.d.size());
}

} // namespace detail

/// Known-subspace envelope risk:
/// tr(beta Pi Sigma_x Pi beta^T) + tr(Omega)/n tr(S_X^+ Sigma_x), Pi = I - S_X^+ S_X.
template <class Cov>
double envelope_risk(const MatrixXd& beta, const DesignSpectrum& s, const Cov& cov,
                     double tr_omega, Index n)
{
    detail::require(beta.cols() == s.p() && cov.size() == s.p(), "risk inputs have inconsistent p");
    const MatrixXd resid = beta - (beta * s.V) * s.V.transpose();
    const double bias2 = trace_quadratic(resid, cov);
    const VectorXd w = detail::range_weights(s, cov);
    const double var = tr_omega / static_cast<double>(n) * (w.array() / s.d.array()).sum();
    return bias2 + var;
}

/// Known-subspace enhanced risk at penalty lambda:
/// lambda^2 tr(beta (S+lambda)^{-1} Sigma_x (S+lambda)^{-1} beta^T)
///   + tr(Omega)/n tr(Sigma_x S (S+lambda)^{-2}).
template <class Cov>
double enhanced_risk(const MatrixXd& beta, const DesignSpectrum& s, const Cov& cov,
                     double tr_omega, Index n, double lambda)
{
    detail::require(beta.cols() == s.p() && cov.size() == s.p(), "risk inputs have inconsistent p");
    detail::require(lambda > 0, "lambda must be positive");
    // lambda beta (S + lambda I)^{-1} = beta - beta V diag(d/(d+lambda)) V^T
    const VectorXd keep = (s.d.array() / (s.d.array() + lambda)).matrix();
    const MatrixXd bias_map = beta - (beta * s.V) * keep.asDiagonal() * s.V.transpose();
    const double bias2 = trace_quadratic(bias_map, cov);
    const VectorXd w = detail::range_weights(s, cov);
    const double var = tr_omega / static_cast<double>(n) *
                       (w.array() * s.d.array() / (s.d.array() + lambda).square()).sum();
    return bias2 + var;
}

struct RiskInputs
{
    MatrixXd beta;      // r x p
    MatrixXd Sigma_x;   // p x p
    MatrixXd S_X;       // p x p
    double tr_Omega = 0;
    Index n = 0;

    void validate() const
    {
        const Index p = beta.cols();
        detail::require(p > 0 && beta.rows() > 0, "beta must be nonempty");
        detail::require(Sigma_x.rows() == p && Sigma_x.cols() == p, "Sigma_x must be p x p");
        detail::require(S_X.rows() == p && S_X.cols() == p, "S_X must be p x p");
        detail::require(tr_Omega > 0, "tr(Omega) must be positive");
        detail::require(n > 0, "n must be positive");
    }
};

inline double risk_known_gamma_envelope(const RiskInputs& in)
{
    in.validate();
    return envelope_risk(in.beta, DesignSpectrum::from_covariance(in.S_X),
                         DenseCovariance{in.Sigma_x}, in.tr_Omega, in.n);
}

inline double risk_known_gamma_enhanced(const RiskInputs& in, double lambda)
{
    in.validate();
    return enhanced_risk(in.beta, DesignSpectrum::from_covariance(in.S_X),
                         DenseCovariance{in.Sigma_x}, in.tr_Omega, in.n, lambda);
}

/// tr(Omega) / (n sigma_1(beta^T beta)). Every lambda in (0, bound) gives the
/// enhanced estimator a strictly smaller risk than the envelope estimator.
/// Returns +infinity when beta = 0 (any lambda qualifies).
inline double theorem1_lambda_bound(const MatrixXd& beta, double tr_omega, Index n)
{
    detail::require(tr_omega > 0 && n > 0, "tr(Omega) and n must be positive");
    const MatrixXd bbt = beta * beta.transpose();
    if (bbt.size() == 0) return std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(bbt, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    if (!(top > 0)) return std::numeric_limits<double>::infinity();
    return tr_omega / (static_cast<double>(n) * top);
}

/// Stieltjes transform of the Marchenko-Pastur law with ratio gamma at real z < 0.
inline double stieltjes_mp(double z, double gamma)
{
    detail::require(z < 0 && std::isfinite(z), "stieltjes_mp requires real z < 0");
    detail::require(gamma > 0 && std::isfinite(gamma), "gamma must be positive");
    const double a = 1.0 - gamma - z;
    double disc = a * a - 4.0 * gamma * z;
    if (disc < 0 && disc > -1e-12) disc = 0;
    const double root = std::sqrt(disc);
    // rationalized branch when a > 0 avoids cancellation in a - root
    if (a > 0) return 2.0 / (a + root);
    return (a - root) / (2.0 * gamma * z);
}

struct AsymptoticRegime
{
    double gamma = 0;
    double tr_Omega = 0;
    double c_squared = 0;

    void validate() const
    {
        detail::require(gamma > 0 && std::isfinite(gamma), "gamma must be positive");
        detail::require(tr_Omega > 0, "tr(Omega) must be positive");
        detail::require(c_squared > 0, "c^2 must be positive");
    }
};

inline double limiting_risk_envelope(const AsymptoticRegime& reg)
{
    reg.validate();
    const double g = reg.gamma;
    if (g == 1.0) throw InvalidArgument("the envelope limiting risk diverges at gamma = 1");
    if (g < 1.0) return reg.tr_Omega * g / (1.0 - g);
    return reg.c_squared * (1.0 - 1.0 / g) + reg.tr_Omega / (g - 1.0);
}

struct EnhancedLimit
{
    double risk = 0;
    double lambda_star = 0;
};

/// Limiting risk at the asymptotically optimal lambda* = tr(Omega) gamma / c^2.
inline EnhancedLimit limiting_risk_enhanced(const AsymptoticRegime& reg)
{
    reg.validate();
    EnhancedLimit out;
    out.lambda_star = reg.tr_Omega * reg.gamma / reg.c_squared;
    out.risk = reg.tr_Omega * reg.gamma * stieltjes_mp(-out.lambda_star, reg.gamma);
    return out;
}

struct LimitingRiskPoint
{
    double gamma = 0;
    double envelope_limit = 0;   // +inf at gamma = 1
    double enhanced_limit = 0;
    double lambda_star = 0;
};

inline std::vector<LimitingRiskPoint> limiting_risk_curve(const std::vector<double>& gammas,
                                                          double tr_omega, double c_squared)
{
    std::vector<LimitingRiskPoint> out;
    out.reserve(gammas.size());
    for (double g : gammas) {
        const AsymptoticRegime reg{g, tr_omega, c_squared};
        LimitingRiskPoint pt;
        pt.gamma = g;
        pt.envelope_limit = g == 1.0 ? std::numeric_limits<double>::infinity()
                                     : limiting_risk_envelope(reg);
        const auto enh = limiting_risk_enhanced(reg);
        pt.enhanced_limit = enh.risk;
        pt.lambda_star = enh.lambda_star;
        out.push_back(pt);
    }
    return out;
}

} // namespace envelope
