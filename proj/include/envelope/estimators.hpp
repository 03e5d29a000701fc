#pragma once

#include <envelope/core.hpp>
#include <envelope/error.hpp>
#include <envelope/grassmann.hpp>
#include <envelope/linalg.hpp>
#include <envelope/ridge_path.hpp>

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace envelope {

/// Regularization used for the envelope estimator's vanishing-penalty limit,
/// and for least squares when S_X is singular.
inline constexpr double kRidgelessLambda = 1e-8;

struct EnvelopeFit
{
    MatrixXd Gamma_hat;    // r x u
    MatrixXd Gamma0_hat;   // r x (r - u)
    MatrixXd beta_hat;     // r x p
    MatrixXd Omega_hat;    // u x u
    MatrixXd Omega0_hat;   // (r - u) x (r - u)
    MatrixXd Sigma_hat;    // r x r
    Index u = 0;
    double lambda = 0;
    SubspaceResult diagnostics;
};

/// Envelope basis for a given (u, lambda): the minimizer of
/// log|G^T S^lambda_{Y|X} G| + log|G^T S_Y^{-1} G|.
inline SubspaceResult estimate_envelope_subspace(const RidgePath& path, Index u, double lambda,
                                                 const OptimizerOptions& opts = {})
{
    detail::require(u >= 0 && u <= path.r(), "u must lie in [0, r]");
    path.require_S_Y();
    if (u == 0 || u == path.r()) {
        // objective is constant over Gr(r, 0) and Gr(r, r)
        SubspaceResult res;
        res.G = u == 0 ? MatrixXd(path.r(), 0) : MatrixXd::Identity(path.r(), path.r());
        return res;
    }
    const auto spec = ObjectiveSpec::make(path.conditional_covariance(lambda), path.S_Y_inv(), u);
    return optimize_envelope_subspace(spec, opts);
}

/// Completes a fit from an estimated basis: beta = G G^T S_YX (S_X + lambda I)^{-1},
/// Omega = G^T S^lambda G, Omega0 = G0^T S_Y G0.
inline EnvelopeFit assemble_fit(const RidgePath& path, SubspaceResult sub, double lambda)
{
    EnvelopeFit fit;
    const Index r = path.r();
    fit.u = sub.G.cols();
    fit.lambda = lambda;
    fit.Gamma_hat = sub.G;
    fit.Gamma0_hat = linalg::complement_basis(sub.G);
    const MatrixXd cond = path.conditional_covariance(lambda);
    fit.Omega_hat = linalg::symmetrize(fit.Gamma_hat.transpose() * cond * fit.Gamma_hat);
    fit.Omega0_hat = linalg::symmetrize(fit.Gamma0_hat.transpose() * path.S_Y() * fit.Gamma0_hat);
    fit.Sigma_hat = linalg::symmetrize(fit.Gamma_hat * fit.Omega_hat * fit.Gamma_hat.transpose() +
                                       fit.Gamma0_hat * fit.Omega0_hat * fit.Gamma0_hat.transpose());
    if (fit.u == 0) {
        fit.beta_hat = MatrixXd::Zero(r, path.p());
    } else {
        const MatrixXd proj = fit.Gamma_hat * fit.Gamma_hat.transpose();
        fit.beta_hat = proj * path.ridge_coefficients(lambda);
    }
    fit.diagnostics = std::move(sub);
    return fit;
}

inline EnvelopeFit fit_enhanced_envelope(const RidgePath& path, Index u, double lambda,
                                         const OptimizerOptions& opts = {})
{
    detail::require(lambda > 0 && std::isfinite(lambda), "lambda must be a positive finite value");
    return assemble_fit(path, estimate_envelope_subspace(path, u, lambda, opts), lambda);
}

inline EnvelopeFit fit_enhanced_envelope(const SufficientStats& stats, Index u, double lambda,
                                         const OptimizerOptions& opts = {})
{
    detail::require(u >= 0 && u <= stats.r, "u must lie in [0, r]");
    stats.require_invertible_S_Y();
    return fit_enhanced_envelope(RidgePath::from_stats(stats), u, lambda, opts);
}

/// Envelope estimator defined as the lambda -> 0+ limit of the enhanced
/// estimator, evaluated at lambda = 1e-8. Valid for any p.
inline EnvelopeFit fit_envelope_ridgeless(const RidgePath& path, Index u,
                                          const OptimizerOptions& opts = {})
{
    return fit_enhanced_envelope(path, u, kRidgelessLambda, opts);
}

inline EnvelopeFit fit_envelope_ridgeless(const SufficientStats& stats, Index u,
                                          const OptimizerOptions& opts = {})
{
    return fit_enhanced_envelope(stats, u, kRidgelessLambda, opts);
}

/// S_YX S_X^{-1}; minimum-norm solution through lambda = 1e-8 when S_X is singular.
inline MatrixXd fit_ols(const RidgePath& path)
{
    return path.ridge_coefficients(path.full_rank() ? 0.0 : kRidgelessLambda);
}

inline MatrixXd fit_ols(const SufficientStats& stats)
{
    return fit_ols(RidgePath::from_stats(stats));
}

/// S_YX (S_X + lambda I)^{-1}.
inline MatrixXd fit_ridge(const RidgePath& path, double lambda)
{
    return path.ridge_coefficients(lambda);
}

inline MatrixXd fit_ridge(const SufficientStats& stats, double lambda)
{
    detail::require(lambda >= 0 && std::isfinite(lambda), "lambda must be a finite value >= 0");
    if (lambda == 0) {
        // explicit check so a singular S_X is reported even if the spectral
        // cutoff would have kept a tiny eigenvalue
        (void)regularize_stats(stats, 0.0);
    }
    return RidgePath::from_stats(stats).ridge_coefficients(lambda);
}

/// y_hat = standardize(Xnew) * beta^T + y_center.
inline MatrixXd predict(const MatrixXd& beta, const MatrixXd& x_new, const Standardization& transform,
                        const VectorXd& y_center)
{
    detail::require(x_new.cols() == beta.cols(),
                    "new rows have " + std::to_string(x_new.cols()) + " columns, model has p = " +
                        std::to_string(beta.cols()));
    detail::require(y_center.size() == beta.rows(), "response center has the wrong length");
    MatrixXd out = transform.apply(x_new) * beta.transpose();
    out.rowwise() += y_center.transpose();
    return out;
}

// ---------------------------------------------------------------------------
// End-to-end models on raw data

enum class EstimatorKind { enhanced, envelope, ols, ridge };

inline std::string to_string(EstimatorKind k)
{
    switch (k) {
    case EstimatorKind::enhanced: return "enhanced";
    case EstimatorKind::envelope: return "envelope";
    case EstimatorKind::ols: return "ols";
    case EstimatorKind::ridge: return "ridge";
    }
    return "unknown";
}

inline EstimatorKind parse_estimator_kind(const std::string& s)
{
    if (s == "enhanced") return EstimatorKind::enhanced;
    if (s == "envelope") return EstimatorKind::envelope;
    if (s == "ols") return EstimatorKind::ols;
    if (s == "ridge") return EstimatorKind::ridge;
    throw InvalidArgument("unknown estimator '" + s + "' (expected enhanced, envelope, ols, ridge)");
}

/// A fitted model carrying everything needed to predict on raw rows.
struct FittedModel
{
    EstimatorKind kind = EstimatorKind::enhanced;
    Index u = 0;
    double lambda = 0;
    MatrixXd beta_hat;                 // on the standardized-X / centered-Y scale
    std::optional<EnvelopeFit> fit;    // present for envelope-type estimators
    Standardization x_transform;
    VectorXd y_center;

    MatrixXd predict(const MatrixXd& x_new) const
    {
        return envelope::predict(beta_hat, x_new, x_transform, y_center);
    }

    /// Coefficients acting on raw predictors: beta diag(1/sd).
    MatrixXd raw_scale_coefficients() const
    {
        return beta_hat * x_transform.sds.cwiseInverse().asDiagonal();
    }
};

/// Fits one estimator on an already prepared data set.
inline FittedModel fit_prepared(const DataSet& prepared, const RidgePath& path, EstimatorKind kind,
                                Index u, double lambda, const OptimizerOptions& opts = {})
{
    FittedModel m;
    m.kind = kind;
    m.x_transform = prepared.x_transform();
    m.y_center = prepared.y_means;
    const Index r = prepared.r();
    switch (kind) {
    case EstimatorKind::enhanced:
        m.fit = fit_enhanced_envelope(path, u, lambda, opts);
        break;
    case EstimatorKind::envelope:
        m.fit = fit_envelope_ridgeless(path, u, opts);
        break;
    case EstimatorKind::ols:
        m.u = r;
        m.lambda = path.full_rank() ? 0.0 : kRidgelessLambda;
        m.beta_hat = fit_ols(path);
        return m;
    case EstimatorKind::ridge:
        m.u = r;
        m.lambda = lambda;
        m.beta_hat = fit_ridge(path, lambda);
        return m;
    }
    m.u = m.fit->u;
    m.lambda = m.fit->lambda;
    m.beta_hat = m.fit->beta_hat;
    return m;
}

/// Standardizes X, optionally centers Y, and fits.
inline FittedModel fit_model(const DataSet& raw, EstimatorKind kind, Index u, double lambda,
                             const OptimizerOptions& opts = {}, bool center_y = true)
{
    detail::require(u >= 0 && u <= raw.r(), "u must lie in [0, r]");
    const DataSet prepared = prepare(raw, {true, center_y});
    const RidgePath path = RidgePath::from_data(prepared.X, prepared.Y);
    return fit_prepared(prepared, path, kind, u, lambda, opts);
}

} // namespace envelope
