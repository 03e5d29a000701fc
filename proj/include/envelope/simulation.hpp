#pragma once

#include <envelope/core.hpp>
#include <envelope/covariance.hpp>
#include <envelope/error.hpp>
#include <envelope/estimators.hpp>
#include <envelope/linalg.hpp>
#include <envelope/model_selection.hpp>
#include <envelope/parallel.hpp>
#include <envelope/random.hpp>
#include <envelope/ridge_path.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>
#include <vector>

namespace envelope::sim {

enum class BasisMode { haar, identity };

/// Generative parameters of the three-response design: Sigma has eigenvalues
/// {10, 8, 2}; the envelope is spanned by the eigenvectors for {8, 2}.
struct TrueModel
{
    MatrixXd Sigma;    // r x r
    MatrixXd Gamma;    // r x u
    MatrixXd Gamma0;   // r x (r - u)
    MatrixXd eta;      // u x p
    MatrixXd beta;     // r x p, Gamma eta
    MatrixXd Omega;    // u x u
    MatrixXd Omega0;   // (r - u) x (r - u)
    Ar1Covariance Sigma_x;
    std::uint64_t seed = 0;

    Index p() const { return beta.cols(); }
    Index r() const { return beta.rows(); }
    Index u() const { return Gamma.cols(); }
};

inline constexpr double kSignalTrace = 10.0;   // tr(eta^T eta)

inline TrueModel generate_model(Index p, double rho, BasisMode basis, std::uint64_t seed)
{
    envelope::detail::require(p >= 1, "p must be >= 1");
    envelope::detail::require(rho >= 0 && rho < 1, "rho must lie in [0, 1)");
    Rng rng(seed);
    TrueModel m;
    m.seed = seed;
    m.Sigma_x = Ar1Covariance{p, rho};

    const MatrixXd o = basis == BasisMode::identity ? MatrixXd::Identity(3, 3)
                                                    : linalg::orthonormalize(rng.normal_matrix(3, 3));
    const VectorXd ev = (VectorXd(3) << 10.0, 8.0, 2.0).finished();
    m.Sigma = linalg::symmetrize(o * ev.asDiagonal() * o.transpose());
    m.Gamma = o.rightCols(2);
    m.Gamma0 = o.leftCols(1);
    m.Omega = ev.tail(2).asDiagonal();
    m.Omega0 = ev.head(1).asDiagonal();

    const MatrixXd eta_raw = rng.normal_matrix(2, p);
    m.eta = std::sqrt(kSignalTrace) * eta_raw / eta_raw.norm();
    m.beta = m.Gamma * m.eta;
    return m;
}

/// n rows of y = beta x + eps with x ~ N(0, Sigma_x), eps ~ N(0, Sigma).
inline DataSet generate_data(const TrueModel& model, Index n, std::uint64_t seed)
{
    envelope::detail::require(n >= 1, "n must be >= 1");
    Rng rng(seed);
    MatrixXd x = model.Sigma_x.correlate_rows(rng.normal_matrix(n, model.p()));
    const MatrixXd z = rng.normal_matrix(n, model.r());

    // symmetric square-root factor; tolerates a singular (even zero) Sigma
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(linalg::symmetrize(model.Sigma));
    const VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const MatrixXd factor = es.eigenvectors() * root.asDiagonal();   // factor factor^T = Sigma
    MatrixXd y = x * model.beta.transpose() + z * factor.transpose();
    return DataSet::from_matrices(std::move(x), std::move(y));
}

/// tr[(beta_hat - beta) Sigma_x (beta_hat - beta)^T].
inline double prediction_risk(const MatrixXd& beta_hat, const TrueModel& model)
{
    envelope::detail::require(beta_hat.rows() == model.r() && beta_hat.cols() == model.p(),
                    "beta_hat dimensions do not match the model");
    return trace_quadratic(beta_hat - model.beta, model.Sigma_x);
}

struct Summary
{
    double mean = 0;
    double se = 0;
};

/// Mean and standard error (sample sd / sqrt(count)).
inline Summary summarize(const std::vector<double>& xs)
{
    Summary s;
    const double k = static_cast<double>(xs.size());
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= k;
    if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.se = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
    }
    return s;
}

struct RiskRow
{
    Index n = 0;
    Index p = 0;
    double rho = 0;
    double gamma = 0;
    std::string estimator;
    double mean_risk = 0;
    double se = 0;
    int reps = 0;
    std::uint64_t seed = 0;
    std::vector<double> replicate_risks;
};

using RiskTable = std::vector<RiskRow>;
using RiskCurve = std::vector<RiskRow>;

struct Table1Config
{
    Index n = 200;
    Index p = 20;
    double rho = 0;
    int reps = 100;
    std::uint64_t seed = 1;
    std::vector<EstimatorKind> estimators{EstimatorKind::enhanced, EstimatorKind::envelope,
                                          EstimatorKind::ols, EstimatorKind::ridge};
    Index u = 2;
    int lambda_count = 100;
    double log10_lambda_min = -4;
    double log10_lambda_max = 4;
    int folds = 10;
    bool regenerate_eta = true;
    BasisMode basis = BasisMode::haar;
    bool standardize = true;
    unsigned threads = 0;
    OptimizerOptions optimizer;
};

namespace detail {

inline bool contains(const std::vector<EstimatorKind>& ks, EstimatorKind k)
{
    for (auto x : ks)
        if (x == k) return true;
    return false;
}

// Converts a fit on standardized predictors back to raw-predictor coefficients.
inline MatrixXd to_raw_scale(const MatrixXd& beta_std, const DataSet& prepared)
{
    return beta_std * prepared.column_sds.cwiseInverse().asDiagonal();
}

} // namespace detail

/// One row per estimator: prediction risk averaged over replications, each
/// with a fresh model (unless regenerate_eta is false), fresh data, and
/// ten-fold CV over a log-spaced lambda grid for the enhanced and ridge fits.
inline RiskTable run_table1_experiment(const Table1Config& cfg)
{
    envelope::detail::require(cfg.reps >= 2, "reps must be >= 2");
    envelope::detail::require(cfg.n >= 4 && cfg.p >= 1, "invalid (n, p)");
    envelope::detail::require(cfg.u >= 0 && cfg.u <= 3, "u must lie in [0, 3]");
    envelope::detail::require(!cfg.estimators.empty(), "no estimators requested");

    const std::size_t n_est = cfg.estimators.size();
    std::vector<std::vector<double>> risks(n_est, std::vector<double>(cfg.reps));

    parallel_for(static_cast<std::size_t>(cfg.reps), cfg.threads, [&](std::size_t rep) {
        const std::uint64_t model_seed =
            stream_seed(cfg.seed, cfg.regenerate_eta ? rep : 0, 1);
        const TrueModel model = generate_model(cfg.p, cfg.rho, cfg.basis, model_seed);
        const DataSet raw = generate_data(model, cfg.n, stream_seed(cfg.seed, rep, 2));
        const DataSet prepared = prepare(raw, {cfg.standardize, true});
        const RidgePath path = RidgePath::from_data(prepared.X, prepared.Y);
        const Index r = model.r();

        const bool need_enh = detail::contains(cfg.estimators, EstimatorKind::enhanced);
        const bool need_ridge = detail::contains(cfg.estimators, EstimatorKind::ridge);
        double lambda_enh = 0, lambda_ridge = 0;
        if (need_enh || need_ridge) {
            std::vector<Index> us;
            if (need_enh) us.push_back(cfg.u);
            if (need_ridge && (!need_enh || cfg.u != r)) us.push_back(r);
            CVOptions cvo;
            cvo.folds = cfg.folds;
            cvo.seed = stream_seed(cfg.seed, rep, 3);
            cvo.standardize_x = cfg.standardize;
            cvo.threads = 1;
            cvo.optimizer = cfg.optimizer;
            const auto grid = scaled_lambda_grid(raw.Y, cfg.lambda_count, cfg.log10_lambda_min,
                                                 cfg.log10_lambda_max);
            const auto cv = kfold_cv(raw, us, grid, cvo);
            if (need_enh) lambda_enh = cv.best_for_u(cfg.u).lambda;
            if (need_ridge) lambda_ridge = cv.best_for_u(r).lambda;
        }

        for (std::size_t e = 0; e < n_est; ++e) {
            MatrixXd beta_std;
            switch (cfg.estimators[e]) {
            case EstimatorKind::enhanced:
                beta_std = fit_enhanced_envelope(path, cfg.u, lambda_enh, cfg.optimizer).beta_hat;
                break;
            case EstimatorKind::envelope:
                beta_std = fit_envelope_ridgeless(path, cfg.u, cfg.optimizer).beta_hat;
                break;
            case EstimatorKind::ols: beta_std = fit_ols(path); break;
            case EstimatorKind::ridge: beta_std = fit_ridge(path, lambda_ridge); break;
            }
            risks[e][rep] = prediction_risk(detail::to_raw_scale(beta_std, prepared), model);
        }
    });

    RiskTable table;
    for (std::size_t e = 0; e < n_est; ++e) {
        RiskRow row;
        row.n = cfg.n;
        row.p = cfg.p;
        row.rho = cfg.rho;
        row.gamma = static_cast<double>(cfg.p) / static_cast<double>(cfg.n);
        row.estimator = to_string(cfg.estimators[e]);
        const auto s = summarize(risks[e]);
        row.mean_risk = s.mean;
        row.se = s.se;
        row.reps = cfg.reps;
        row.seed = cfg.seed;
        row.replicate_risks = std::move(risks[e]);
        table.push_back(std::move(row));
    }
    return table;
}

struct SweepConfig
{
    Index n = 200;
    std::vector<double> gamma_grid{0.5, 0.8, 1.2, 2.0, 4.0};
    double rho = 0;
    int reps = 20;
    std::uint64_t seed = 1;
    Index u = 2;
    BasisMode basis = BasisMode::haar;
    bool standardize = true;
    unsigned threads = 0;
    OptimizerOptions optimizer;
};

/// p for a target ratio gamma = p / n.
inline Index p_for_gamma(double gamma, Index n)
{
    return std::max<Index>(1, static_cast<Index>(std::llround(gamma * static_cast<double>(n))));
}

/// Envelope (ridgeless) and enhanced (lambda = p/n, no tuning) risks over a
/// grid of aspect ratios. Rows come in grid order, envelope before enhanced.
inline RiskCurve run_double_descent_sweep(const SweepConfig& cfg)
{
    envelope::detail::require(!cfg.gamma_grid.empty(), "gamma grid is empty");
    for (double g : cfg.gamma_grid) envelope::detail::require(g > 0, "gamma values must be positive");
    envelope::detail::require(cfg.reps >= 1, "reps must be >= 1");
    envelope::detail::require(cfg.n >= 4, "n must be >= 4");

    const std::size_t n_g = cfg.gamma_grid.size();
    std::vector<std::vector<double>> env(n_g, std::vector<double>(cfg.reps)),
        enh(n_g, std::vector<double>(cfg.reps));

    // larger p first so the longest jobs start early
    parallel_for(n_g * cfg.reps, cfg.threads, [&](std::size_t job) {
        const std::size_t gi = n_g - 1 - job / cfg.reps;
        const std::size_t rep = job % cfg.reps;
        const Index p = p_for_gamma(cfg.gamma_grid[gi], cfg.n);
        const std::uint64_t key = stream_seed(cfg.seed, gi, 11);
        const TrueModel model = generate_model(p, cfg.rho, cfg.basis, stream_seed(key, rep, 1));
        const DataSet raw = generate_data(model, cfg.n, stream_seed(key, rep, 2));
        const DataSet prepared = prepare(raw, {cfg.standardize, true});
        const RidgePath path = RidgePath::from_data(prepared.X, prepared.Y);
        const double lambda = static_cast<double>(p) / static_cast<double>(cfg.n);
        env[gi][rep] = prediction_risk(
            detail::to_raw_scale(fit_envelope_ridgeless(path, cfg.u, cfg.optimizer).beta_hat, prepared),
            model);
        enh[gi][rep] = prediction_risk(
            detail::to_raw_scale(fit_enhanced_envelope(path, cfg.u, lambda, cfg.optimizer).beta_hat,
                                 prepared),
            model);
    });

    RiskCurve curve;
    for (std::size_t gi = 0; gi < n_g; ++gi) {
        for (int which = 0; which < 2; ++which) {
            RiskRow row;
            row.n = cfg.n;
            row.p = p_for_gamma(cfg.gamma_grid[gi], cfg.n);
            row.rho = cfg.rho;
            row.gamma = cfg.gamma_grid[gi];
            row.estimator = which == 0 ? "envelope" : "enhanced";
            auto& xs = which == 0 ? env[gi] : enh[gi];
            const auto s = summarize(xs);
            row.mean_risk = s.mean;
            row.se = s.se;
            row.reps = cfg.reps;
            row.seed = cfg.seed;
            row.replicate_risks = std::move(xs);
            curve.push_back(std::move(row));
        }
    }
    return curve;
}

/// CSV with columns n,p,rho,gamma,estimator,mean_risk,se,reps,seed.
inline void write_risk_rows_csv(std::ostream& out, const std::vector<RiskRow>& rows,
                                const std::string& comment = {})
{
    if (!comment.empty()) out << "# " << comment << '\n';
    out << "n,p,rho,gamma,estimator,mean_risk,se,reps,seed\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : rows) {
        out << r.n << ',' << r.p << ',' << r.rho << ',' << r.gamma << ',' << r.estimator << ','
            << r.mean_risk << ',' << r.se << ',' << r.reps << ',' << r.seed << '\n';
    }
}

inline void write_risk_rows_csv(const std::string& path, const std::vector<RiskRow>& rows,
                                const std::string& comment = {})
{
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot open '" + path + "' for writing");
    write_risk_rows_csv(out, rows, comment);
}

} // namespace envelope::sim
