#pragma once

#include <envelope/error.hpp>
#include <envelope/linalg.hpp>
#include <envelope/random.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <optional>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace envelope {

/// J(G) = log|G^T M G| + log|G^T N_inv G| over semi-orthogonal r x u matrices G.
/// For the envelope problems M is the (ridge-)conditional residual covariance and
/// N_inv the inverse marginal response covariance.
struct ObjectiveSpec
{
    MatrixXd M;
    MatrixXd N_inv;
    Index u = 0;

    Index r() const { return M.rows(); }

    /// Symmetrizes both matrices and checks definiteness and dimensions.
    static ObjectiveSpec make(const MatrixXd& m, const MatrixXd& n_inv, Index u)
    {
        detail::require(m.rows() == m.cols() && n_inv.rows() == n_inv.cols() &&
                            m.rows() == n_inv.rows(),
                        "objective matrices must be square and of equal size");
        detail::require(u >= 0 && u <= m.rows(), "u must lie in [0, r]");
        ObjectiveSpec s{linalg::symmetrize(m), linalg::symmetrize(n_inv), u};
        const double lo_m = linalg::min_eigenvalue(s.M);
        const double lo_n = linalg::min_eigenvalue(s.N_inv);
        if (!(lo_m > 1e-12) || !(lo_n > 1e-12)) {
            throw NumericalError("objective matrices must be positive definite (min eigenvalues " +
                                 std::to_string(lo_m) + ", " + std::to_string(lo_n) + ")");
        }
        return s;
    }
};

/// One accepted iterate of a refinement run, reported to OptimizerOptions::observer.
struct IterateInfo
{
    int run = 0;
    int phase = 0;       // 0 .. u-1: column-wise construction, u: joint refinement
    int iteration = 0;
    double objective = 0;
    double orthogonality_error = 0;
};

struct OptimizerOptions
{
    int max_iter = 500;
    double tol_objective = 1e-10;
    double tol_gradient = 1e-10;
    int n_starts = 2;
    std::uint64_t seed = 0;
    std::function<void(const IterateInfo&)> observer;
};

struct SubspaceResult
{
    MatrixXd G;
    double objective_value = 0;
    int iterations = 0;
    double projected_gradient_norm = 0;
    bool converged = true;
    std::vector<double> trace;   // joint-refinement objective per iterate
};

namespace detail {

inline void require_semi_orthogonal(const MatrixXd& g, double tol)
{
    const double err = linalg::orthogonality_error(g);
    if (!(err <= tol))
        throw InvalidArgument("G is not semi-orthogonal (||G^T G - I||_F = " +
                              std::to_string(err) + ")");
}

struct Evaluation
{
    double value = 0;
    MatrixXd grad;   // horizontal (projected) gradient
};

inline Evaluation evaluate(const MatrixXd& g, const ObjectiveSpec& spec, bool with_grad)
{
    Evaluation ev;
    const MatrixXd mg = spec.M * g;
    const MatrixXd ng = spec.N_inv * g;
    const MatrixXd a = linalg::symmetrize(g.transpose() * mg);
    const MatrixXd b = linalg::symmetrize(g.transpose() * ng);
    const auto la = linalg::spd_factor(a, "G^T M G");
    const auto lb = linalg::spd_factor(b, "G^T N_inv G");
    ev.value = 2.0 * (la.matrixLLT().diagonal().array().log().sum() +
                      lb.matrixLLT().diagonal().array().log().sum());
    if (with_grad) {
        // Euclidean gradient 2 M G A^{-1} + 2 N G B^{-1}, then (I - G G^T) projection
        MatrixXd h = 2.0 * (la.solve(mg.transpose()).transpose() +
                            lb.solve(ng.transpose()).transpose());
        ev.grad = h - g * (g.transpose() * h);
    }
    return ev;
}

/// Gradient of A -> f(span(G + G_perp A)) for the (r-u) x u chart around G.
inline MatrixXd chart_gradient(const MatrixXd& g, const MatrixXd& g_perp, const MatrixXd& a,
                               const ObjectiveSpec& spec)
{
    const MatrixXd y = g + g_perp * a;
    const MatrixXd my = spec.M * y, ny = spec.N_inv * y;
    const Eigen::LDLT<MatrixXd> ya(linalg::symmetrize(y.transpose() * my));
    const Eigen::LDLT<MatrixXd> yb(linalg::symmetrize(y.transpose() * ny));
    const Eigen::LDLT<MatrixXd> yy(linalg::symmetrize(y.transpose() * y));
    const MatrixXd grad = 2.0 * ya.solve(my.transpose()).transpose() + 2.0 * yb.solve(ny.transpose()).transpose() -
                          4.0 * yy.solve(y.transpose()).transpose();
    return g_perp.transpose() * grad;
}

/// Newton step in the chart around G with a finite-difference Hessian of the
/// chart gradient. Empty when the Hessian is not positive definite.
inline std::optional<MatrixXd> newton_candidate(const MatrixXd& g, const ObjectiveSpec& spec)
{
    const Index r = g.rows(), u = g.cols(), d = (r - u) * u;
    const MatrixXd g_perp = linalg::complement_basis(g);
    const MatrixXd zero = MatrixXd::Zero(r - u, u);
    const MatrixXd grad0 = chart_gradient(g, g_perp, zero, spec);
    const double h = 1e-5;
    MatrixXd hess(d, d);
    for (Index k = 0; k < d; ++k) {
        MatrixXd e = zero;
        e(k % (r - u), k / (r - u)) = h;
        const MatrixXd diff = chart_gradient(g, g_perp, e, spec) - chart_gradient(g, g_perp, -e, spec);
        hess.col(k) = Eigen::Map<const VectorXd>(diff.data(), d) / (2 * h);
    }
    hess = linalg::symmetrize(hess);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(hess);
    if (!(es.eigenvalues().minCoeff() > 0)) return std::nullopt;
    const VectorXd step = -es.eigenvectors() *
                          (es.eigenvalues().cwiseInverse().asDiagonal() *
                           (es.eigenvectors().transpose() * Eigen::Map<const VectorXd>(grad0.data(), d)));
    return linalg::orthonormalize(g + g_perp * Eigen::Map<const MatrixXd>(step.data(), r - u, u));
}

inline double envelope_gradient_norm(const MatrixXd& g, const ObjectiveSpec& spec)
{
    return evaluate(g, spec, true).grad.norm();
}

struct RefineOutcome
{
    MatrixXd G;
    double value = 0;
    double grad_norm = 0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;
};

/// Projected-gradient descent on the Grassmannian with Barzilai-Borwein trial
/// steps, Armijo backtracking and QR retraction, switching to chart Newton
/// steps near a minimizer. Only non-increasing steps are accepted.
inline RefineOutcome refine(MatrixXd g, const ObjectiveSpec& spec, const OptimizerOptions& opts,
                            int run, int phase)
{
    RefineOutcome out;
    Evaluation cur = evaluate(g, spec, true);
    out.trace.push_back(cur.value);
    if (opts.observer) opts.observer({run, phase, 0, cur.value, linalg::orthogonality_error(g)});

    double gnorm = cur.grad.norm();
    double step = gnorm > 0 ? std::min(1.0, 0.5 / gnorm) : 1.0;
    int it = 0;
    bool converged = false;
    while (it < opts.max_iter) {
        // below tolerance only Newton polishing continues, down to the rounding floor
        const bool polishing = gnorm < opts.tol_gradient;
        if (polishing) converged = true;
        bool accepted = false;
        MatrixXd g_new;
        double f_new = 0;
        // close to a minimizer a chart Newton step converges quadratically and
        // resolves directions along which the objective is flat to rounding
        if (gnorm < 1e-3) {
            if (auto cand = newton_candidate(g, spec)) {
                try {
                    const double trial = evaluate(*cand, spec, false).value;
                    if (trial <= cur.value && envelope_gradient_norm(*cand, spec) < 0.5 * gnorm) {
                        accepted = true;
                        g_new = std::move(*cand);
                        f_new = trial;
                    }
                } catch (const NumericalError&) {
                }
            }
        }
        if (polishing && !accepted) break;
        for (int halving = 0; !accepted && halving < 60; ++halving) {
            g_new = linalg::orthonormalize(g - step * cur.grad);
            try {
                f_new = evaluate(g_new, spec, false).value;
            } catch (const NumericalError&) {
                step *= 0.5;
                continue;
            }
            if (f_new < cur.value && f_new <= cur.value - 1e-4 * step * gnorm * gnorm) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // no decrease representable in floating point: stationary to rounding
            converged = true;
            break;
        }
        ++it;
        const double decrease = cur.value - f_new;
        const MatrixXd s_k = g_new - g;
        const MatrixXd grad_old = std::move(cur.grad);
        g = std::move(g_new);
        cur = evaluate(g, spec, true);
        gnorm = cur.grad.norm();
        out.trace.push_back(cur.value);
        if (opts.observer)
            opts.observer({run, phase, it, cur.value, linalg::orthogonality_error(g)});
        // Barzilai-Borwein trial step; Armijo backtracking keeps the descent monotone
        const double sy = std::abs((s_k.array() * (cur.grad - grad_old).array()).sum());
        step = sy > 0 ? std::clamp(s_k.squaredNorm() / sy, 1e-12, 1e6) : std::min(step * 2.0, 1e6);
        if (!polishing && decrease < opts.tol_objective && gnorm < 10 * opts.tol_gradient) converged = true;
    }
    out.G = std::move(g);
    out.value = cur.value;
    out.grad_norm = gnorm;
    out.iterations = it;
    out.converged = converged;
    return out;
}

struct Candidate
{
    VectorXd w;
    double value;
};

/// Unit-vector candidates for a one-dimensional subproblem: eigenvectors of
/// A and of B (eigen of A first, ascending eigenvalue), ranked by objective
/// with stable ordering on ties.
inline std::vector<Candidate> ranked_candidates(const ObjectiveSpec& sub, const MatrixXd& b)
{
    std::vector<Candidate> cands;
    const Index k = sub.r();
    Eigen::SelfAdjointEigenSolver<MatrixXd> ea(sub.M), eb(linalg::symmetrize(b));
    for (const auto* es : {&ea, &eb}) {
        for (Index j = 0; j < k; ++j) {
            MatrixXd w = es->eigenvectors().col(j);
            cands.push_back({w, evaluate(w, sub, false).value});
        }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& x, const Candidate& y) { return x.value < y.value; });
    return cands;
}

} // namespace detail

/// log|G^T M G| + log|G^T N_inv G|. G must be semi-orthogonal to 1e-8.
inline double envelope_objective(const MatrixXd& g, const ObjectiveSpec& spec)
{
    detail::require(g.rows() == spec.r(), "G must have r rows");
    if (g.cols() == 0) return 0.0;
    detail::require_semi_orthogonal(g, 1e-8);
    return detail::evaluate(g, spec, false).value;
}

/// Horizontal-space gradient (I - G G^T)(2 M G (G^T M G)^{-1} + 2 N_inv G (G^T N_inv G)^{-1}).
inline MatrixXd envelope_objective_gradient(const MatrixXd& g, const ObjectiveSpec& spec)
{
    detail::require(g.rows() == spec.r(), "G must have r rows");
    if (g.cols() == 0) return MatrixXd(spec.r(), 0);
    detail::require_semi_orthogonal(g, 1e-8);
    return detail::evaluate(g, spec, true).grad;
}

/// Minimizes the envelope objective over Gr(r, u).
///
/// Each run builds G one column at a time: column k minimizes
/// log(w^T A w) + log(w^T B^{-1} w) over unit w in the orthogonal complement
/// of the first k columns, where A = G0^T M G0 and B = G0^T N G0 with
/// N = N_inv^{-1}. The assembled basis is then refined jointly. Run j seeds its
/// first column with the j-th best eigenvector candidate (random unit vectors
/// drawn from opts.seed once candidates run out); the best run wins, earlier
/// runs winning ties within 1e-12.
inline SubspaceResult optimize_envelope_subspace(const ObjectiveSpec& spec,
                                                 const OptimizerOptions& opts = {})
{
    const Index r = spec.r(), u = spec.u;
    detail::require(u >= 0 && u <= r, "u must lie in [0, r]");
    detail::require(opts.n_starts >= 1, "n_starts must be >= 1");
    detail::require(opts.max_iter >= 0, "max_iter must be >= 0");

    SubspaceResult res;
    if (u == 0) {
        res.G = MatrixXd(r, 0);
        res.trace = {0.0};
        return res;
    }
    if (u == r) {
        res.G = MatrixXd::Identity(r, r);
        res.objective_value = detail::evaluate(res.G, spec, false).value;
        res.trace = {res.objective_value};
        return res;
    }

    const MatrixXd n_full = linalg::spd_inverse(spec.N_inv, "N_inv");

    // first-column candidates are shared by all runs
    ObjectiveSpec first{spec.M, spec.N_inv, 1};
    const auto first_cands = detail::ranked_candidates(first, n_full);

    Rng rng(opts.seed);
    bool have_best = false;
    for (int run = 0; run < opts.n_starts; ++run) {
        MatrixXd g(r, 0);
        bool run_converged = true;
        for (Index k = 0; k < u; ++k) {
            const MatrixXd g0 = linalg::complement_basis(g);
            ObjectiveSpec sub;
            sub.M = linalg::symmetrize(g0.transpose() * spec.M * g0);
            const MatrixXd b = linalg::symmetrize(g0.transpose() * n_full * g0);
            sub.N_inv = linalg::spd_inverse(b, "restricted N");
            sub.u = 1;

            VectorXd w;
            if (k == 0) {
                if (static_cast<std::size_t>(run) < first_cands.size()) {
                    w = first_cands[run].w;
                } else {
                    w = VectorXd::NullaryExpr(r, [&] { return rng.normal(); });
                    w.normalize();
                }
            } else {
                w = detail::ranked_candidates(sub, b).front().w;
            }
            auto one = detail::refine(w, sub, opts, run, static_cast<int>(k));
            run_converged = run_converged && one.converged;
            MatrixXd next(r, k + 1);
            next << g, g0 * one.G;
            g = linalg::orthonormalize(next);
        }
        auto joint = detail::refine(g, spec, opts, run, static_cast<int>(u));
        if (!have_best || joint.value < res.objective_value - 1e-12) {
            have_best = true;
            res.G = std::move(joint.G);
            res.objective_value = joint.value;
            res.iterations = joint.iterations;
            res.projected_gradient_norm = joint.grad_norm;
            res.converged = joint.converged;
            res.trace = std::move(joint.trace);
        }
    }
    return res;
}

} // namespace envelope
