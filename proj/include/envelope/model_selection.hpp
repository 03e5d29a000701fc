#pragma once

#include <envelope/core.hpp>
#include <envelope/csv.hpp>
#include <envelope/error.hpp>
#include <envelope/estimators.hpp>
#include <envelope/parallel.hpp>
#include <envelope/random.hpp>
#include <envelope/ridge_path.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace envelope {

/// `count` values equally spaced in log10 between 10^log10_min and 10^log10_max inclusive.
inline std::vector<double> default_lambda_grid(int count, double log10_min, double log10_max)
{
    detail::require(count >= 2, "lambda grid needs at least 2 values");
    detail::require(std::isfinite(log10_min) && std::isfinite(log10_max) &&
                        log10_max - log10_min > 1e-8,
                    "lambda grid range must satisfy log10_min < log10_max");
    std::vector<double> grid(count);
    const double step = (log10_max - log10_min) / (count - 1);
    for (int i = 0; i < count; ++i)
        grid[i] = std::pow(10.0, i == count - 1 ? log10_max : log10_min + step * i);
    return grid;
}

/// Default grid multiplied by tr(S_Y)/r of the centered responses, so the
/// search range follows the scale of the data.
inline std::vector<double> scaled_lambda_grid(const MatrixXd& y, int count, double log10_min = -4,
                                              double log10_max = 4)
{
    auto grid = default_lambda_grid(count, log10_min, log10_max);
    const MatrixXd yc = y.rowwise() - y.colwise().mean();
    double scale = yc.squaredNorm() / static_cast<double>(y.rows() * y.cols());
    if (!(scale > 0)) scale = 1.0;
    for (auto& g : grid) g *= scale;
    return grid;
}

/// fold[i] in [0, K): a seeded Fisher-Yates permutation dealt round-robin, so
/// fold sizes differ by at most one.
inline std::vector<int> fold_assignment(Index n, int k, std::uint64_t seed)
{
    detail::require(k >= 2, "K must be >= 2");
    detail::require(k <= n, "K must not exceed the number of observations");
    std::vector<Index> perm(n);
    for (Index i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed, 0x5eed, 0xf01d);
    for (Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(perm[i], perm[j]);
    }
    std::vector<int> fold(n);
    for (Index i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % k);
    return fold;
}

struct CVEntry
{
    Index u = 0;
    double lambda = 0;
    double mean_error = 0;
    std::vector<double> fold_errors;
};

struct CVResult
{
    Index best_u = 0;
    double best_lambda = 0;
    std::vector<CVEntry> cv_table;   // u ascending, then lambda in grid order
    int folds = 0;
    std::uint64_t seed = 0;

    /// Best entry restricted to one u, same tie-breaking as the global choice.
    const CVEntry& best_for_u(Index u) const;
};

namespace detail {

// smallest error; ties (within 1e-12 relative) go to smaller u, then larger lambda
inline bool cv_better(const CVEntry& a, const CVEntry& b)
{
    const double tol = 1e-12 * std::max(1.0, std::abs(b.mean_error));
    if (a.mean_error < b.mean_error - tol) return true;
    if (a.mean_error > b.mean_error + tol) return false;
    if (a.u != b.u) return a.u < b.u;
    return a.lambda > b.lambda;
}

} // namespace detail

inline const CVEntry& CVResult::best_for_u(Index u) const
{
    const CVEntry* best = nullptr;
    for (const auto& e : cv_table)
        if (e.u == u && (!best || detail::cv_better(e, *best))) best = &e;
    if (!best) throw InvalidArgument("u = " + std::to_string(u) + " is not in the CV table");
    return *best;
}

struct CVOptions
{
    int folds = 10;
    std::uint64_t seed = 0;
    bool standardize_x = true;
    bool center_y = true;
    unsigned threads = 1;
    OptimizerOptions optimizer;
};

namespace detail {

struct FoldData
{
    DataSet train;       // prepared
    MatrixXd x_test;     // transformed with training statistics
    MatrixXd y_test;     // centered with training means
};

inline FoldData make_fold(const DataSet& raw, const std::vector<int>& fold, int f,
                          const PrepareOptions& prep)
{
    std::vector<Index> tr, te;
    for (Index i = 0; i < static_cast<Index>(fold.size()); ++i) (fold[i] == f ? te : tr).push_back(i);
    FoldData fd;
    fd.train = prepare(raw.subset(tr), prep);
    const DataSet test = raw.subset(te);
    fd.x_test = fd.train.x_transform().apply(test.X);
    fd.y_test = test.Y.rowwise() - fd.train.y_means.transpose();
    return fd;
}

/// Per-coordinate mean squared error for every (u, lambda) on one split.
inline std::vector<double> score_grid(const FoldData& fd, const std::vector<Index>& u_grid,
                                      const std::vector<double>& lambda_grid,
                                      const OptimizerOptions& opts)
{
    const RidgePath path = RidgePath::from_data(fd.train.X, fd.train.Y);
    const MatrixXd projected = path.project(fd.x_test);
    const Index r = path.r();
    const double denom = static_cast<double>(fd.y_test.rows() * r);

    std::map<std::size_t, MatrixXd> ridge_cache;
    auto ridge_pred = [&](std::size_t li) -> const MatrixXd& {
        auto it = ridge_cache.find(li);
        if (it == ridge_cache.end())
            it = ridge_cache.emplace(li, path.predict_projected(projected, lambda_grid[li])).first;
        return it->second;
    };

    std::vector<double> errs;
    errs.reserve(u_grid.size() * lambda_grid.size());
    for (Index u : u_grid) {
        for (std::size_t li = 0; li < lambda_grid.size(); ++li) {
            double sse = 0;
            if (u == 0) {
                sse = fd.y_test.squaredNorm();
            } else if (u == r) {
                sse = (fd.y_test - ridge_pred(li)).squaredNorm();
            } else {
                const auto sub = estimate_envelope_subspace(path, u, lambda_grid[li], opts);
                const MatrixXd proj = sub.G * sub.G.transpose();
                sse = (fd.y_test - ridge_pred(li) * proj).squaredNorm();
            }
            errs.push_back(sse / denom);
        }
    }
    return errs;
}

} // namespace detail

/// K-fold cross-validation over a (u, lambda) grid. Each fold standardizes X
/// and centers Y using its training rows only and scores the per-coordinate
/// squared prediction error on the held-out rows.
inline CVResult kfold_cv(const DataSet& raw, const std::vector<Index>& u_grid,
                         const std::vector<double>& lambda_grid, const CVOptions& opts)
{
    detail::require(!u_grid.empty() && !lambda_grid.empty(), "u and lambda grids must be nonempty");
    const Index n = raw.n(), r = raw.r();
    detail::require(opts.folds >= 2 && opts.folds <= n, "K must lie in [2, n]");
    for (Index u : u_grid) detail::require(u >= 0 && u <= r, "u must lie in [0, r]");
    for (double l : lambda_grid)
        detail::require(l >= 0 && std::isfinite(l), "lambda values must be finite and >= 0");

    const auto fold = fold_assignment(n, opts.folds, opts.seed);
    std::vector<Index> fold_sizes(opts.folds, 0);
    for (int f : fold) ++fold_sizes[f];
    for (int f = 0; f < opts.folds; ++f) {
        const Index n_train = n - fold_sizes[f];
        const Index needed = r + (opts.center_y ? 1 : 0);
        if (n_train < needed) {
            throw InvalidArgument("fold " + std::to_string(f + 1) + " leaves " +
                                  std::to_string(n_train) + " training rows, fewer than the " +
                                  std::to_string(needed) +
                                  " needed for a nonsingular S_Y; change K or supply more rows");
        }
    }

    const PrepareOptions prep{opts.standardize_x, opts.center_y};
    std::vector<std::vector<double>> per_fold(opts.folds);
    parallel_for(static_cast<std::size_t>(opts.folds), opts.threads, [&](std::size_t f) {
        const auto fd = detail::make_fold(raw, fold, static_cast<int>(f), prep);
        per_fold[f] = detail::score_grid(fd, u_grid, lambda_grid, opts.optimizer);
    });

    CVResult res;
    res.folds = opts.folds;
    res.seed = opts.seed;
    std::size_t idx = 0;
    for (Index u : u_grid) {
        for (double l : lambda_grid) {
            CVEntry e;
            e.u = u;
            e.lambda = l;
            e.fold_errors.resize(opts.folds);
            double sum = 0;
            for (int f = 0; f < opts.folds; ++f) {
                e.fold_errors[f] = per_fold[f][idx];
                sum += e.fold_errors[f];
            }
            e.mean_error = sum / opts.folds;
            res.cv_table.push_back(std::move(e));
            ++idx;
        }
    }
    const CVEntry* best = &res.cv_table.front();
    for (const auto& e : res.cv_table)
        if (detail::cv_better(e, *best)) best = &e;
    res.best_u = best->u;
    res.best_lambda = best->lambda;
    return res;
}

inline void write_cv_table_csv(const std::string& path, const CVResult& cv,
                               const std::string& comment = {})
{
    std::vector<std::string> cols{"u", "lambda", "mean_error"};
    for (int f = 1; f <= cv.folds; ++f) cols.push_back("fold_" + std::to_string(f));
    MatrixXd m(cv.cv_table.size(), 3 + cv.folds);
    for (std::size_t i = 0; i < cv.cv_table.size(); ++i) {
        const auto& e = cv.cv_table[i];
        m(i, 0) = static_cast<double>(e.u);
        m(i, 1) = e.lambda;
        m(i, 2) = e.mean_error;
        for (int f = 0; f < cv.folds; ++f) m(i, 3 + f) = e.fold_errors[f];
    }
    csv::write_matrix_file(path, m, cols, comment);
}

struct NestedOptions
{
    int inner_folds = 10;
    std::uint64_t seed = 0;
    bool standardize_x = true;
    bool center_y = true;
    unsigned threads = 1;
    OptimizerOptions optimizer;
};

struct NestedResult
{
    double error = 0;                      // sum_i ||y_i - yhat_i||^2 / (n r)
    std::vector<double> per_observation;   // ||y_i - yhat_i||^2 / r
    std::vector<Index> selected_u;
    std::vector<double> selected_lambda;
};

/// Leave-one-out outer loop around an inner K-fold tuning loop. The grid
/// searched depends on the estimator: enhanced tunes (u, lambda), envelope
/// tunes u at lambda = 1e-8, ridge tunes lambda at u = r, OLS is untuned.
inline NestedResult nested_loocv(const DataSet& raw, const std::vector<Index>& u_grid,
                                 const std::vector<double>& lambda_grid, EstimatorKind kind,
                                 const NestedOptions& opts)
{
    const Index n = raw.n(), r = raw.r();
    detail::require(n >= 3, "nested LOOCV needs at least 3 observations");

    std::vector<Index> us = u_grid;
    std::vector<double> ls = lambda_grid;
    switch (kind) {
    case EstimatorKind::envelope: ls = {kRidgelessLambda}; break;
    case EstimatorKind::ridge: us = {r}; break;
    default: break;
    }

    NestedResult res;
    res.per_observation.assign(n, 0.0);
    res.selected_u.assign(n, r);
    res.selected_lambda.assign(n, 0.0);

    parallel_for(static_cast<std::size_t>(n), opts.threads, [&](std::size_t i) {
        std::vector<Index> tr;
        tr.reserve(n - 1);
        for (Index k = 0; k < n; ++k)
            if (k != static_cast<Index>(i)) tr.push_back(k);
        const DataSet train = raw.subset(tr);

        Index u = r;
        double lambda = 0;
        if (kind != EstimatorKind::ols) {
            CVOptions cvo;
            cvo.folds = std::min<int>(opts.inner_folds, static_cast<int>(train.n()));
            cvo.seed = stream_seed(opts.seed, i);
            cvo.standardize_x = opts.standardize_x;
            cvo.center_y = opts.center_y;
            cvo.threads = 1;
            cvo.optimizer = opts.optimizer;
            const auto cv = kfold_cv(train, us, ls, cvo);
            u = cv.best_u;
            lambda = cv.best_lambda;
        }
        const DataSet prepared = prepare(train, {opts.standardize_x, opts.center_y});
        const RidgePath path = RidgePath::from_data(prepared.X, prepared.Y);
        const FittedModel model = fit_prepared(prepared, path, kind, u, lambda, opts.optimizer);
        const MatrixXd yhat = model.predict(raw.X.row(i));
        res.per_observation[i] = (raw.Y.row(i) - yhat).squaredNorm() / static_cast<double>(r);
        res.selected_u[i] = u;
        res.selected_lambda[i] = lambda;
    });

    double sum = 0;
    for (double e : res.per_observation) sum += e;
    res.error = sum / static_cast<double>(n);
    return res;
}

} // namespace envelope
