#include "envelope_cli.hpp"

#include <envelope/envelope.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace envelope::cli {

namespace {

using nlohmann::json;

// Round-trips a grid value through 12 significant digits so 0.1:4:0.1
// yields 0.3 rather than 0.30000000000000004.
double tidy(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::strtod(buf, nullptr);
}

double parse_number(const std::string& s)
{
    const std::string t = csv::detail::trim(s);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v))
        throw InvalidArgument("cannot parse '" + t + "' as a number");
    return v;
}

std::vector<Index> to_indices(const std::vector<double>& xs, const char* what)
{
    std::vector<Index> out;
    for (double x : xs) {
        if (x != std::floor(x)) throw InvalidArgument(std::string(what) + " values must be integers");
        out.push_back(static_cast<Index>(x));
    }
    return out;
}

struct Common
{
    std::uint64_t seed = 0;
    std::string out;
    unsigned threads = 0;
    bool header = false;
};

struct Context
{
    std::string command_line;

    std::string provenance(const Common& c, bool seeded) const
    {
        std::string s = std::string("envelope ") + kToolVersion + "; command: " + command_line;
        if (seeded) s += "; seed: " + std::to_string(c.seed);
        return s;
    }
};

void add_common(CLI::App* sub, Common& c, bool needs_seed, bool needs_out)
{
    auto* seed = sub->add_option("--seed", c.seed, "Random seed");
    if (needs_seed) seed->required();
    auto* out = sub->add_option("--out", c.out, "Output path");
    if (needs_out) out->required();
    sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
    sub->add_flag("--header", c.header, "Input CSV files start with a header row");
}

DataSet read_data(const std::string& x_path, const std::string& y_path, bool header)
{
    const csv::ReadOptions ro{header, ','};
    MatrixXd x = csv::read_matrix_file(x_path, ro);
    MatrixXd y = csv::read_matrix_file(y_path, ro);
    if (x.rows() != y.rows()) {
        throw InvalidArgument(x_path + " has " + std::to_string(x.rows()) + " rows but " + y_path +
                              " has " + std::to_string(y.rows()));
    }
    return DataSet::from_matrices(std::move(x), std::move(y));
}

void check_u(Index u, Index r)
{
    if (u < 0 || u > r) {
        throw InvalidArgument("u must lie in [0, r] (got u = " + std::to_string(u) +
                              ", r = " + std::to_string(r) + ")");
    }
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

// ---------------------------------------------------------------------------

struct FitArgs
{
    Common common;
    std::string x, y, estimator = "enhanced";
    Index u = -1;
    double lambda = -1;
    bool no_center_y = false;
};

int run_fit(const FitArgs& a, const Context& ctx)
{
    const auto kind = parse_estimator_kind(a.estimator);
    const DataSet raw = read_data(a.x, a.y, a.common.header);
    Index u = a.u;
    if (kind == EstimatorKind::enhanced || kind == EstimatorKind::envelope) {
        if (u < 0) throw InvalidArgument("--u is required for the " + a.estimator + " estimator");
        check_u(u, raw.r());
    } else {
        u = raw.r();
    }
    double lambda = a.lambda;
    if (kind == EstimatorKind::enhanced || kind == EstimatorKind::ridge) {
        if (lambda < 0) throw InvalidArgument("--lambda is required for the " + a.estimator + " estimator");
        if (kind == EstimatorKind::enhanced && !(lambda > 0))
            throw InvalidArgument("lambda must be positive for the enhanced estimator");
    }
    OptimizerOptions opts;
    opts.seed = a.common.seed;
    const FittedModel m = fit_model(raw, kind, u, std::max(lambda, 0.0), opts, !a.no_center_y);
    io::save_model(a.common.out, m, ctx.provenance(a.common, true));

    std::cout << "fit: estimator=" << a.estimator << " n=" << raw.n() << " p=" << raw.p()
              << " r=" << raw.r() << " u=" << m.u << " lambda=" << fmt(m.lambda);
    if (m.fit) {
        std::cout << " objective=" << fmt(m.fit->diagnostics.objective_value)
                  << " converged=" << (m.fit->diagnostics.converged ? "yes" : "no");
    }
    std::cout << " -> " << a.common.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct GridArgs
{
    std::string u_grid;
    std::string lambda_grid;
    int lambda_count = 20;
    double log10_min = -4;
    double log10_max = 4;
    int folds = 10;
};

void add_grid_options(CLI::App* sub, GridArgs& g)
{
    sub->add_option("--u-grid", g.u_grid, "u candidates, e.g. 0:3:1 or 0,1,2 (default 0..r)");
    sub->add_option("--lambda-grid", g.lambda_grid,
                    "Explicit lambda candidates (default: scaled log grid)");
    sub->add_option("--lambda-count", g.lambda_count, "Size of the default lambda grid");
    sub->add_option("--log10-min", g.log10_min, "Lower log10 end of the default lambda grid");
    sub->add_option("--log10-max", g.log10_max, "Upper log10 end of the default lambda grid");
    sub->add_option("--folds", g.folds, "Number of CV folds");
}

std::vector<Index> resolve_u_grid(const GridArgs& g, Index r)
{
    std::vector<Index> us;
    if (g.u_grid.empty()) {
        for (Index u = 0; u <= r; ++u) us.push_back(u);
    } else {
        us = to_indices(parse_grid(g.u_grid), "--u-grid");
    }
    for (Index u : us) check_u(u, r);
    return us;
}

std::vector<double> resolve_lambda_grid(const GridArgs& g, const MatrixXd& y)
{
    if (!g.lambda_grid.empty()) {
        auto ls = parse_grid(g.lambda_grid);
        for (double l : ls)
            if (!(l > 0)) throw InvalidArgument("lambda grid values must be positive");
        return ls;
    }
    return scaled_lambda_grid(y, g.lambda_count, g.log10_min, g.log10_max);
}

struct CvArgs
{
    Common common;
    std::string x, y, model_out;
    GridArgs grid;
    bool no_center_y = false;
};

int run_cv(const CvArgs& a, const Context& ctx)
{
    const DataSet raw = read_data(a.x, a.y, a.common.header);
    CVOptions o;
    o.folds = a.grid.folds;
    o.seed = a.common.seed;
    o.center_y = !a.no_center_y;
    o.threads = a.common.threads;
    o.optimizer.seed = a.common.seed;
    const auto us = resolve_u_grid(a.grid, raw.r());
    const auto ls = resolve_lambda_grid(a.grid, raw.Y);
    const CVResult cv = kfold_cv(raw, us, ls, o);
    const std::string prov = ctx.provenance(a.common, true);
    write_cv_table_csv(a.common.out, cv, prov);

    double best_err = 0;
    for (const auto& e : cv.cv_table)
        if (e.u == cv.best_u && e.lambda == cv.best_lambda) best_err = e.mean_error;
    if (!a.model_out.empty()) {
        const FittedModel m =
            fit_model(raw, EstimatorKind::enhanced, cv.best_u, cv.best_lambda, o.optimizer, o.center_y);
        io::save_model(a.model_out, m, prov);
    }
    std::cout << "cv: n=" << raw.n() << " folds=" << cv.folds << " candidates=" << cv.cv_table.size()
              << " best_u=" << cv.best_u << " best_lambda=" << fmt(cv.best_lambda)
              << " cv_error=" << fmt(best_err) << " -> " << a.common.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct PredictArgs
{
    Common common;
    std::string model, x;
};

int run_predict(const PredictArgs& a, const Context& ctx)
{
    const FittedModel m = io::load_model(a.model);
    const MatrixXd x = csv::read_matrix_file(a.x, {a.common.header, ','});
    const MatrixXd yhat = m.predict(x);
    std::vector<std::string> cols;
    for (Index j = 0; j < yhat.cols(); ++j) cols.push_back("y" + std::to_string(j + 1));
    csv::write_matrix_file(a.common.out, yhat, cols, ctx.provenance(a.common, false));
    std::cout << "predict: rows=" << yhat.rows() << " r=" << yhat.cols() << " estimator="
              << to_string(m.kind) << " -> " << a.common.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct NestedArgs
{
    Common common;
    std::string x, y, estimator = "enhanced";
    GridArgs grid;
    bool no_center_y = false;
};

int run_nested(const NestedArgs& a, const Context& ctx)
{
    const auto kind = parse_estimator_kind(a.estimator);
    const DataSet raw = read_data(a.x, a.y, a.common.header);
    NestedOptions o;
    o.inner_folds = a.grid.folds;
    o.seed = a.common.seed;
    o.center_y = !a.no_center_y;
    o.threads = a.common.threads;
    o.optimizer.seed = a.common.seed;
    const auto us = resolve_u_grid(a.grid, raw.r());
    const auto ls = resolve_lambda_grid(a.grid, raw.Y);
    const NestedResult res = nested_loocv(raw, us, ls, kind, o);

    if (!a.common.out.empty()) {
        MatrixXd m(raw.n(), 4);
        for (Index i = 0; i < raw.n(); ++i) {
            m(i, 0) = static_cast<double>(i + 1);
            m(i, 1) = res.per_observation[i];
            m(i, 2) = static_cast<double>(res.selected_u[i]);
            m(i, 3) = res.selected_lambda[i];
        }
        csv::write_matrix_file(a.common.out, m, {"row", "error", "u", "lambda"},
                               ctx.provenance(a.common, true) + "; nested error: " +
                                   std::to_string(res.error));
    }
    std::cout << "nested-loocv: estimator=" << a.estimator << " n=" << raw.n() << " p=" << raw.p()
              << " r=" << raw.r() << " error=" << fmt(res.error);
    if (!a.common.out.empty()) std::cout << " -> " << a.common.out;
    std::cout << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

sim::BasisMode parse_basis(const std::string& s)
{
    if (s == "haar") return sim::BasisMode::haar;
    if (s == "identity") return sim::BasisMode::identity;
    throw InvalidArgument("unknown basis '" + s + "' (expected haar or identity)");
}

json read_config(const std::string& path)
{
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config '" + path + "'");
    try {
        json j;
        in >> j;
        if (!j.is_object()) throw InvalidArgument("config '" + path + "' must be a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw InvalidArgument("config '" + path + "': " + e.what());
    }
}

struct TableArgs
{
    Common common;
    std::string config;
    std::string estimators = "enhanced,envelope,ols,ridge";
    std::string basis = "haar";
    sim::Table1Config cfg;
    bool fixed_eta = false;
};

int run_simulate_table(TableArgs a, CLI::App* sub, const Context& ctx)
{
    auto& c = a.cfg;
    const json j = read_config(a.config);
    try {
        auto pick = [&](const char* flag, const char* key, auto& field) {
            if (sub->count(flag) == 0 && j.contains(key)) j.at(key).get_to(field);
        };
        pick("--n", "n", c.n);
        pick("--p", "p", c.p);
        pick("--rho", "rho", c.rho);
        pick("--reps", "reps", c.reps);
        pick("--seed", "seed", a.common.seed);
        pick("--lambda-count", "lambda_count", c.lambda_count);
        pick("--log10-min", "log10_lambda_min", c.log10_lambda_min);
        pick("--log10-max", "log10_lambda_max", c.log10_lambda_max);
        pick("--folds", "folds", c.folds);
        pick("--u", "u", c.u);
        pick("--basis", "basis", a.basis);
        pick("--estimators", "estimators", a.estimators);
        if (sub->count("--fixed-eta") == 0 && j.contains("regenerate_eta"))
            a.fixed_eta = !j.at("regenerate_eta").get<bool>();
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    if (sub->count("--seed") == 0 && !j.contains("seed"))
        throw InvalidArgument("--seed is required (on the command line or in the config)");

    c.seed = a.common.seed;
    c.threads = a.common.threads;
    c.regenerate_eta = !a.fixed_eta;
    c.basis = parse_basis(a.basis);
    c.estimators.clear();
    std::stringstream ss(a.estimators);
    for (std::string item; std::getline(ss, item, ',');)
        c.estimators.push_back(parse_estimator_kind(csv::detail::trim(item)));
    c.optimizer.seed = c.seed;

    const sim::RiskTable table = sim::run_table1_experiment(c);
    sim::write_risk_rows_csv(a.common.out, table, ctx.provenance(a.common, true));
    std::cout << "simulate-table: n=" << c.n << " p=" << c.p << " rho=" << c.rho << " reps=" << c.reps;
    for (const auto& row : table)
        std::cout << ' ' << row.estimator << '=' << fmt(row.mean_risk) << "(" << fmt(row.se) << ")";
    std::cout << " -> " << a.common.out << '\n';
    return 0;
}

struct DdArgs
{
    Common common;
    std::string config;
    std::string gamma = "0.5,0.8,1.2,2,4";
    std::string basis = "haar";
    sim::SweepConfig cfg;
};

int run_simulate_dd(DdArgs a, CLI::App* sub, const Context& ctx)
{
    auto& c = a.cfg;
    const json j = read_config(a.config);
    try {
        auto pick = [&](const char* flag, const char* key, auto& field) {
            if (sub->count(flag) == 0 && j.contains(key)) j.at(key).get_to(field);
        };
        pick("--n", "n", c.n);
        pick("--rho", "rho", c.rho);
        pick("--reps", "reps", c.reps);
        pick("--seed", "seed", a.common.seed);
        pick("--u", "u", c.u);
        pick("--basis", "basis", a.basis);
        if (sub->count("--gamma") == 0 && j.contains("gamma_grid"))
            c.gamma_grid = j.at("gamma_grid").get<std::vector<double>>();
        else
            c.gamma_grid = parse_grid(a.gamma);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    if (sub->count("--seed") == 0 && !j.contains("seed"))
        throw InvalidArgument("--seed is required (on the command line or in the config)");
    c.seed = a.common.seed;
    c.threads = a.common.threads;
    c.basis = parse_basis(a.basis);
    c.optimizer.seed = c.seed;

    const sim::RiskCurve curve = sim::run_double_descent_sweep(c);
    sim::write_risk_rows_csv(a.common.out, curve, ctx.provenance(a.common, true));
    std::cout << "simulate-dd: n=" << c.n << " points=" << c.gamma_grid.size() << " reps=" << c.reps;
    for (const auto& row : curve)
        std::cout << ' ' << row.estimator << '@' << fmt(row.gamma) << '=' << fmt(row.mean_risk);
    std::cout << " -> " << a.common.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct CurveArgs
{
    Common common;
    std::string gamma;
    double tr_omega = 10;
    double c2 = 10;
};

int run_risk_curve(const CurveArgs& a, const Context& ctx)
{
    const auto gammas = parse_grid(a.gamma);
    for (double g : gammas)
        if (!(g > 0)) throw InvalidArgument("gamma values must be positive");
    const auto pts = limiting_risk_curve(gammas, a.tr_omega, a.c2);
    std::ofstream out(a.common.out);
    if (!out) throw InvalidArgument("cannot open '" + a.common.out + "' for writing");
    out << "# " << ctx.provenance(a.common, false) << '\n';
    out << "gamma,envelope_limit,enhanced_limit,lambda_star\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& pt : pts)
        out << pt.gamma << ',' << pt.envelope_limit << ',' << pt.enhanced_limit << ',' << pt.lambda_star
            << '\n';
    std::cout << "risk-curve: points=" << pts.size() << " tr_omega=" << fmt(a.tr_omega)
              << " c2=" << fmt(a.c2) << " -> " << a.common.out << '\n';
    return 0;
}

std::string join_args(int argc, char** argv)
{
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

} // namespace

std::vector<double> parse_grid(const std::string& text)
{
    const std::string t = csv::detail::trim(text);
    if (t.empty()) throw InvalidArgument("empty grid");
    std::vector<double> out;
    if (t.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(t);
        for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
        if (parts.size() != 3) throw InvalidArgument("range '" + t + "' must have the form start:stop:step");
        const double start = parse_number(parts[0]), stop = parse_number(parts[1]),
                     step = parse_number(parts[2]);
        if (!(step > 0)) throw InvalidArgument("range step must be positive");
        if (stop < start) throw InvalidArgument("range stop must not be below start");
        const auto count = static_cast<long long>(std::floor((stop - start) / step + 1e-9)) + 1;
        if (count > 10'000'000) throw InvalidArgument("range '" + t + "' has too many points");
        for (long long i = 0; i < count; ++i) out.push_back(tidy(start + static_cast<double>(i) * step));
    } else {
        std::stringstream ss(t);
        for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_number(item));
    }
    return out;
}

int parse_and_run(int argc, char** argv)
{
    CLI::App app{"Enhanced response envelope estimation, risk theory, and simulation"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    FitArgs fit;
    auto* s_fit = app.add_subcommand("fit", "Fit one estimator and save the model as JSON");
    add_common(s_fit, fit.common, false, true);
    s_fit->add_option("--x", fit.x, "Predictor CSV (n x p)")->required();
    s_fit->add_option("--y", fit.y, "Response CSV (n x r)")->required();
    s_fit->add_option("--u", fit.u, "Envelope dimension");
    s_fit->add_option("--lambda", fit.lambda, "Penalty");
    s_fit->add_option("--estimator", fit.estimator, "enhanced | envelope | ols | ridge");
    s_fit->add_flag("--no-center-y", fit.no_center_y, "Do not center the responses");

    CvArgs cv;
    auto* s_cv = app.add_subcommand("cv", "K-fold cross-validation over (u, lambda)");
    add_common(s_cv, cv.common, true, true);
    s_cv->add_option("--x", cv.x, "Predictor CSV")->required();
    s_cv->add_option("--y", cv.y, "Response CSV")->required();
    s_cv->add_option("--model-out", cv.model_out, "Also fit the selected model and save it here");
    s_cv->add_flag("--no-center-y", cv.no_center_y, "Do not center the responses");
    add_grid_options(s_cv, cv.grid);

    PredictArgs pr;
    auto* s_pr = app.add_subcommand("predict", "Predict responses for new predictor rows");
    add_common(s_pr, pr.common, false, true);
    s_pr->add_option("--model", pr.model, "Model JSON from fit")->required();
    s_pr->add_option("--x", pr.x, "Predictor CSV")->required();

    NestedArgs ne;
    auto* s_ne = app.add_subcommand("nested-loocv", "Leave-one-out error with inner K-fold tuning");
    add_common(s_ne, ne.common, true, false);
    s_ne->add_option("--x", ne.x, "Predictor CSV")->required();
    s_ne->add_option("--y", ne.y, "Response CSV")->required();
    s_ne->add_option("--estimator", ne.estimator, "enhanced | envelope | ols | ridge");
    s_ne->add_flag("--no-center-y", ne.no_center_y, "Do not center the responses");
    add_grid_options(s_ne, ne.grid);

    TableArgs tb;
    auto* s_tb = app.add_subcommand("simulate-table", "Monte Carlo risk table for one (n, p, rho)");
    add_common(s_tb, tb.common, false, true);
    s_tb->add_option("--config", tb.config, "JSON config; command-line flags take precedence");
    s_tb->add_option("--n", tb.cfg.n, "Sample size");
    s_tb->add_option("--p", tb.cfg.p, "Number of predictors");
    s_tb->add_option("--rho", tb.cfg.rho, "AR(1) predictor correlation");
    s_tb->add_option("--reps", tb.cfg.reps, "Replications");
    s_tb->add_option("--estimators", tb.estimators, "Comma list of estimators");
    s_tb->add_option("--lambda-count", tb.cfg.lambda_count, "Size of the CV lambda grid");
    s_tb->add_option("--log10-min", tb.cfg.log10_lambda_min, "Lower log10 end of the lambda grid");
    s_tb->add_option("--log10-max", tb.cfg.log10_lambda_max, "Upper log10 end of the lambda grid");
    s_tb->add_option("--folds", tb.cfg.folds, "CV folds");
    s_tb->add_option("--u", tb.cfg.u, "Envelope dimension used by the envelope estimators");
    s_tb->add_option("--basis", tb.basis, "haar | identity");
    s_tb->add_flag("--fixed-eta", tb.fixed_eta, "Keep one eta across replications");

    DdArgs dd;
    auto* s_dd = app.add_subcommand("simulate-dd", "Monte Carlo risk across p/n ratios");
    add_common(s_dd, dd.common, false, true);
    s_dd->add_option("--config", dd.config, "JSON config; command-line flags take precedence");
    s_dd->add_option("--n", dd.cfg.n, "Sample size");
    s_dd->add_option("--gamma", dd.gamma, "Ratios p/n, e.g. 0.5,0.8,1.2 or 0.1:4:0.1");
    s_dd->add_option("--rho", dd.cfg.rho, "AR(1) predictor correlation");
    s_dd->add_option("--reps", dd.cfg.reps, "Replications per ratio");
    s_dd->add_option("--u", dd.cfg.u, "Envelope dimension");
    s_dd->add_option("--basis", dd.basis, "haar | identity");

    CurveArgs rc;
    auto* s_rc = app.add_subcommand("risk-curve", "Limiting envelope and enhanced risks over p/n");
    add_common(s_rc, rc.common, false, true);
    s_rc->add_option("--gamma", rc.gamma, "Ratios p/n, e.g. 0.1:4:0.1")->required();
    s_rc->add_option("--tr-omega", rc.tr_omega, "tr(Omega)");
    s_rc->add_option("--c2", rc.c2, "Signal strength tr(eta^T eta)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const Context ctx{join_args(argc, argv)};
    try {
        if (*s_fit) return run_fit(fit, ctx);
        if (*s_cv) return run_cv(cv, ctx);
        if (*s_pr) return run_predict(pr, ctx);
        if (*s_ne) return run_nested(ne, ctx);
        if (*s_tb) return run_simulate_table(tb, s_tb, ctx);
        if (*s_dd) return run_simulate_dd(dd, s_dd, ctx);
        if (*s_rc) return run_risk_curve(rc, ctx);
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

int parse_and_run(const std::vector<std::string>& args)
{
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("envelope");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    argv.push_back(nullptr);
    return parse_and_run(static_cast<int>(storage.size()), argv.data());
}

} // namespace envelope::cli
