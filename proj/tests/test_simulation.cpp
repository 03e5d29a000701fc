#include <envelope/simulation.hpp>

#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace envelope;
using Catch::Approx;

namespace {

const sim::RiskRow& row_for(const sim::RiskTable& t, const std::string& name)
{
    for (const auto& r : t)
        if (r.estimator == name) return r;
    throw std::runtime_error("missing estimator " + name);
}

// |ours - reference| within three combined standard errors.
bool statistically_close(const sim::RiskRow& row, double ref_mean, double ref_se)
{
    return std::abs(row.mean_risk - ref_mean) <= 3.0 * std::hypot(row.se, ref_se);
}

} // namespace

TEST_CASE("generate_model: identity basis", "[sim]")
{
    const auto m = sim::generate_model(4, 0.0, sim::BasisMode::identity, 1);
    CHECK((m.Sigma - MatrixXd(Eigen::Vector3d(10, 8, 2).asDiagonal())).norm() <= 1e-14);
    MatrixXd g(3, 2);
    g << 0, 0, 1, 0, 0, 1;
    CHECK((m.Gamma - g).norm() == 0.0);
    CHECK((m.Omega - MatrixXd(Eigen::Vector2d(8, 2).asDiagonal())).norm() == 0.0);
    CHECK(m.Omega0.rows() == 1);
    CHECK(m.Omega0(0, 0) == 10.0);
}

TEST_CASE("generate_model: traces and structure for any seed", "[sim]")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto m = sim::generate_model(1 + static_cast<Index>(seed) * 3, 0.3, sim::BasisMode::haar, seed);
        CHECK(m.Omega.trace() == Approx(10.0).margin(1e-10));
        CHECK(m.Omega0.trace() == Approx(10.0).margin(1e-10));
        CHECK((m.eta.transpose() * m.eta).trace() == Approx(10.0).margin(1e-10));
        CHECK((m.Gamma * m.Omega * m.Gamma.transpose() + m.Gamma0 * m.Omega0 * m.Gamma0.transpose() - m.Sigma)
                  .norm() <= 1e-10);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(m.Sigma);
        CHECK(es.eigenvalues()(0) == Approx(2.0).margin(1e-10));
        CHECK(es.eigenvalues()(1) == Approx(8.0).margin(1e-10));
        CHECK(es.eigenvalues()(2) == Approx(10.0).margin(1e-10));
        CHECK((m.beta - m.Gamma * m.eta).norm() <= 1e-14);
        CHECK((m.Gamma.transpose() * m.Gamma - MatrixXd::Identity(2, 2)).norm() <= 1e-10);
        CHECK((m.Gamma.transpose() * m.Gamma0).norm() <= 1e-10);
    }
}

TEST_CASE("generate_model: AR(1) predictor covariance", "[sim]")
{
    const auto m = sim::generate_model(3, 0.8, sim::BasisMode::haar, 2);
    MatrixXd expected(3, 3);
    expected << 1, 0.8, 0.64, 0.8, 1, 0.8, 0.64, 0.8, 1;
    CHECK((m.Sigma_x.dense() - expected).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK_THROWS_AS(sim::generate_model(3, 1.0, sim::BasisMode::haar, 2), InvalidArgument);
    CHECK_THROWS_AS(sim::generate_model(3, -0.1, sim::BasisMode::haar, 2), InvalidArgument);
    CHECK_THROWS_AS(sim::generate_model(0, 0.1, sim::BasisMode::haar, 2), InvalidArgument);
}

TEST_CASE("generate_data: sample covariance of X matches Sigma_x", "[sim]")
{
    const auto m = sim::generate_model(5, 0.6, sim::BasisMode::haar, 3);
    const DataSet d = sim::generate_data(m, 100000, 4);
    const MatrixXd cov = d.X.transpose() * d.X / 100000.0;
    CHECK((cov - m.Sigma_x.dense()).cwiseAbs().maxCoeff() <= 0.02);
    const MatrixXd resid = d.Y - d.X * m.beta.transpose();
    CHECK((resid.transpose() * resid / 100000.0 - m.Sigma).cwiseAbs().maxCoeff() <= 0.2);
}

TEST_CASE("generate_data: zero error covariance is noiseless", "[sim]")
{
    auto m = sim::generate_model(6, 0.2, sim::BasisMode::haar, 5);
    m.Sigma.setZero();
    const DataSet d = sim::generate_data(m, 30, 6);
    CHECK((d.Y - d.X * m.beta.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generate_data: deterministic for a given seed", "[sim]")
{
    const auto m = sim::generate_model(6, 0.2, sim::BasisMode::haar, 7);
    const DataSet a = sim::generate_data(m, 40, 8), b = sim::generate_data(m, 40, 8);
    CHECK(a.X == b.X);
    CHECK(a.Y == b.Y);
    CHECK(a.X != sim::generate_data(m, 40, 9).X);
}

TEST_CASE("prediction_risk: examples", "[sim]")
{
    const auto m = sim::generate_model(8, 0.0, sim::BasisMode::haar, 9);
    CHECK(sim::prediction_risk(m.beta, m) == 0.0);
    CHECK(sim::prediction_risk(MatrixXd::Zero(3, 8), m) == Approx(10.0).epsilon(1e-12));
    Rng rng(10);
    const MatrixXd delta = rng.normal_matrix(3, 8);
    CHECK(sim::prediction_risk(m.beta + delta, m) == Approx(delta.squaredNorm()).epsilon(1e-12));
    const auto corr = sim::generate_model(8, 0.5, sim::BasisMode::haar, 9);
    CHECK(sim::prediction_risk(MatrixXd::Zero(3, 8), corr) ==
          Approx((corr.beta * corr.Sigma_x.dense() * corr.beta.transpose()).trace()).epsilon(1e-12));
    CHECK_THROWS_AS(sim::prediction_risk(MatrixXd::Zero(3, 7), m), InvalidArgument);
}

TEST_CASE("summarize: two replications", "[sim]")
{
    const auto s = sim::summarize({1.5, 4.0});
    CHECK(s.mean == Approx(2.75));
    CHECK(std::abs(s.se - std::abs(1.5 - 4.0) / 2.0) <= 1e-12);
}

TEST_CASE("run_table1_experiment: reps = 2 standard error", "[sim]")
{
    sim::Table1Config cfg;
    cfg.n = 40;
    cfg.p = 4;
    cfg.reps = 2;
    cfg.lambda_count = 5;
    cfg.folds = 4;
    const auto t = sim::run_table1_experiment(cfg);
    REQUIRE(t.size() == 4);
    for (const auto& row : t) {
        REQUIRE(row.replicate_risks.size() == 2);
        CHECK(std::abs(row.se - std::abs(row.replicate_risks[0] - row.replicate_risks[1]) / 2.0) <= 1e-12);
        CHECK(row.gamma == Approx(0.1));
    }
    cfg.reps = 1;
    CHECK_THROWS_AS(sim::run_table1_experiment(cfg), InvalidArgument);
}

TEST_CASE("run_table1_experiment: identical output regardless of threads", "[sim]")
{
    sim::Table1Config cfg;
    cfg.n = 50;
    cfg.p = 10;
    cfg.reps = 6;
    cfg.lambda_count = 8;
    cfg.folds = 5;
    cfg.seed = 17;
    cfg.threads = 1;
    const auto a = sim::run_table1_experiment(cfg);
    cfg.threads = 3;
    const auto b = sim::run_table1_experiment(cfg);
    std::ostringstream sa, sb;
    sim::write_risk_rows_csv(sa, a);
    sim::write_risk_rows_csv(sb, b);
    CHECK(sa.str() == sb.str());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].replicate_risks == b[i].replicate_risks);
}

TEST_CASE("run_table1_experiment: fixed eta keeps one model", "[sim]")
{
    sim::Table1Config cfg;
    cfg.n = 40;
    cfg.p = 5;
    cfg.reps = 3;
    cfg.estimators = {EstimatorKind::ols};
    cfg.regenerate_eta = false;
    const auto fixed = sim::run_table1_experiment(cfg);
    cfg.regenerate_eta = true;
    const auto fresh = sim::run_table1_experiment(cfg);
    CHECK(fixed[0].replicate_risks != fresh[0].replicate_risks);
}

TEST_CASE("OLS Monte Carlo risk is of the classical order", "[sim]")
{
    sim::Table1Config cfg;
    cfg.n = 200;
    cfg.p = 20;
    cfg.reps = 50;
    cfg.estimators = {EstimatorKind::ols};
    const auto t = sim::run_table1_experiment(cfg);
    const double classical = 20.0 * 20.0 / (200.0 - 20.0 - 1.0);
    CHECK(t[0].mean_risk <= 3.0 * classical);
    CHECK(t[0].mean_risk >= classical / 3.0);
}

TEST_CASE("run_double_descent_sweep: single ratio and layout", "[sim]")
{
    sim::SweepConfig cfg;
    cfg.n = 40;
    cfg.gamma_grid = {0.5};
    cfg.reps = 3;
    const auto c = sim::run_double_descent_sweep(cfg);
    REQUIRE(c.size() == 2);
    CHECK(c[0].estimator == "envelope");
    CHECK(c[1].estimator == "enhanced");
    for (const auto& row : c) {
        CHECK(row.gamma == 0.5);
        CHECK(row.p == 20);
    }
    cfg.gamma_grid = {0.5, -1.0};
    CHECK_THROWS_AS(sim::run_double_descent_sweep(cfg), InvalidArgument);
    CHECK(sim::p_for_gamma(1.2, 200) == 240);
}

TEST_CASE("run_double_descent_sweep: Monte Carlo envelope risk near its limit at n = 2000", "[sim][slow]")
{
    sim::SweepConfig cfg;
    cfg.n = 2000;
    cfg.gamma_grid = {0.5};
    cfg.reps = 5;
    cfg.seed = 3;
    const auto c = sim::run_double_descent_sweep(cfg);
    CHECK(std::abs(c[0].mean_risk - 10.0) <= 1.0);
}

TEST_CASE("risk table CSV layout", "[sim]")
{
    sim::RiskRow row;
    row.n = 10;
    row.p = 2;
    row.rho = 0.5;
    row.gamma = 0.2;
    row.estimator = "ols";
    row.mean_risk = 1.25;
    row.se = 0.5;
    row.reps = 4;
    row.seed = 9;
    std::ostringstream out;
    sim::write_risk_rows_csv(out, {row}, "note");
    CHECK(out.str() == "# note\nn,p,rho,gamma,estimator,mean_risk,se,reps,seed\n10,2,0.5,0.20000000000000001,ols,1.25,0.5,4,9\n");
}

TEST_CASE("Monte Carlo risks for reference design rows", "[sim][slow]")
{
    SECTION("n = 50, p = 60: ridgeless envelope")
    {
        sim::Table1Config cfg;
        cfg.n = 50;
        cfg.p = 60;
        cfg.reps = 100;
        cfg.estimators = {EstimatorKind::envelope};
        const auto t = sim::run_table1_experiment(cfg);
        INFO("envelope " << t[0].mean_risk << " (" << t[0].se << ")");
        CHECK(statistically_close(t[0], 33.70, 1.33));
    }
    SECTION("n = 500, p = 50: OLS")
    {
        sim::Table1Config cfg;
        cfg.n = 500;
        cfg.p = 50;
        cfg.reps = 100;
        cfg.estimators = {EstimatorKind::ols};
        const auto t = sim::run_table1_experiment(cfg);
        INFO("ols " << t[0].mean_risk << " (" << t[0].se << ")");
        CHECK(statistically_close(t[0], 2.28, 0.04));
    }
    SECTION("n = 200, p = 160: CV-tuned ridge")
    {
        sim::Table1Config cfg;
        cfg.n = 200;
        cfg.p = 160;
        cfg.reps = 100;
        cfg.estimators = {EstimatorKind::ridge};
        const auto t = sim::run_table1_experiment(cfg);
        INFO("ridge " << t[0].mean_risk << " (" << t[0].se << ")");
        CHECK(statistically_close(t[0], 6.91, 0.06));
    }
    SECTION("n = 200, p = 20: enhanced with CV")
    {
        sim::Table1Config cfg;
        cfg.n = 200;
        cfg.p = 20;
        cfg.reps = 100;
        cfg.estimators = {EstimatorKind::enhanced};
        const auto t = sim::run_table1_experiment(cfg);
        INFO("enhanced " << t[0].mean_risk << " (" << t[0].se << ")");
        CHECK(statistically_close(row_for(t, "enhanced"), 1.16, 0.04));
    }
}
