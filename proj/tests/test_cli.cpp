#include "envelope_cli.hpp"

#include <envelope/csv.hpp>
#include <envelope/model_io.hpp>
#include <envelope/random.hpp>

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

using namespace envelope;
namespace fs = std::filesystem;
using Catch::Approx;

namespace {

struct TempDir
{
    fs::path path;
    TempDir()
    {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("envelope_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

struct Captured
{
    int code;
    std::string out, err;
};

Captured run(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    int code = 0;
    try {
        code = cli::parse_and_run(args);
    } catch (...) {
        std::cout.rdbuf(old_out);
        std::cerr.rdbuf(old_err);
        throw;
    }
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Writes a small regression problem with r = 3 responses.
void write_problem(const TempDir& dir, Index n, Index p, std::uint64_t seed, double noise = 1.0)
{
    Rng rng(seed);
    const MatrixXd x = rng.normal_matrix(n, p);
    const MatrixXd b = rng.normal_matrix(3, p);
    const MatrixXd y = x * b.transpose() + noise * rng.normal_matrix(n, 3);
    csv::write_matrix_file(dir.file("x.csv"), x);
    csv::write_matrix_file(dir.file("y.csv"), y);
}

} // namespace

TEST_CASE("cli: fit writes a model", "[cli]")
{
    TempDir d;
    write_problem(d, 40, 5, 1);
    const auto r = run({"fit", "--x", d.file("x.csv"), "--y", d.file("y.csv"), "--u", "2", "--lambda", "0.5",
                        "--out", d.file("m.json"), "--seed", "3"});
    CHECK(r.code == 0);
    CHECK(r.out.find("fit: estimator=enhanced") != std::string::npos);
    const FittedModel m = io::load_model(d.file("m.json"));
    CHECK(m.kind == EstimatorKind::enhanced);
    CHECK(m.u == 2);
    CHECK(m.lambda == 0.5);
    CHECK(m.beta_hat.rows() == 3);
    CHECK(m.beta_hat.cols() == 5);
    CHECK(slurp(d.file("m.json")).find("seed: 3") != std::string::npos);
}

TEST_CASE("cli: u outside [0, r] is rejected", "[cli]")
{
    TempDir d;
    write_problem(d, 40, 5, 2);
    const auto r = run({"fit", "--x", d.file("x.csv"), "--y", d.file("y.csv"), "--u", "5", "--lambda", "0.5",
                        "--out", d.file("m.json")});
    CHECK(r.code == 1);
    CHECK(r.err.find("u must lie in [0, r]") != std::string::npos);
    CHECK(!fs::exists(d.file("m.json")));
}

TEST_CASE("cli: input and usage errors exit with 1", "[cli]")
{
    TempDir d;
    write_problem(d, 20, 3, 3);
    CHECK(run({"fit", "--x", d.file("missing.csv"), "--y", d.file("y.csv"), "--u", "1", "--lambda", "1",
               "--out", d.file("m.json")})
              .code == 1);
    CHECK(run({"fit", "--bogus"}).code == 1);
    CHECK(run({"no-such-command"}).code == 1);
    CHECK(run({"cv", "--x", d.file("x.csv"), "--y", d.file("y.csv"), "--out", d.file("cv.csv")}).code == 1);
    CHECK(run({"fit", "--x", d.file("x.csv"), "--y", d.file("y.csv"), "--estimator", "lasso", "--out",
               d.file("m.json")})
              .code == 1);
    CHECK(run({"risk-curve", "--gamma", "0.5,-1", "--out", d.file("rc.csv")}).code == 1);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("cli: numerical failure exits with 2", "[cli]")
{
    TempDir d;
    write_problem(d, 30, 4, 4, 0.0);
    const auto r = run({"fit", "--x", d.file("x.csv"), "--y", d.file("y.csv"), "--u", "1", "--lambda",
                        "1e-15", "--out", d.file("m.json")});
    CHECK(r.code == 2);
    CHECK(r.err.find("numerical failure") != std::string::npos);
}

TEST_CASE("cli: fit then predict reproduces in-process predictions", "[cli]")
{
    TempDir d;
    write_problem(d, 50, 6, 5);
    for (const std::string est : {"enhanced", "envelope", "ols", "ridge"}) {
        REQUIRE(run({"fit", "--x", d.file("x.csv"), "--y", d.file("y.csv"), "--u", "2", "--lambda", "0.3",
                     "--estimator", est, "--out", d.file("m.json"), "--seed", "1"})
                    .code == 0);
        REQUIRE(run({"predict", "--model", d.file("m.json"), "--x", d.file("x.csv"), "--out",
                     d.file("yhat.csv")})
                    .code == 0);
        std::vector<std::string> header;
        const MatrixXd yhat = csv::read_matrix_file(d.file("yhat.csv"), {true, ','}, &header);
        CHECK(header == std::vector<std::string>{"y1", "y2", "y3"});
        const FittedModel m = io::load_model(d.file("m.json"));
        const MatrixXd x = csv::read_matrix_file(d.file("x.csv"));
        CHECK((yhat - m.predict(x)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("cli: risk-curve output", "[cli]")
{
    TempDir d;
    REQUIRE(run({"risk-curve", "--gamma", "0.1:4:0.1", "--out", d.file("rc.csv")}).code == 0);
    std::vector<std::string> header;
    const MatrixXd rc = csv::read_matrix_file(d.file("rc.csv"), {true, ','}, &header);
    CHECK(header == std::vector<std::string>{"gamma", "envelope_limit", "enhanced_limit", "lambda_star"});
    REQUIRE(rc.rows() == 40);
    CHECK(rc(4, 0) == 0.5);
    CHECK(rc(4, 1) == Approx(10.0).epsilon(1e-12));
    CHECK(rc(4, 2) == Approx(4.1421356).epsilon(1e-6));
    CHECK(std::isinf(rc(9, 1)));
    CHECK(slurp(d.file("rc.csv")).rfind("# envelope", 0) == 0);
}

TEST_CASE("cli: cv writes a table and optional model", "[cli]")
{
    TempDir d;
    write_problem(d, 40, 4, 6);
    const auto r = run({"cv", "--x", d.file("x.csv"), "--y", d.file("y.csv"), "--seed", "7", "--folds", "5",
                        "--lambda-count", "4", "--out", d.file("cv.csv"), "--model-out", d.file("m.json")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("best_u=") != std::string::npos);
    const std::string table = slurp(d.file("cv.csv"));
    CHECK(table.find("seed: 7") != std::string::npos);
    std::vector<std::string> header;
    const MatrixXd t = csv::read_matrix_file(d.file("cv.csv"), {true, ','}, &header);
    CHECK(t.rows() == 4 * 4);
    CHECK(header.size() >= 3);
    CHECK(io::load_model(d.file("m.json")).kind == EstimatorKind::enhanced);

    // rerunning with the same seed reproduces the table byte for byte
    REQUIRE(run({"cv", "--x", d.file("x.csv"), "--y", d.file("y.csv"), "--seed", "7", "--folds", "5",
                 "--lambda-count", "4", "--out", d.file("cv2.csv"), "--model-out", d.file("m.json")})
                .code == 0);
    const auto strip = [](const std::string& s) { return s.substr(s.find('\n')); };
    CHECK(strip(slurp(d.file("cv2.csv"))) == strip(table));
}

TEST_CASE("cli: nested-loocv", "[cli]")
{
    TempDir d;
    write_problem(d, 15, 3, 8);
    const auto r = run({"nested-loocv", "--x", d.file("x.csv"), "--y", d.file("y.csv"), "--seed", "2",
                        "--folds", "3", "--lambda-grid", "0.1,1", "--u-grid", "1,3", "--out", d.file("nl.csv")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("error=") != std::string::npos);
    const MatrixXd t = csv::read_matrix_file(d.file("nl.csv"), {true, ','});
    CHECK(t.rows() == 15);
    CHECK((t.col(1).array() >= 0).all());
}

TEST_CASE("cli: simulate commands", "[cli]")
{
    TempDir d;
    REQUIRE(run({"simulate-table", "--n", "30", "--p", "4", "--reps", "2", "--lambda-count", "3", "--folds", "3",
                 "--seed", "1", "--out", d.file("t.csv")})
                .code == 0);
    const std::string t1 = slurp(d.file("t.csv"));
    CHECK(t1.find("\nn,p,rho,gamma,estimator,mean_risk,se,reps,seed\n") != std::string::npos);
    CHECK(t1.find("enhanced") != std::string::npos);

    std::ofstream(d.file("cfg.json")) << R"({"n": 30, "p": 4, "reps": 2, "lambda_count": 3, "folds": 3,
                                              "seed": 1, "estimators": "ols"})";
    REQUIRE(run({"simulate-table", "--config", d.file("cfg.json"), "--out", d.file("t2.csv")}).code == 0);
    const std::string t2 = slurp(d.file("t2.csv"));
    CHECK(t2.find("ols") != std::string::npos);
    CHECK(t2.find("ridge") == std::string::npos);
    CHECK(run({"simulate-table", "--n", "30", "--p", "4", "--out", d.file("t3.csv")}).code == 1);

    REQUIRE(run({"simulate-dd", "--n", "20", "--gamma", "0.5,2", "--reps", "2", "--seed", "4", "--out",
                 d.file("dd.csv")})
                .code == 0);
    const std::string dd = slurp(d.file("dd.csv"));
    CHECK(std::count(dd.begin(), dd.end(), '\n') == 2 + 4);
}

TEST_CASE("cli: parse_grid", "[cli]")
{
    CHECK(cli::parse_grid("0.1:0.5:0.1") == std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5});
    CHECK(cli::parse_grid("1,2.5, 4") == std::vector<double>{1, 2.5, 4});
    CHECK(cli::parse_grid("0.1:4:0.1").size() == 40);
    CHECK(cli::parse_grid("3") == std::vector<double>{3});
    CHECK_THROWS_AS(cli::parse_grid(""), InvalidArgument);
    CHECK_THROWS_AS(cli::parse_grid("1:0:0.5"), InvalidArgument);
    CHECK_THROWS_AS(cli::parse_grid("1:2:0"), InvalidArgument);
    CHECK_THROWS_AS(cli::parse_grid("a,b"), InvalidArgument);
}

TEST_CASE("cli: installed binary exit codes", "[cli]")
{
    TempDir d;
    write_problem(d, 20, 3, 9);
    const std::string tool = ENVELOPE_TOOL_PATH;
    const auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    CHECK(status(tool + " risk-curve --gamma 0.5 --out " + d.file("rc.csv")) == 0);
    CHECK(status(tool + " fit --x " + d.file("x.csv") + " --y " + d.file("y.csv") + " --u 9 --lambda 1 --out " +
                 d.file("m.json")) == 1);
    CHECK(status(tool + " fit --x " + d.file("nope.csv") + " --y " + d.file("y.csv") +
                 " --u 1 --lambda 1 --out " + d.file("m.json")) == 1);
}
