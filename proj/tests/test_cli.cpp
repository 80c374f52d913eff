#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mvgamlss/cli.hpp"
#include "mvgamlss/errors.hpp"
#include "mvgamlss/simstudy.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"

using namespace mvgamlss;
using nlohmann::json;
using testmodels::table;

namespace {

struct RunResult {
    int code = -1;
    std::string output;
};

RunResult run(const std::string& args, const oracle::TempDir& dir) {
    const auto log = dir / "cli.log";
    const std::string cmd = std::string(MVGAMLSS_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, oracle::read_file(log)};
}

using Rows = std::vector<std::vector<std::string>>;

Rows read_rows(const std::filesystem::path& path) {
    std::istringstream in(oracle::read_file(path));
    Rows rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

// Row of a summary / slice table whose first cell is `key`.
std::vector<std::string> find_row(const Rows& rows, const std::string& key) {
    for (const auto& r : rows)
        if (!r.empty() && r[0] == key) return r;
    FAIL("row " << key << " not found");
    return {};
}

void write_json(const std::filesystem::path& path, const json& j) { oracle::write_file(path, j.dump(2)); }

std::string validation_message(const json& spec) {
    try {
        parse_model_spec(spec);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("model spec parsing") {
    const json spec = json::parse(R"j({
        "margins": [
            {"response": "y1", "family": "gaussian", "parameters": {"mu": ["intercept", "pspline(x)"]}},
            {"response": "y2", "family": "negbin", "parameters": {"size": [{"type": "intercept", "fixed": [0.5]}]}}
        ],
        "copula": {"default": ["intercept", {"type": "pspline", "covariate": "x", "knots": 12}]},
        "prior": {"a": 1.0, "b": 0.01},
        "chain": {"iterations": 500, "burnin": 100, "thin": 2, "seed": 4}
    })j");
    const ModelConfig cfg = parse_model_spec(spec);
    REQUIRE(cfg.margins.size() == 2);
    CHECK(cfg.margins[0].parameters.size() == 2);
    CHECK(cfg.margins[0].parameters[0].terms.size() == 2);
    CHECK(cfg.margins[0].parameters[1].terms.size() == 1);
    CHECK(cfg.margins[1].parameters[1].terms[0].fixed == std::vector<double>{0.5});
    REQUIRE(cfg.copula.size() == 1);
    CHECK(cfg.copula[0].terms[1].knots == 12);
    CHECK(cfg.chain.iterations == 500);
    CHECK(cfg.chain.seed == 4);
    // The explicit form parses back to itself.
    const json explicit_form = model_spec_to_json(cfg);
    CHECK(model_spec_to_json(parse_model_spec(explicit_form)) == explicit_form);

    json indep = json::parse(R"j({"margins": [{"response": "a", "family": "gaussian"},
        {"response": "b", "family": "gaussian"}, {"response": "c", "family": "gaussian"}], "copula": "independence"})j");
    const ModelConfig ic = parse_model_spec(indep);
    REQUIRE(ic.copula.size() == 3);
    for (const auto& p : ic.copula) CHECK(p.terms.at(0).fixed == std::vector<double>{0.0});
}

TEST_CASE("model spec errors name the field") {
    json bad = json::parse(R"j({"margins": [{"response": "y", "family": "gausian"}, {"response": "z", "family": "gaussian"}]})j");
    CHECK(validation_message(bad).find("margins[0].family") != std::string::npos);
    bad = json::parse(R"j({"margins": [{"response": "y", "family": "gaussian", "colour": 1}, {"response": "z", "family": "gaussian"}]})j");
    CHECK(validation_message(bad).find("colour") != std::string::npos);
    bad = json::parse(R"j({"margins": [{"response": "y", "family": "gaussian", "parameters": {"nu": []}},
                                      {"response": "z", "family": "gaussian"}]})j");
    CHECK(validation_message(bad).find("nu") != std::string::npos);
    bad = json::parse(R"j({"margins": [{"response": "y", "family": "gaussian"}, {"response": "z", "family": "gaussian"}],
                          "copula": [["intercept"], ["intercept"]]})j");
    CHECK_FALSE(validation_message(bad).empty());
    bad = json::parse(R"j({"margins": [{"response": "y", "family": "gaussian", "parameters": {"mu": ["spline(x)"]}},
                                      {"response": "z", "family": "gaussian"}]})j");
    CHECK(validation_message(bad).find("margins[0]") != std::string::npos);

    oracle::TempDir dir("spec");
    oracle::write_file(dir / "broken.json", "{\n  \"margins\": [\n    {\"response\": \"y\",, }\n  ]\n}\n");
    try {
        read_model_spec(dir / "broken.json");
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("broken.json:3:") != std::string::npos);
    }
}

TEST_CASE("summaries of draws") {
    std::vector<double> v;
    for (int i = 0; i <= 100; ++i) v.push_back(i);
    const SummaryRow r = summarize_draws("b", "coefficient", v);
    CHECK(r.mean == 50.0);
    CHECK(r.q500 == 50.0);
    CHECK(r.q025 == doctest::Approx(2.5));
    CHECK(r.q975 == doctest::Approx(97.5));
    CHECK(r.sd * r.sd == doctest::Approx(oracle::sample_variance(v)));
}

TEST_CASE("fit recovers an intercept-only correlation and reruns identically") {
    oracle::TempDir dir("fit");
    Rng rng = make_rng(101);
    const std::size_t n = 5000;
    std::vector<double> y1(n), y2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = standard_normal(rng), b = standard_normal(rng);
        y1[i] = a;
        y2[i] = 3.0 + 0.6 * a + 0.8 * b;
    }
    table({"y1", "y2"}, {y1, y2}).write_csv(dir / "data.csv");
    write_json(dir / "spec.json", json::parse(R"j({"margins": [{"response": "y1", "family": "gaussian"},
        {"response": "y2", "family": "gaussian"}], "copula": "constant"})j"));
    const std::string base = "fit --spec " + (dir / "spec.json").string() + " --data " + (dir / "data.csv").string() +
                             " --iterations 600 --burnin 200 --thin 2 --seed 11 --out ";
    const RunResult first = run(base + (dir / "a").string(), dir);
    REQUIRE_MESSAGE(first.code == 0, first.output);
    const Rows summary = read_rows(dir / "a" / "summary.csv");
    CHECK(summary[0] == std::vector<std::string>{"name", "kind", "mean", "sd", "q025", "q500", "q975"});
    const double omega = std::stod(find_row(summary, "omega_2_1")[2]);
    CHECK(std::abs(omega - oracle::sample_correlation(y1, y2)) < 0.05);
    CHECK(std::abs(omega - 0.6) < 0.05);

    const json diag = json::parse(oracle::read_file(dir / "a" / "diagnostics.json"));
    CHECK(diag["n"] == n);
    CHECK(diag["chain"]["stored_draws"] == 200);
    CHECK(diag["bic"]["edf"].get<double>() == doctest::Approx(5.0));
    for (const auto& b : diag["blocks"]) CHECK(b["acceptance_rate"].get<double>() > 0.5);

    REQUIRE(run(base + (dir / "b").string(), dir).code == 0);
    for (const char* f : {"chain.csv", "diagnostics.json", "summary.csv", "spec.json"})
        CHECK(oracle::read_file(dir / "a" / f) == oracle::read_file(dir / "b" / f));

    // The fit directory loads back with the same draws.
    const FitArtifacts fit = load_fit(dir / "a");
    CHECK(fit.draws.size() == 200);
    CHECK(fit.model.n() == n);
}

TEST_CASE("command-line errors exit with status 1") {
    oracle::TempDir dir("errors");
    write_json(dir / "spec.json", json::parse(R"j({"margins": [{"response": "y1", "family": "gausian"},
        {"response": "y2", "family": "gaussian"}]})j"));
    table({"y1", "y2"}, {{1.0, 2.0, 3.0}, {0.5, 0.1, 0.2}}).write_csv(dir / "data.csv");
    RunResult r = run("fit --spec " + (dir / "spec.json").string() + " --data " + (dir / "data.csv").string() +
                          " --out " + (dir / "out").string(),
                      dir);
    CHECK(r.code == 1);
    CHECK(r.output.find("margins[0].family") != std::string::npos);
    r = run("fit --spec " + (dir / "missing.json").string() + " --data x --out y", dir);
    CHECK(r.code != 0);
    r = run("simulate --design nonsense --out " + (dir / "sim").string(), dir);
    CHECK(r.code == 1);
    CHECK(run("bogus", dir).code != 0);
    CHECK(run("--help", dir).code == 0);
}

TEST_CASE("simulate writes data and truth") {
    oracle::TempDir dir("simulate");
    const RunResult r = run("simulate --design dagum5d --n 500 --replications 2 --seed 5 --out " + (dir / "sim").string(), dir);
    REQUIRE_MESSAGE(r.code == 0, r.output);
    const Dataset d = Dataset::read_csv(dir / "sim" / "data_rep001.csv");
    CHECK(d.cols() == 6);
    CHECK(d.rows() == 500);
    CHECK(d.names() == std::vector<std::string>{"x", "y1", "y2", "y3", "y4", "y5"});
    const json truth = json::parse(oracle::read_file(dir / "sim" / "truth_rep002.json"));
    CHECK(truth["replication"] == 2);
    CHECK(truth["lambda"]["lambda_3_1"] == "-x");
    SimDesign design;
    design.seed = 5;
    CHECK(d.values() == generate(design, 0).data.values());
}

TEST_CASE("quantile residuals") {
    Rng rng = make_rng(102);
    const std::size_t n = 2000;
    std::vector<double> x(n), g(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = uniform01(rng);
        g[i] = 1.0 + 2.0 * x[i] + 0.5 * standard_normal(rng);
        c[i] = std::floor(3.0 * uniform01(rng));
    }
    ModelConfig cfg;
    PredictorConfig mu = intercept_only();
    mu.terms.push_back(testmodels::linear("x"));
    cfg.margins = {{"g", Family::gaussian, {mu, intercept_only()}}, {"c", Family::negbin, {intercept_only(), intercept_only()}}};
    cfg.copula = {intercept_only()};
    const Model m = Model::build(cfg, table({"x", "g", "c"}, {x, g, c}));
    ParameterState s = initial_state(m);
    s.beta[0][0] = 1.0;
    s.beta[1][0] = 2.0;
    s.beta[2][0] = std::log(0.5);
    s.beta[3][0] = std::log(1.0);  // negbin mean 1
    s.beta[4][0] = std::log(5.0);
    const Eigen::MatrixXd r = quantile_residuals(m, s, m.data(), rng);
    REQUIRE(r.cols() == 2);
    std::vector<double> rg(r.col(0).data(), r.col(0).data() + n), rc(r.col(1).data(), r.col(1).data() + n);
    for (std::size_t i = 0; i < n; ++i) CHECK(rg[i] == doctest::Approx((g[i] - 1.0 - 2.0 * x[i]) / 0.5).epsilon(1e-9));
    CHECK(std::abs(oracle::sample_mean(rg)) < 0.1);
    CHECK(std::abs(oracle::sample_variance(rg) - 1.0) < 0.1);
    // Randomized residuals of the count margin are continuous (no ties).
    std::vector<double> sorted = rc;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("residual command on a misspecified fit") {
    oracle::TempDir dir("resid");
    Rng rng = make_rng(103);
    const std::size_t n = 1500;
    std::vector<double> y1(n), y2(n);
    std::student_t_distribution<double> t3(3.0);
    for (std::size_t i = 0; i < n; ++i) y1[i] = t3(rng), y2[i] = standard_normal(rng);
    table({"y1", "y2"}, {y1, y2}).write_csv(dir / "data.csv");
    write_json(dir / "spec.json", json::parse(R"j({"margins": [{"response": "y1", "family": "gaussian"},
        {"response": "y2", "family": "gaussian"}], "copula": "constant"})j"));
    REQUIRE(run("fit --spec " + (dir / "spec.json").string() + " --data " + (dir / "data.csv").string() +
                    " --iterations 300 --burnin 100 --thin 2 --out " + (dir / "fit").string(),
                dir)
                .code == 0);
    const RunResult r = run("residuals --fit " + (dir / "fit").string(), dir);
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(std::filesystem::exists(dir / "fit" / "qq_y1.svg"));
    const Rows res = read_rows(dir / "fit" / "residuals.csv");
    CHECK(res.size() == n + 1);
    const Rows qq = read_rows(dir / "fit" / "qq.csv");
    CHECK(qq[0] == std::vector<std::string>{"response", "rank", "residual", "normal_quantile"});
    // Heavy tails of t3 under a Gaussian fit: the extreme residuals overshoot
    // the normal quantiles; the correctly specified margin stays close.
    double tail_t = 0.0, tail_g = 0.0;
    for (std::size_t k = 1; k < qq.size(); ++k) {
        const double res_v = std::stod(qq[k][2]), q = std::stod(qq[k][3]);
        if (std::abs(q) < 2.5) continue;
        (qq[k][0] == "y1" ? tail_t : tail_g) = std::max(qq[k][0] == "y1" ? tail_t : tail_g, std::abs(res_v) - std::abs(q));
    }
    CHECK(tail_t > 1.5);
    CHECK(tail_g < 1.0);
}

TEST_CASE("summarize slices") {
    oracle::TempDir dir("summarize");
    Rng rng = make_rng(104);
    const std::size_t n = 400;
    std::vector<double> x(n), y1(n), y2(n);
    std::student_t_distribution<double> t4(4.0);
    for (std::size_t i = 0; i < n; ++i) x[i] = uniform01(rng), y1[i] = t4(rng), y2[i] = standard_normal(rng);
    table({"x", "y1", "y2"}, {x, y1, y2}).write_csv(dir / "data.csv");
    auto spec = [](double log_nu) {
        json s = json::parse(R"j({"margins": [
            {"response": "y1", "family": "student_t", "parameters": {
                "mu": [{"type": "intercept", "fixed": [0.0]}],
                "sigma": [{"type": "intercept", "fixed": [0.0]}]}},
            {"response": "y2", "family": "gaussian", "parameters": {"mu": ["intercept", "linear(x)"]}}],
            "copula": "constant"})j");
        s["margins"][0]["parameters"]["nu"] = json::array({json{{"type", "intercept"}, {"fixed", {log_nu}}}});
        return s;
    };
    for (double nu : {4.0, 1.5}) {
        const std::string tag = nu > 2.0 ? "fit4" : "fit15";
        write_json(dir / (tag + ".json"), spec(std::log(nu)));
        REQUIRE(run("fit --spec " + (dir / (tag + ".json")).string() + " --data " + (dir / "data.csv").string() +
                        " --iterations 200 --burnin 50 --out " + (dir / tag).string(),
                    dir)
                    .code == 0);
        const RunResult r = run("summarize --fit " + (dir / tag).string() +
                                    " --covariate x --points 5 --functionals mean,variance,spearman --no-svg",
                                dir);
        REQUIRE_MESSAGE(r.code == 0, r.output);
        const Rows rows = read_rows(dir / tag / "slices.csv");
        CHECK(rows[0] == std::vector<std::string>{"functional", "target", "x", "mean", "q025", "q975", "defined_fraction"});
        std::vector<double> rho;
        for (const auto& row : rows) {
            if (row[0] == "variance" && row[1] == "y1") {
                if (nu > 2.0) CHECK(std::stod(row[3]) == doctest::Approx(2.0).epsilon(1e-12));
                else {
                    CHECK(row[3] == "NA");
                    CHECK(std::stod(row[6]) == 0.0);
                }
            }
            if (row[0] == "spearman") rho.push_back(std::stod(row[3]));
        }
        // Constant copula: the Spearman curve is flat.
        REQUIRE(rho.size() == 5);
        for (double v : rho) CHECK(v == doctest::Approx(rho[0]).epsilon(1e-12));
    }
}
