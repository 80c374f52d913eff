#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "mvgamlss/copula.hpp"
#include "mvgamlss/errors.hpp"
#include "mvgamlss/likelihood.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"

using namespace mvgamlss;
using testmodels::table;

namespace {

PredictorConfig fixed_intercept(double value) {
    TermConfig t;
    t.fixed = std::vector<double>{value};
    return PredictorConfig{{t}};
}

// Bivariate Gaussian data with correlation rho (latent scale equals response scale).
Dataset bivariate_data(std::size_t n, double rho, Rng& rng, std::vector<double>* x_out = nullptr) {
    std::vector<double> x(n), y1(n), y2(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = uniform01(rng);
        const double a = standard_normal(rng), b = standard_normal(rng);
        y1[i] = 1.0 + 2.0 * a;
        y2[i] = -0.5 + 0.5 * (rho * a + std::sqrt(1 - rho * rho) * b);
    }
    if (x_out) *x_out = x;
    return table({"x", "y1", "y2"}, {x, y1, y2});
}

ModelConfig bivariate_config(PredictorConfig copula) {
    ModelConfig cfg;
    cfg.margins = {{"y1", Family::gaussian, {intercept_only(), intercept_only()}},
                   {"y2", Family::gaussian, {intercept_only(), intercept_only()}}};
    cfg.copula = {std::move(copula)};
    return cfg;
}

}  // namespace

TEST_CASE("independence reduction") {
    Rng rng = make_rng(51);
    const Model m = testmodels::mixed_model(40, rng);
    ParameterState s = testmodels::random_state(m, rng);
    for (std::size_t b = 0; b < m.blocks().size(); ++b) {
        if (m.predictors()[m.blocks()[b].predictor].target == PredictorTarget::copula) s.beta[b].setZero();
    }
    const double ll = joint_log_likelihood(m, s, rng);
    const Eigen::MatrixXd eta = predictor_matrix(m, s);
    double ref = 0.0;
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        const auto th = margin_parameters(m, eta.row(i));
        for (std::size_t j = 0; j < m.dimension(); ++j)
            ref += log_pdf<double>(m.families()[j], m.response()(i, static_cast<Eigen::Index>(j)), th[j]);
    }
    CHECK(std::abs(ll - ref) < 1e-12 * std::max(1.0, std::abs(ref)));
}

TEST_CASE("bivariate Gaussian closed form") {
    Rng rng = make_rng(52);
    for (double lambda : {-1.5, 0.0, 0.4, 2.0}) {
        const Dataset data = bivariate_data(30, 0.3, rng);
        const Model m = Model::build(bivariate_config(fixed_intercept(lambda)), data);
        ParameterState s = initial_state(m);
        s.beta[0][0] = 0.8;   // mu1
        s.beta[1][0] = 0.5;   // log sigma1
        s.beta[2][0] = -0.3;  // mu2
        s.beta[3][0] = -0.7;  // log sigma2
        const double rho = -lambda / std::sqrt(1 + lambda * lambda);
        double ref = 0.0;
        for (std::size_t i = 0; i < data.rows(); ++i)
            ref += oracle::bivariate_normal_log_pdf(data.column("y1")[i], data.column("y2")[i], 0.8, -0.3,
                                                    std::exp(0.5), std::exp(-0.7), rho);
        CHECK(joint_log_likelihood(m, s, rng) == doctest::Approx(ref).epsilon(1e-11));
        // Determinism without discrete margins.
        CHECK(joint_log_likelihood(m, s, rng) == joint_log_likelihood(m, s, rng));
    }
}

TEST_CASE("Gaussian mean score reduces to the GLM score") {
    Rng rng = make_rng(53);
    const Dataset data = bivariate_data(20, 0.0, rng);
    const Model m = Model::build(bivariate_config(fixed_intercept(0.0)), data);
    ParameterState s = initial_state(m);
    s.beta[0][0] = 0.3;
    s.beta[1][0] = 0.2;
    const Derivatives d = score_and_weights(m, s, 0, rng);
    const double sigma2 = std::exp(0.4);
    for (std::size_t i = 0; i < data.rows(); ++i) {
        CHECK(d.score[static_cast<Eigen::Index>(i)] == doctest::Approx((data.column("y1")[i] - 0.3) / sigma2).epsilon(1e-12));
        CHECK(d.weight[static_cast<Eigen::Index>(i)] == doctest::Approx(1.0 / sigma2).epsilon(1e-12));
    }
}

TEST_CASE("derivatives match finite differences") {
    Rng rng = make_rng(54);
    const Model m = testmodels::mixed_model(25, rng);
    for (int rep = 0; rep < 5; ++rep) {
        const ParameterState s = testmodels::random_state(m, rng);
        const auto err = testmodels::check_derivatives(m, s, rng);
        CHECK(err.checked == 25 * m.predictors().size());
        CHECK(err.score < 1e-4);
        CHECK(err.weight < 1e-3);
    }
}

TEST_CASE("randomized residuals are redrawn per evaluation") {
    Rng rng = make_rng(55);
    const Model m = testmodels::mixed_model(30, rng);
    const ParameterState s = testmodels::random_state(m, rng);
    LikelihoodWorkspace ws(m);
    REQUIRE(ws.set_state(s));
    const double a = ws.log_likelihood(rng), b = ws.log_likelihood(rng);
    CHECK(a != b);
    ws.freeze_zeta(rng);
    CHECK(ws.log_likelihood(rng) == ws.log_likelihood(rng));
}

TEST_CASE("serial and parallel execution agree") {
    Rng rng = make_rng(56);
    const Model m = testmodels::mixed_model(200, rng);
    const ParameterState s = testmodels::random_state(m, rng);
    LikelihoodWorkspace serial(m, Execution::serial), parallel(m, Execution::parallel);
    Rng r1 = make_rng(7), r2 = make_rng(7);
    serial.freeze_zeta(r1);
    parallel.freeze_zeta(r2);
    REQUIRE(serial.set_state(s));
    REQUIRE(parallel.set_state(s));
    CHECK(serial.log_likelihood(r1) == parallel.log_likelihood(r2));
    for (std::size_t k = 0; k < m.predictors().size(); ++k) {
        const Derivatives a = serial.derivatives(k, r1), b = parallel.derivatives(k, r2);
        CHECK(a.score == b.score);
        CHECK(a.weight == b.weight);
    }
}

TEST_CASE("permutation invariance") {
    Rng rng = make_rng(57);
    std::vector<double> x;
    const Dataset data = bivariate_data(50, 0.4, rng, &x);
    ModelConfig cfg = bivariate_config(intercept_only());
    cfg.margins[0].parameters[0].terms.push_back(testmodels::linear("x"));
    const Model m = Model::build(cfg, data);
    ParameterState s = testmodels::random_state(m, rng);
    std::vector<Eigen::Index> perm(data.rows());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    Eigen::MatrixXd shuffled(data.values().rows(), data.values().cols());
    for (Eigen::Index i = 0; i < shuffled.rows(); ++i) shuffled.row(i) = data.values().row(perm[static_cast<std::size_t>(i)]);
    const Model mp = Model::build(cfg, Dataset(data.names(), shuffled));
    CHECK(joint_log_likelihood(m, s, rng) == doctest::Approx(joint_log_likelihood(mp, s, rng)).epsilon(1e-13));
}

TEST_CASE("log prior") {
    CHECK(inverse_gamma_log_density(1.0, 0.001, 0.001) ==
          doctest::Approx(0.001 * std::log(0.001) - std::lgamma(0.001) - 0.001).epsilon(1e-14));
    Rng rng = make_rng(58);
    const Dataset data = bivariate_data(40, 0.2, rng);
    // Flat priors: the prior is constant in beta.
    const Model flat = Model::build(bivariate_config(intercept_only()), data);
    ParameterState s = initial_state(flat);
    const double p0 = log_prior(flat, s);
    s.beta[0][0] = 3.0;
    s.beta[4][0] = -1.0;
    CHECK(log_prior(flat, s) == p0);
    CHECK(log_posterior(flat, s, rng) - joint_log_likelihood(flat, s, rng) == doctest::Approx(p0));

    // Penalized block in the null space of K: only the tau2 terms remain.
    ModelConfig cfg = bivariate_config(intercept_only());
    cfg.margins[0].parameters[0].terms.push_back(testmodels::pspline("x", 6));
    const Model pen = Model::build(cfg, data);
    ParameterState t = initial_state(pen);
    const std::size_t b = pen.penalized_blocks().at(0);
    const auto& term = pen.term(pen.blocks()[b]);
    t.tau2[b] = 2.0;
    const double expected = -0.5 * term.penalty_rank * std::log(2.0) + inverse_gamma_log_density(2.0, term.a, term.b);
    CHECK(log_prior(pen, t) == doctest::Approx(expected).epsilon(1e-13));
    t.tau2[b] = -1.0;
    CHECK_THROWS_AS(log_prior(pen, t), DomainError);
}

TEST_CASE("MAP of an intercept-only Gaussian is the sample mean") {
    Rng rng = make_rng(59);
    std::vector<double> y(200);
    for (auto& v : y) v = 3.0 + 1.5 * standard_normal(rng);
    ModelConfig cfg;
    cfg.univariate = true;
    cfg.margins = {{"y", Family::gaussian, {intercept_only(), intercept_only()}}};
    const Model m = Model::build(cfg, table({"y"}, {y}));
    const MapResult r = map_estimate(m);
    CHECK(r.converged);
    CHECK(std::abs(r.state.beta[0][0] - oracle::sample_mean(y)) < 1e-6);
    // Flat-prior mode of sigma is the ML estimate.
    const double ml_var = oracle::sample_variance(y) * (y.size() - 1.0) / y.size();
    CHECK(std::exp(2.0 * r.state.beta[1][0]) == doctest::Approx(ml_var).epsilon(1e-5));
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] >= r.trace[i - 1] - 1e-9);
}

TEST_CASE("MAP recovers the copula correlation") {
    Rng rng = make_rng(60);
    const Dataset data = bivariate_data(5000, 0.6, rng);
    const Model m = Model::build(bivariate_config(intercept_only()), data);
    MapSettings settings;
    settings.seed = 3;
    const MapResult r = map_estimate(m, settings);
    CHECK(r.converged);
    const double lambda = r.state.beta[4][0];
    const double rho = -lambda / std::sqrt(1 + lambda * lambda);
    std::vector<double> a(data.column("y1").begin(), data.column("y1").end()), b(data.column("y2").begin(), data.column("y2").end());
    CHECK(std::abs(rho - oracle::sample_correlation(a, b)) < 0.05);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] >= r.trace[i - 1] - 1e-9);
}

TEST_CASE("MAP is deterministic given the seed and keeps constraints") {
    Rng rng = make_rng(61);
    const Model m = testmodels::mixed_model(60, rng);
    MapSettings settings;
    settings.max_iterations = 50;
    settings.seed = 9;
    const MapResult a = map_estimate(m, settings), b = map_estimate(m, settings);
    CHECK(a.trace == b.trace);
    for (std::size_t k = 0; k < m.blocks().size(); ++k) {
        CHECK(a.state.beta[k] == b.state.beta[k]);
        const auto& term = m.term(m.blocks()[k]);
        if (term.constrained()) CHECK((term.constraint * a.state.beta[k]).cwiseAbs().maxCoeff() < 1e-10);
    }
    for (std::size_t i = 1; i < a.trace.size(); ++i) {
        // Accepted block steps never lower the objective; tau2 mode updates only raise it too.
        CHECK(a.trace[i] >= a.trace[i - 1] - 1e-8 * std::abs(a.trace[i - 1]));
    }
}

TEST_CASE("information criterion") {
    Rng rng = make_rng(62);
    const Dataset data = bivariate_data(300, 0.5, rng);
    const Model m = Model::build(bivariate_config(intercept_only()), data);
    const MapResult r = map_estimate(m);
    const InformationCriterion ic = information_criterion(m, r.state, 1);
    CHECK(ic.edf == doctest::Approx(5.0));
    CHECK(ic.bic == doctest::Approx(-2.0 * ic.log_likelihood + 5.0 * std::log(300.0)));
    CHECK(ic.log_likelihood == doctest::Approx(joint_log_likelihood(m, r.state, rng)));

    ModelConfig cfg = bivariate_config(intercept_only());
    cfg.margins[0].parameters[0].terms.push_back(testmodels::pspline("x", 10));
    const Model pen = Model::build(cfg, data);
    const MapResult rp = map_estimate(pen);
    const InformationCriterion icp = information_criterion(pen, rp.state, 1);
    const std::size_t b = pen.penalized_blocks().at(0);
    CHECK(icp.block_edf[b] > 0.0);
    CHECK(icp.block_edf[b] < static_cast<double>(pen.blocks()[b].size));
}
