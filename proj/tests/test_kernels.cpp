#include <doctest.h>

#include <cmath>
#include <vector>

#include <omp.h>

#include "mvgamlss/kernels.hpp"
#include "mvgamlss/likelihood.hpp"
#include "mvgamlss/random.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"

using namespace mvgamlss;

namespace {

// Bivariate Gaussian kernel input with predictors mu1, log sigma1, mu2,
// log sigma2, lambda and freshly refreshed marginal caches.
struct GaussianPair {
    std::size_t n;
    std::vector<double> y, eta, log_pdf, u, lower, upper, zeta;
    std::vector<Family> families{Family::gaussian, Family::gaussian};
    std::vector<std::size_t> offsets{0, 2, 4};
    std::vector<Link> links{Link::identity, Link::log, Link::identity, Link::log, Link::identity};

    GaussianPair(std::size_t size, Rng& rng)
        : n(size), y(2 * n), eta(5 * n), log_pdf(2 * n), u(2 * n), lower(2 * n), upper(2 * n), zeta(2 * n, 0.5) {
        for (auto& v : eta) v = 0.5 * standard_normal(rng);
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t i = 0; i < n; ++i)
                y[i + j * n] = eta[i + 2 * j * n] + std::exp(eta[i + (2 * j + 1) * n]) * standard_normal(rng);
    }

    KernelInput input() const {
        KernelInput in;
        in.n = n;
        in.dim = 2;
        in.y = y.data();
        in.families = families.data();
        in.margin_offset = offsets.data();
        in.copula_offset = 4;
        in.links = links.data();
        in.eta = eta.data();
        in.log_pdf = log_pdf.data();
        in.u = u.data();
        in.lower = lower.data();
        in.upper = upper.data();
        in.zeta = zeta.data();
        return in;
    }

    std::size_t refresh(Execution exec) {
        std::size_t bad = 0;
        for (std::size_t j = 0; j < 2; ++j) {
            MarginColumns out{log_pdf.data() + j * n, u.data() + j * n, lower.data() + j * n, upper.data() + j * n};
            bad += refresh_margin(input(), j, out, exec);
        }
        return bad;
    }

    double at(std::size_t i, std::size_t k) const { return eta[i + k * n]; }
};

}  // namespace

TEST_CASE("margin ownership of predictors") {
    Rng rng = make_rng(71);
    GaussianPair g(3, rng);
    const KernelInput in = g.input();
    CHECK(margin_of(in, 0) == 0);
    CHECK(margin_of(in, 1) == 0);
    CHECK(margin_of(in, 3) == 1);
    CHECK(margin_of(in, 4) == kNoPredictor);
    CHECK(margin_of(in, kNoPredictor) == kNoPredictor);
}

TEST_CASE("log-likelihood terms match the bivariate normal density") {
    Rng rng = make_rng(72);
    GaussianPair g(200, rng);
    REQUIRE(g.refresh(Execution::serial) == 0);
    std::vector<double> terms(g.n);
    loglik_terms(g.input(), terms.data(), nullptr, Execution::serial);
    for (std::size_t i = 0; i < g.n; ++i) {
        const double lambda = g.at(i, 4);
        const double ref = oracle::bivariate_normal_log_pdf(g.y[i], g.y[i + g.n], g.at(i, 0), g.at(i, 2), std::exp(g.at(i, 1)),
                                                            std::exp(g.at(i, 3)), -lambda / std::sqrt(1 + lambda * lambda));
        CHECK(terms[i] == doctest::Approx(ref).epsilon(1e-11));
    }
}

TEST_CASE("active replacement and scratch columns") {
    Rng rng = make_rng(73);
    GaussianPair g(50, rng);
    REQUIRE(g.refresh(Execution::serial) == 0);
    std::vector<double> replacement(g.n);
    for (auto& v : replacement) v = standard_normal(rng);

    KernelInput in = g.input();
    in.active = 2;
    in.active_eta = replacement.data();
    std::vector<double> terms(g.n), s_log_pdf(g.n), s_u(g.n), s_lower(g.n), s_upper(g.n);
    MarginColumns scratch{s_log_pdf.data(), s_u.data(), s_lower.data(), s_upper.data()};
    loglik_terms(in, terms.data(), &scratch, Execution::serial);

    // Same values as physically replacing the column.
    GaussianPair h = g;
    for (std::size_t i = 0; i < g.n; ++i) h.eta[i + 2 * g.n] = replacement[i];
    REQUIRE(h.refresh(Execution::serial) == 0);
    std::vector<double> ref(g.n);
    loglik_terms(h.input(), ref.data(), nullptr, Execution::serial);
    for (std::size_t i = 0; i < g.n; ++i) {
        CHECK(terms[i] == doctest::Approx(ref[i]).epsilon(1e-14));
        CHECK(s_log_pdf[i] == h.log_pdf[i + g.n]);
        CHECK(s_u[i] == h.u[i + g.n]);
    }
}

TEST_CASE("derivative terms of a Gaussian mean under independence") {
    Rng rng = make_rng(74);
    GaussianPair g(40, rng);
    for (std::size_t i = 0; i < g.n; ++i) g.eta[i + 4 * g.n] = 0.0;
    REQUIRE(g.refresh(Execution::serial) == 0);
    KernelInput in = g.input();
    in.active = 0;
    std::vector<double> score(g.n), weight(g.n);
    derivative_terms(in, score.data(), weight.data(), Execution::serial);
    for (std::size_t i = 0; i < g.n; ++i) {
        const double s2 = std::exp(2.0 * g.at(i, 1));
        CHECK(score[i] == doctest::Approx((g.y[i] - g.at(i, 0)) / s2).epsilon(1e-12));
        CHECK(weight[i] == doctest::Approx(1.0 / s2).epsilon(1e-12));
    }
}

TEST_CASE("invalid parameters are counted and flagged") {
    Rng rng = make_rng(75);
    GaussianPair g(10, rng);
    g.eta[3 + g.n] = 800.0;  // sigma overflows
    g.eta[7 + 3 * g.n] = -800.0;  // sigma underflows to zero
    CHECK(g.refresh(Execution::serial) == 2);
    CHECK(std::isnan(g.log_pdf[3]));
    CHECK(std::isnan(g.log_pdf[7 + g.n]));
    CHECK(std::isfinite(g.log_pdf[4]));
}

TEST_CASE("serial and OpenMP kernels agree bitwise") {
    const int saved = omp_get_max_threads();
    omp_set_num_threads(4);
    Rng rng = make_rng(76);
    GaussianPair a(1000, rng);
    GaussianPair b = a;
    CHECK(a.refresh(Execution::serial) == b.refresh(Execution::parallel));
    CHECK(a.log_pdf == b.log_pdf);
    CHECK(a.u == b.u);
    std::vector<double> ta(a.n), tb(a.n);
    loglik_terms(a.input(), ta.data(), nullptr, Execution::serial);
    loglik_terms(b.input(), tb.data(), nullptr, Execution::parallel);
    CHECK(ta == tb);
    for (std::size_t k = 0; k < 5; ++k) {
        KernelInput ia = a.input(), ib = b.input();
        ia.active = ib.active = k;
        std::vector<double> sa(a.n), wa(a.n), sb(a.n), wb(a.n);
        derivative_terms(ia, sa.data(), wa.data(), Execution::serial);
        derivative_terms(ib, sb.data(), wb.data(), Execution::parallel);
        CHECK(sa == sb);
        CHECK(wa == wb);
    }

    // Mixed margins with randomized discrete residuals, through the workspace.
    const Model m = testmodels::mixed_model(300, rng);
    const ParameterState s = testmodels::random_state(m, rng);
    LikelihoodWorkspace ws(m, Execution::serial), wp(m, Execution::parallel);
    Rng r1 = make_rng(5), r2 = make_rng(5);
    REQUIRE(ws.set_state(s));
    REQUIRE(wp.set_state(s));
    CHECK(ws.observation_log_likelihood(r1) == wp.observation_log_likelihood(r2));
    omp_set_num_threads(saved);
}
