#include <doctest.h>

#include <cmath>
#include <vector>

#include "mvgamlss/copula.hpp"
#include "mvgamlss/random.hpp"
#include "support/oracles.hpp"

using namespace mvgamlss;

namespace {

std::vector<double> random_lambda(std::size_t dim, Rng& rng, double scale = 2.0) {
    std::vector<double> l(num_pairs(dim));
    for (auto& v : l) v = scale * (2.0 * uniform01(rng) - 1.0);
    return l;
}

// Dense reference: Sigma = (L L^T)^-1 by a generic inverse.
Eigen::MatrixXd reference_sigma(const std::vector<double>& lambda, std::size_t dim) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 1; i < dim; ++i)
        for (std::size_t j = 0; j < i; ++j) L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = lambda[i * (i - 1) / 2 + j];
    return (L * L.transpose()).inverse();
}

}  // namespace

TEST_CASE("pair indexing") {
    CHECK(pair_index(1, 0) == 0);
    CHECK(pair_index(2, 0) == 1);
    CHECK(pair_index(2, 1) == 2);
    CHECK(pair_index(4, 3) == 9);
    for (std::size_t m = 0; m < 28; ++m) {
        const auto [i, j] = pair_from_index(m);
        CHECK(pair_index(i, j) == m);
        CHECK(i > j);
    }
    CHECK(dimension_from_pairs(10) == 5);
    CHECK_THROWS_AS(dimension_from_pairs(4), ArgumentError);
}

TEST_CASE("lambda_to_bundle reference cases") {
    const auto id = lambda_to_bundle(std::vector<double>{0.0, 0.0, 0.0}, 3);
    CHECK((id.omega - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(id.log_det_omega == 0.0);

    const auto b = lambda_to_bundle(std::vector<double>{1.0}, 2);
    Eigen::Matrix2d sigma;
    sigma << 2, -1, -1, 1;
    CHECK((b.sigma - sigma).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(b.omega(1, 0) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-14));
    for (double l = -5.0; l <= 5.0; l += 0.125) {
        const auto bl = lambda_to_bundle(std::vector<double>{l}, 2);
        CHECK(std::abs(bl.omega(1, 0) + l / std::sqrt(1.0 + l * l)) < 1e-12);
    }
    CHECK_THROWS_AS(lambda_to_bundle(std::vector<double>{NAN}, 2), ArgumentError);
    CHECK_THROWS_AS(lambda_to_bundle(std::vector<double>{1.0, 2.0}, 2), ArgumentError);
}

TEST_CASE("bundle invariants on random lambda") {
    Rng rng = make_rng(21);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t dim = 2 + static_cast<std::size_t>(rep % 7);
        const auto lambda = random_lambda(dim, rng);
        const auto b = lambda_to_bundle(lambda, dim);
        const Eigen::MatrixXd ref = reference_sigma(lambda, dim);
        CHECK((b.sigma - ref).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
        Eigen::VectorXd d = b.sigma.diagonal().cwiseSqrt().cwiseInverse();
        CHECK((b.omega - d.asDiagonal() * b.sigma * d.asDiagonal()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((b.omega.diagonal().array() - 1.0).abs().maxCoeff() < 1e-12);
        double sum_log = 0.0;
        for (Eigen::Index j = 0; j < b.sigma.rows(); ++j) sum_log += std::log(b.sigma(j, j));
        CHECK(std::abs(b.log_det_omega + sum_log) < 1e-10);
        CHECK(std::abs(b.log_det_omega - std::log(b.omega.determinant())) < 1e-8);
        CHECK((b.omega * b.omega_inverse - Eigen::MatrixXd::Identity(b.omega.rows(), b.omega.cols())).cwiseAbs().maxCoeff() < 1e-8);
        // Sigma^-1 = L L^T returns lambda.
        const Eigen::MatrixXd prec = b.factor * b.factor.transpose();
        for (std::size_t i = 1; i < dim; ++i)
            for (std::size_t j = 0; j < i; ++j)
                CHECK(std::abs(b.factor(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - lambda[pair_index(i, j)]) < 1e-10);
        CHECK(prec.allFinite());
    }
}

TEST_CASE("copula log density") {
    const auto id = lambda_to_bundle(std::vector<double>{0.0}, 2);
    CHECK(copula_log_density(Eigen::Vector2d(0.3, -1.2), id) == 0.0);
    for (double rho : {-0.8, -0.2, 0.5, 0.9}) {
        const double l = -rho / std::sqrt(1.0 - rho * rho);  // inverts rho = -l / sqrt(1 + l^2)
        const auto b = lambda_to_bundle(std::vector<double>{l}, 2);
        CHECK(b.omega(1, 0) == doctest::Approx(rho).epsilon(1e-12));
        CHECK(copula_log_density(Eigen::Vector2d::Zero(), b) == doctest::Approx(-0.5 * std::log(1 - rho * rho)).epsilon(1e-12));
        // The copula density times the product of standard normals is the bivariate normal.
        const Eigen::Vector2d u(0.4, -0.7);
        const double lhs = copula_log_density(u, b) + std::log(oracle::phi(u[0])) + std::log(oracle::phi(u[1]));
        CHECK(lhs == doctest::Approx(oracle::bivariate_normal_log_pdf(u[0], u[1], 0, 0, 1, 1, rho)).epsilon(1e-12));
    }
    // Grid quadrature of the copula density against the product measure.
    const double l = -0.5 / std::sqrt(0.75);
    const auto b = lambda_to_bundle(std::vector<double>{l}, 2);
    const int m = 400;
    const double lim = 9.0, h = 2 * lim / m;
    double total = 0.0;
    for (int a = 0; a <= m; ++a) {
        for (int c = 0; c <= m; ++c) {
            const double wa = (a == 0 || a == m) ? 0.5 : 1.0, wc = (c == 0 || c == m) ? 0.5 : 1.0;
            const Eigen::Vector2d u(-lim + a * h, -lim + c * h);
            total += wa * wc * std::exp(copula_log_density(u, b)) * oracle::phi(u[0]) * oracle::phi(u[1]);
        }
    }
    CHECK(std::abs(total * h * h - 1.0) < 1e-4);
    CHECK_THROWS_AS(copula_log_density(Eigen::Vector3d::Zero(), b), ArgumentError);
}

TEST_CASE("template log density matches the bundle form") {
    Rng rng = make_rng(22);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t dim = 2 + static_cast<std::size_t>(rep % 5);
        const auto lambda = random_lambda(dim, rng);
        std::vector<double> u(dim);
        for (auto& v : u) v = standard_normal(rng);
        const auto b = lambda_to_bundle(lambda, dim);
        const double ref = copula_log_density(Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(dim)), b);
        CHECK(copula_log_density_from_lambda<double>(lambda, u) == doctest::Approx(ref).epsilon(1e-10));
    }
}

TEST_CASE("spearman transform") {
    CHECK(spearman_rho(0.0) == 0.0);
    CHECK(spearman_rho(1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(spearman_rho(0.5) == doctest::Approx(6.0 / M_PI * std::asin(0.25)).epsilon(1e-15));
    CHECK(spearman_rho(0.5) == doctest::Approx(0.482584).epsilon(1e-5));
    for (double w = -1.0; w <= 1.0; w += 0.01) CHECK(spearman_rho(-w) == -spearman_rho(w));
    for (double w = -0.99; w < 0.99; w += 0.01) CHECK(spearman_rho(w + 0.01) > spearman_rho(w));
    CHECK_THROWS_AS(spearman_rho(1.01), ArgumentError);
}

TEST_CASE("gaussianize") {
    Rng rng = make_rng(23);
    const std::vector<Family> fam{Family::gaussian, Family::negbin};
    const std::vector<std::vector<double>> th{{1.5, 2.0}, {2.0, 1.0}};
    const double c2 = cdf<double>(Family::negbin, 2.0, th[1]);
    const double c3 = cdf<double>(Family::negbin, 3.0, th[1]);
    for (int rep = 0; rep < 10000; ++rep) {
        const auto u = gaussianize(std::vector<double>{1.5, 3.0}, fam, th, rng);
        CHECK(u[0] == 0.0);
        CHECK(u[1] >= normal_quantile(c2) - 1e-12);
        CHECK(u[1] <= normal_quantile(c3) + 1e-12);
    }
    // Continuous margins: Phi(u) recovers F(y).
    for (double y : {-3.0, 0.0, 1.0, 4.5}) {
        const auto u = gaussianize(std::vector<double>{y, 0.0}, fam, th, rng);
        CHECK(oracle::Phi(u[0]) == doctest::Approx(cdf<double>(Family::gaussian, y, th[0])).epsilon(1e-10));
    }
    // Point mass (F(y-) = 0, F(y) = 1 up to rounding) gives standard normal draws.
    std::vector<double> draws;
    const std::vector<double> tiny{1e-9, 50.0};
    for (int rep = 0; rep < 5000; ++rep) draws.push_back(gaussianize_discrete<double>(Family::negbin, 0.0, tiny, uniform01(rng)));
    CHECK(oracle::ks_test(draws, oracle::Phi) > 0.01);
    // Clamping keeps extreme tails finite.
    const auto far = gaussianize(std::vector<double>{1e6, 0.0}, fam, th, rng);
    CHECK(std::isfinite(far[0]));
}

TEST_CASE("joint sampling") {
    Rng rng = make_rng(24);
    const std::size_t n = 100000;
    const double rho = 0.7;
    const double l = -rho / std::sqrt(1 - rho * rho);
    const auto b = lambda_to_bundle(std::vector<double>{l}, 2);
    const std::vector<Family> fam{Family::gaussian, Family::gaussian};
    const std::vector<std::vector<double>> th{{1.0, 2.0}, {-1.0, 0.5}};
    const Eigen::MatrixXd y = sample_joint(b, fam, th, n, rng);
    std::vector<double> y1(y.col(0).data(), y.col(0).data() + n), y2(y.col(1).data(), y.col(1).data() + n);
    CHECK(std::abs(oracle::sample_correlation(y1, y2) - rho) < 0.01);

    const auto id = lambda_to_bundle(std::vector<double>{0.0, 0.0, 0.0}, 3);
    const std::vector<Family> fam3{Family::student_t, Family::dagum, Family::gaussian};
    const std::vector<std::vector<double>> th3{{0.0, 1.0, 3.0}, {2.0, 1.0, 0.7}, {0.0, 1.0}};
    const std::size_t m = 10000;
    const Eigen::MatrixXd z = sample_joint(id, fam3, th3, m, rng);
    std::vector<double> p1, p2;
    for (std::size_t i = 0; i < m; ++i) {
        p1.push_back(cdf<double>(Family::student_t, z(static_cast<Eigen::Index>(i), 0), th3[0]));
        p2.push_back(cdf<double>(Family::dagum, z(static_cast<Eigen::Index>(i), 1), th3[1]));
    }
    CHECK(std::abs(oracle::sample_correlation(p1, p2)) < 3.0 / std::sqrt(static_cast<double>(m)));
    for (int j = 0; j < 3; ++j) {
        std::vector<double> col(z.col(j).data(), z.col(j).data() + m);
        const Family f = fam3[static_cast<std::size_t>(j)];
        const auto& t = th3[static_cast<std::size_t>(j)];
        CHECK(oracle::ks_test(col, [&](double v) { return cdf<double>(f, v, t); }) > 0.01);
    }
}
