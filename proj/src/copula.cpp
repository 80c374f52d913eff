#include "mvgamlss/copula.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mvgamlss/errors.hpp"

namespace mvgamlss {

std::pair<std::size_t, std::size_t> pair_from_index(std::size_t m) {
    std::size_t i = 1;
    while (pair_index(i + 1, 0) <= m) ++i;
    return {i, m - pair_index(i, 0)};
}

std::size_t dimension_from_pairs(std::size_t pairs) {
    std::size_t dim = 1;
    while (num_pairs(dim) < pairs) ++dim;
    if (num_pairs(dim) != pairs) {
        throw ArgumentError(std::to_string(pairs) + " is not a triangular number D(D-1)/2");
    }
    return dim;
}

CorrelationBundle lambda_to_bundle(std::span<const double> lambda, std::size_t dim) {
    if (dim < 1) throw ArgumentError("lambda_to_bundle: dimension must be positive");
    if (lambda.size() != num_pairs(dim)) {
        throw ArgumentError("lambda_to_bundle: expected " + std::to_string(num_pairs(dim)) + " entries for D = " +
                            std::to_string(dim) + ", got " + std::to_string(lambda.size()));
    }
    for (double l : lambda) {
        if (!std::isfinite(l)) throw ArgumentError("lambda_to_bundle: non-finite lambda entry");
    }
    const auto d = static_cast<Eigen::Index>(dim);
    CorrelationBundle b;
    b.factor = Eigen::MatrixXd::Identity(d, d);
    for (Eigen::Index i = 1; i < d; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) b.factor(i, j) = lambda[pair_index(i, j)];
    }

    // L^-1 by forward substitution on unit columns; Sigma = L^-T L^-1.
    Eigen::MatrixXd inverse_factor = Eigen::MatrixXd::Identity(d, d);
    b.factor.triangularView<Eigen::UnitLower>().solveInPlace(inverse_factor);
    b.sigma = inverse_factor.transpose() * inverse_factor;

    const Eigen::VectorXd sd = b.sigma.diagonal().cwiseSqrt();
    const Eigen::VectorXd inv_sd = sd.cwiseInverse();
    b.omega = inv_sd.asDiagonal() * b.sigma * inv_sd.asDiagonal();
    b.omega.diagonal().setOnes();
    b.omega_inverse = sd.asDiagonal() * (b.factor * b.factor.transpose()) * sd.asDiagonal();
    b.log_det_omega = -b.sigma.diagonal().array().log().sum();
    return b;
}

double copula_log_density(const Eigen::VectorXd& u, const CorrelationBundle& bundle) {
    if (static_cast<std::size_t>(u.size()) != bundle.dimension()) {
        throw ArgumentError("copula_log_density: u has length " + std::to_string(u.size()) + ", bundle has D = " +
                            std::to_string(bundle.dimension()));
    }
    const double quad = u.dot(bundle.omega_inverse * u) - u.squaredNorm();
    return -0.5 * bundle.log_det_omega - 0.5 * quad;
}

double spearman_rho(double omega) {
    if (!(std::abs(omega) <= 1.0)) {
        throw ArgumentError("spearman_rho: |omega| = " + std::to_string(std::abs(omega)) + " exceeds 1");
    }
    return 6.0 / std::numbers::pi * std::asin(0.5 * omega);
}

Eigen::VectorXd gaussianize(std::span<const double> y, std::span<const Family> families,
                            std::span<const std::vector<double>> thetas, Rng& rng) {
    const std::size_t dim = y.size();
    if (families.size() != dim || thetas.size() != dim) {
        throw ArgumentError("gaussianize: responses, families and parameters differ in length");
    }
    Eigen::VectorXd u(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
        check_theta(families[j], thetas[j]);
        const std::span<const double> theta(thetas[j]);
        if (is_discrete(families[j])) {
            u[static_cast<Eigen::Index>(j)] = gaussianize_discrete(families[j], y[j], theta, uniform01(rng));
        } else {
            u[static_cast<Eigen::Index>(j)] = gaussianize_continuous(families[j], y[j], theta);
        }
    }
    return u;
}

Eigen::VectorXd sample_latent(const CorrelationBundle& bundle, Rng& rng) {
    const auto d = static_cast<Eigen::Index>(bundle.dimension());
    Eigen::VectorXd z(d);
    for (Eigen::Index j = 0; j < d; ++j) z[j] = standard_normal(rng);
    // x = L^-T z has covariance Sigma; rescale to unit variances.
    bundle.factor.transpose().triangularView<Eigen::UnitUpper>().solveInPlace(z);
    return z.cwiseQuotient(bundle.sigma.diagonal().cwiseSqrt());
}

Eigen::VectorXd latent_to_response(const Eigen::VectorXd& u, std::span<const Family> families,
                                   std::span<const std::vector<double>> thetas) {
    Eigen::VectorXd y(u.size());
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        const auto jj = static_cast<std::size_t>(j);
        y[j] = quantile(families[jj], clamp_probability(normal_cdf(u[j])), thetas[jj]);
    }
    return y;
}

Eigen::MatrixXd sample_joint(const CorrelationBundle& bundle, std::span<const Family> families,
                             std::span<const std::vector<double>> thetas, std::size_t n, Rng& rng) {
    const std::size_t dim = bundle.dimension();
    if (families.size() != dim || thetas.size() != dim) {
        throw ArgumentError("sample_joint: margins do not match the copula dimension");
    }
    for (std::size_t j = 0; j < dim; ++j) check_theta(families[j], thetas[j]);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i) {
        out.row(static_cast<Eigen::Index>(i)) = latent_to_response(sample_latent(bundle, rng), families, thetas);
    }
    return out;
}

}  // namespace mvgamlss
