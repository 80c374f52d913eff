#pragma once

// Gaussian copula with the modified-Cholesky parameterization
//
//   Sigma = (L L^T)^-1,  Omega = diag(Sigma)^-1/2 Sigma diag(Sigma)^-1/2,
//
// where L is unit lower triangular with free strict-lower entries lambda,
// stored row-major: (l21, l31, l32, l41, l42, l43, ...).

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mvgamlss/margins.hpp"
#include "mvgamlss/random.hpp"
#include "mvgamlss/special.hpp"

namespace mvgamlss {

inline constexpr std::size_t kMaxDimension = 64;

inline constexpr std::size_t num_pairs(std::size_t dim) { return dim * (dim - 1) / 2; }
// Position of l_ij (0-based, i > j) in the lambda vector.
inline constexpr std::size_t pair_index(std::size_t i, std::size_t j) { return i * (i - 1) / 2 + j; }
// Inverse of pair_index: (i, j) with i > j.
std::pair<std::size_t, std::size_t> pair_from_index(std::size_t m);
// Dimension D with D(D-1)/2 == pairs; throws ArgumentError when none exists.
std::size_t dimension_from_pairs(std::size_t pairs);

struct CorrelationBundle {
    Eigen::MatrixXd factor;         // L, unit lower triangular
    Eigen::MatrixXd sigma;          // (L L^T)^-1
    Eigen::MatrixXd omega;          // correlation matrix
    Eigen::MatrixXd omega_inverse;  // diag(Sigma)^1/2 L L^T diag(Sigma)^1/2
    double log_det_omega = 0.0;     // -sum_j log Sigma_jj

    std::size_t dimension() const { return static_cast<std::size_t>(factor.rows()); }
};

// Builds the bundle by unit-triangular substitution against L. Throws
// ArgumentError for non-finite lambda or a length other than D(D-1)/2.
CorrelationBundle lambda_to_bundle(std::span<const double> lambda, std::size_t dim);

// -1/2 log det Omega - 1/2 u^T (Omega^-1 - I) u.
double copula_log_density(const Eigen::VectorXd& u, const CorrelationBundle& bundle);

// The same quantity straight from lambda. Only diag(Sigma) is needed since
// Omega^-1 = diag(Sigma)^1/2 L L^T diag(Sigma)^1/2. Used by the likelihood
// kernels with T = double or Dual2.
template <class T>
T copula_log_density_from_lambda(std::span<const T> lambda, std::span<const T> u) {
    using std::log;
    using std::sqrt;
    const std::size_t dim = u.size();
    if (dim < 2) return T(0.0);
    std::array<T, kMaxDimension> column;
    std::array<T, kMaxDimension> scaled;
    T half_log_s(0.0);
    for (std::size_t j = 0; j < dim; ++j) {
        // Column j of L^-1: m_j = 1, m_i = -sum_{l=j}^{i-1} L_il m_l.
        column[j] = T(1.0);
        T s(1.0);
        for (std::size_t i = j + 1; i < dim; ++i) {
            T acc = lambda[pair_index(i, j)];
            for (std::size_t l = j + 1; l < i; ++l) acc += lambda[pair_index(i, l)] * column[l];
            column[i] = -acc;
            s += column[i] * column[i];
        }
        half_log_s += 0.5 * log(s);
        scaled[j] = sqrt(s) * u[j];
    }
    // ||L^T v||^2 - ||u||^2 with v = diag(Sigma)^1/2 u.
    T quad(0.0);
    for (std::size_t j = 0; j < dim; ++j) {
        T w = scaled[j];
        for (std::size_t i = j + 1; i < dim; ++i) w += lambda[pair_index(i, j)] * scaled[i];
        quad += w * w - u[j] * u[j];
    }
    return half_log_s - 0.5 * quad;
}

// Spearman's rho of a Gaussian copula pair: (6/pi) asin(omega/2).
double spearman_rho(double omega);

// u_j = Phi^-1(F_j(y_j)) for a continuous margin, with the probability
// clamped to [1e-12, 1 - 1e-12]. Gaussian margins skip the CDF round trip.
template <class T>
T gaussianize_continuous(Family family, double y, std::span<const T> theta) {
    if (family == Family::gaussian) return clamp_probit((y - theta[0]) / theta[1]);
    return normal_quantile(clamp_probability(cdf_unchecked(family, y, theta)));
}

// Randomized quantile residual Phi^-1(a + zeta (b - a)) for a discrete margin,
// a = F(y-), b = F(y).
template <class T>
T gaussianize_discrete(Family family, double y, std::span<const T> theta, double zeta) {
    const T lo = left_limit_cdf_unchecked(family, y, theta);
    const T hi = cdf_unchecked(family, y, theta);
    return normal_quantile(clamp_probability(lo + zeta * (hi - lo)));
}

// Gaussianizes one response vector. Discrete margins consume one uniform
// draw each from rng per call.
Eigen::VectorXd gaussianize(std::span<const double> y, std::span<const Family> families,
                            std::span<const std::vector<double>> thetas, Rng& rng);

// One draw u ~ N(0, Omega), returned on the Gaussian scale.
Eigen::VectorXd sample_latent(const CorrelationBundle& bundle, Rng& rng);

// Maps a latent draw to the response scale: y_j = F_j^-1(Phi(u_j)).
Eigen::VectorXd latent_to_response(const Eigen::VectorXd& u, std::span<const Family> families,
                                   std::span<const std::vector<double>> thetas);

// n joint draws (rows) from the copula model with fixed margins.
Eigen::MatrixXd sample_joint(const CorrelationBundle& bundle, std::span<const Family> families,
                             std::span<const std::vector<double>> thetas, std::size_t n, Rng& rng);

}  // namespace mvgamlss
