#pragma once

// Parametric marginal families.
//
// Parameterizations (natural scale):
//   gaussian   (mu, sigma)            N(mu, sigma^2)
//   student_t  (mu, sigma, nu)        location-scale t with nu degrees of freedom
//   dagum      (a, b, p)              F(y) = (1 + (y/b)^-a)^-p, y > 0
//   negbin     (mu, size)             mean mu, variance mu + mu^2 / size
//
// Densities, CDFs and left limits are templates over double and Dual2 so
// the likelihood kernels can differentiate through them.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "mvgamlss/dual.hpp"
#include "mvgamlss/errors.hpp"
#include "mvgamlss/special.hpp"

namespace mvgamlss {

enum class Family { gaussian, student_t, dagum, negbin };
enum class Link { identity, log };
enum class ParameterRole { location, scale, shape };

struct ParameterDescriptor {
    std::string_view name;
    Link link;
    ParameterRole role;
};

std::span<const ParameterDescriptor> parameters(Family family);
inline std::size_t num_parameters(Family family) { return parameters(family).size(); }
bool is_discrete(Family family);
std::string_view family_name(Family family);
// Accepts "gaussian", "student_t", "dagum", "negbin".
Family parse_family(std::string_view name);

template <class T>
T inverse_link(Link link, const T& eta) {
    using std::exp;
    return link == Link::identity ? eta : exp(eta);
}
double apply_link(Link link, double theta);

// Throws DomainError when theta has the wrong length or leaves the domain.
void check_theta(Family family, std::span<const double> theta);
bool theta_in_domain(Family family, std::span<const double> theta);

// Student-t CDF of the standardized value z. The Dual2 overload obtains the
// derivatives in nu by quadrature of the density's nu-derivatives.
double student_t_cdf(double z, double nu);
Dual2 student_t_cdf(const Dual2& z, const Dual2& nu);

// P(Y <= y) for integer y >= 0.
double negbin_cdf(double y, double mu, double size);
Dual2 negbin_cdf(double y, const Dual2& mu, const Dual2& size);

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class T>
T gaussian_log_pdf(double y, const T& mu, const T& sigma) {
    using std::log;
    const T z = (y - mu) / sigma;
    return -0.5 * z * z - log(sigma) - kLogSqrt2Pi;
}

template <class T>
T student_t_log_pdf(double y, const T& mu, const T& sigma, const T& nu) {
    using std::lgamma;
    using std::log;
    using std::log1p;
    const T z = (y - mu) / sigma;
    return lgamma(0.5 * (nu + 1.0)) - lgamma(0.5 * nu) - 0.5 * log(nu * std::numbers::pi) - log(sigma) -
           0.5 * (nu + 1.0) * log1p(z * z / nu);
}

template <class T>
T dagum_log_pdf(double y, const T& a, const T& b, const T& p) {
    using std::log;
    if (!(y > 0.0)) return T(kNegInf);
    const T t = a * (std::log(y) - log(b));  // a log(y/b)
    return log(a) + log(p) - std::log(y) + p * t - (p + 1.0) * softplus(t);
}

template <class T>
T dagum_cdf(double y, const T& a, const T& b, const T& p) {
    using std::exp;
    using std::log;
    if (!(y > 0.0)) return T(0.0);
    const T t = a * (std::log(y) - log(b));
    return exp(-p * softplus(-t));
}

template <class T>
T negbin_log_pmf(double y, const T& mu, const T& size) {
    using std::lgamma;
    using std::log1p;
    if (!(y >= 0.0) || y != std::floor(y)) return T(kNegInf);
    return lgamma(y + size) - lgamma(size) - std::lgamma(y + 1.0) - size * log1p(mu / size) -
           y * log1p(size / mu);
}

}  // namespace detail

template <class T>
T log_pdf_unchecked(Family family, double y, std::span<const T> theta) {
    switch (family) {
    case Family::gaussian: return detail::gaussian_log_pdf(y, theta[0], theta[1]);
    case Family::student_t: return detail::student_t_log_pdf(y, theta[0], theta[1], theta[2]);
    case Family::dagum: return detail::dagum_log_pdf(y, theta[0], theta[1], theta[2]);
    case Family::negbin: return detail::negbin_log_pmf(y, theta[0], theta[1]);
    }
    return T(detail::kNegInf);
}

template <class T>
T cdf_unchecked(Family family, double y, std::span<const T> theta) {
    switch (family) {
    case Family::gaussian: return normal_cdf((y - theta[0]) / theta[1]);
    case Family::student_t: return student_t_cdf((y - theta[0]) / theta[1], theta[2]);
    case Family::dagum: return detail::dagum_cdf(y, theta[0], theta[1], theta[2]);
    case Family::negbin:
        if (y < 0.0) return T(0.0);
        return negbin_cdf(std::floor(y), theta[0], theta[1]);
    }
    return T(0.0);
}

// P(Y < y) for discrete families.
template <class T>
T left_limit_cdf_unchecked(Family family, double y, std::span<const T> theta) {
    const double below = std::ceil(y) - 1.0;
    if (below < 0.0) return T(0.0);
    return cdf_unchecked(family, below, theta);
}

// Log-density (log-mass for discrete families). Observations outside the
// support give -inf.
template <class T>
T log_pdf(Family family, double y, std::span<const T> theta) {
    if constexpr (std::is_same_v<T, double>) {
        check_theta(family, theta);
    }
    return log_pdf_unchecked(family, y, theta);
}

template <class T>
T cdf(Family family, double y, std::span<const T> theta) {
    if constexpr (std::is_same_v<T, double>) {
        check_theta(family, theta);
    }
    return cdf_unchecked(family, y, theta);
}

template <class T>
T left_limit_cdf(Family family, double y, std::span<const T> theta) {
    if (!is_discrete(family)) {
        throw ContractError("left_limit_cdf: family '" + std::string(family_name(family)) +
                            "' is continuous; use cdf");
    }
    if constexpr (std::is_same_v<T, double>) {
        check_theta(family, theta);
    }
    return left_limit_cdf_unchecked(family, y, theta);
}

// Continuous families: the exact inverse. Discrete families: the smallest
// support point y with F(y) >= prob.
double quantile(Family family, double prob, std::span<const double> theta);

// Moments; nullopt where the moment does not exist (e.g. t variance with nu <= 2).
std::optional<double> mean(Family family, std::span<const double> theta);
std::optional<double> variance(Family family, std::span<const double> theta);

}  // namespace mvgamlss
