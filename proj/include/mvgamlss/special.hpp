#pragma once

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "mvgamlss/dual.hpp"

namespace mvgamlss {

inline constexpr double kProbabilityClamp = 1e-12;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline Dual2 normal_cdf(const Dual2& z) {
    const double phi = normal_pdf(z.v);
    return chain(z, normal_cdf(z.v), phi, -z.v * phi);
}

inline double normal_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }
inline Dual2 normal_quantile(const Dual2& p) {
    const double u = normal_quantile(p.v);
    const double r = 1.0 / normal_pdf(u);
    return chain(p, u, r, u * r * r);
}

// Keeps probabilities inside [eps, 1 - eps] so the probit stays finite.
// Clamped values are constants (zero derivative).
inline double clamp_probability(double p) {
    if (!(p >= kProbabilityClamp)) return kProbabilityClamp;
    if (p > 1.0 - kProbabilityClamp) return 1.0 - kProbabilityClamp;
    return p;
}
inline Dual2 clamp_probability(const Dual2& p) {
    const double c = clamp_probability(p.v);
    return c == p.v ? p : Dual2(c);
}

// Probit bounds implied by the clamp.
inline double probit_bound() {
    static const double bound = -normal_quantile(kProbabilityClamp);
    return bound;
}

template <class T>
T clamp_probit(const T& u) {
    const double b = probit_bound();
    if (value_of(u) > b) return T(b);
    if (value_of(u) < -b) return T(-b);
    return u;
}

}  // namespace mvgamlss
