#pragma once

// Second-order forward-mode scalar along a single direction.
//
// A Dual2 carries f, f' and f'' with respect to one seeded input. The
// likelihood kernels are written once as templates over `double` and
// `Dual2`, so the exact score and Newton weight for a predictor come out
// of the same code path that evaluates the log-likelihood.

#include <cmath>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

namespace mvgamlss {

// Trivially default-constructible like double: `Dual2 x;` is uninitialized,
// `Dual2 x{}` is zero.
struct Dual2 {
    double v;
    double d;
    double dd;

    Dual2() = default;
    constexpr Dual2(double value) : v(value), d(0.0), dd(0.0) {}  // NOLINT: implicit constant lift
    constexpr Dual2(double value, double d1, double d2) : v(value), d(d1), dd(d2) {}

    static constexpr Dual2 variable(double value) { return {value, 1.0, 0.0}; }
    constexpr bool is_constant() const { return d == 0.0 && dd == 0.0; }
};

inline double value_of(double x) { return x; }
inline double value_of(const Dual2& x) { return x.v; }

// Applies a scalar function with known first/second derivative to x.
inline Dual2 chain(const Dual2& x, double f, double f1, double f2) {
    return {f, f1 * x.d, f2 * x.d * x.d + f1 * x.dd};
}

inline Dual2 operator-(const Dual2& a) { return {-a.v, -a.d, -a.dd}; }
inline Dual2 operator+(const Dual2& a, const Dual2& b) { return {a.v + b.v, a.d + b.d, a.dd + b.dd}; }
inline Dual2 operator-(const Dual2& a, const Dual2& b) { return {a.v - b.v, a.d - b.d, a.dd - b.dd}; }
inline Dual2 operator*(const Dual2& a, const Dual2& b) {
    return {a.v * b.v, a.d * b.v + a.v * b.d, a.dd * b.v + 2.0 * a.d * b.d + a.v * b.dd};
}
inline Dual2 operator+(const Dual2& a, double b) { return {a.v + b, a.d, a.dd}; }
inline Dual2 operator+(double a, const Dual2& b) { return {a + b.v, b.d, b.dd}; }
inline Dual2 operator-(const Dual2& a, double b) { return {a.v - b, a.d, a.dd}; }
inline Dual2 operator-(double a, const Dual2& b) { return {a - b.v, -b.d, -b.dd}; }
inline Dual2 operator*(const Dual2& a, double b) { return {a.v * b, a.d * b, a.dd * b}; }
inline Dual2 operator*(double a, const Dual2& b) { return {a * b.v, a * b.d, a * b.dd}; }
inline Dual2 operator/(const Dual2& a, double b) { return {a.v / b, a.d / b, a.dd / b}; }

inline Dual2 reciprocal(const Dual2& x) {
    const double r = 1.0 / x.v;
    return chain(x, r, -r * r, 2.0 * r * r * r);
}
inline Dual2 operator/(const Dual2& a, const Dual2& b) {
    if (b.is_constant()) return a / b.v;
    return a * reciprocal(b);
}
inline Dual2 operator/(double a, const Dual2& b) { return a * reciprocal(b); }

inline Dual2& operator+=(Dual2& a, const Dual2& b) { return a = a + b; }
inline Dual2& operator-=(Dual2& a, const Dual2& b) { return a = a - b; }
inline Dual2& operator*=(Dual2& a, const Dual2& b) { return a = a * b; }
inline Dual2& operator/=(Dual2& a, const Dual2& b) { return a = a / b; }

inline bool operator<(const Dual2& a, const Dual2& b) { return a.v < b.v; }
inline bool operator>(const Dual2& a, const Dual2& b) { return a.v > b.v; }
inline bool operator<=(const Dual2& a, const Dual2& b) { return a.v <= b.v; }
inline bool operator>=(const Dual2& a, const Dual2& b) { return a.v >= b.v; }

inline Dual2 exp(const Dual2& x) {
    const double e = std::exp(x.v);
    return chain(x, e, e, e);
}
inline Dual2 expm1(const Dual2& x) {
    const double e = std::exp(x.v);
    return chain(x, std::expm1(x.v), e, e);
}
inline Dual2 log(const Dual2& x) {
    const double r = 1.0 / x.v;
    return chain(x, std::log(x.v), r, -r * r);
}
inline Dual2 log1p(const Dual2& x) {
    const double r = 1.0 / (1.0 + x.v);
    return chain(x, std::log1p(x.v), r, -r * r);
}
inline Dual2 sqrt(const Dual2& x) {
    const double s = std::sqrt(x.v);
    return chain(x, s, 0.5 / s, -0.25 / (s * x.v));
}
inline Dual2 pow(const Dual2& x, double p) {
    const double f = std::pow(x.v, p);
    return chain(x, f, p * std::pow(x.v, p - 1.0), p * (p - 1.0) * std::pow(x.v, p - 2.0));
}
inline Dual2 square(const Dual2& x) { return x * x; }
inline double square(double x) { return x * x; }
inline Dual2 asin(const Dual2& x) {
    const double q = 1.0 - x.v * x.v;
    const double r = 1.0 / std::sqrt(q);
    return chain(x, std::asin(x.v), r, x.v * r / q);
}
inline Dual2 lgamma(const Dual2& x) {
    if (x.is_constant()) return Dual2(std::lgamma(x.v));
    return chain(x, std::lgamma(x.v), boost::math::digamma(x.v), boost::math::trigamma(x.v));
}
// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline Dual2 softplus(const Dual2& x) {
    const double s = 1.0 / (1.0 + std::exp(-x.v));
    return chain(x, softplus(x.v), s, s * (1.0 - s));
}

inline bool isfinite(const Dual2& x) { return std::isfinite(x.v) && std::isfinite(x.d) && std::isfinite(x.dd); }

}  // namespace mvgamlss
