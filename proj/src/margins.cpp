#include "mvgamlss/margins.hpp"

#include <array>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

namespace mvgamlss {

namespace {

constexpr std::array<ParameterDescriptor, 2> kGaussian{{
    {"mu", Link::identity, ParameterRole::location},
    {"sigma", Link::log, ParameterRole::scale},
}};
constexpr std::array<ParameterDescriptor, 3> kStudentT{{
    {"mu", Link::identity, ParameterRole::location},
    {"sigma", Link::log, ParameterRole::scale},
    {"nu", Link::log, ParameterRole::shape},
}};
constexpr std::array<ParameterDescriptor, 3> kDagum{{
    {"a", Link::log, ParameterRole::shape},
    {"b", Link::log, ParameterRole::scale},
    {"p", Link::log, ParameterRole::shape},
}};
constexpr std::array<ParameterDescriptor, 2> kNegBin{{
    {"mu", Link::log, ParameterRole::location},
    {"size", Link::log, ParameterRole::shape},
}};

boost::math::quadrature::exp_sinh<double>& tail_integrator() {
    // The interval overload is non-const and refines its abscissa tables lazily.
    thread_local boost::math::quadrature::exp_sinh<double> integrator;
    return integrator;
}

}  // namespace

std::span<const ParameterDescriptor> parameters(Family family) {
    switch (family) {
    case Family::gaussian: return kGaussian;
    case Family::student_t: return kStudentT;
    case Family::dagum: return kDagum;
    case Family::negbin: return kNegBin;
    }
    return {};
}

bool is_discrete(Family family) { return family == Family::negbin; }

std::string_view family_name(Family family) {
    switch (family) {
    case Family::gaussian: return "gaussian";
    case Family::student_t: return "student_t";
    case Family::dagum: return "dagum";
    case Family::negbin: return "negbin";
    }
    return "unknown";
}

Family parse_family(std::string_view name) {
    for (Family f : {Family::gaussian, Family::student_t, Family::dagum, Family::negbin}) {
        if (family_name(f) == name) return f;
    }
    throw ArgumentError("unknown family '" + std::string(name) +
                        "' (expected gaussian, student_t, dagum or negbin)");
}

double apply_link(Link link, double theta) { return link == Link::identity ? theta : std::log(theta); }

bool theta_in_domain(Family family, std::span<const double> theta) {
    const auto params = parameters(family);
    if (theta.size() != params.size()) return false;
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!std::isfinite(theta[k])) return false;
        if (params[k].link == Link::log && !(theta[k] > 0.0)) return false;
    }
    return true;
}

void check_theta(Family family, std::span<const double> theta) {
    const auto params = parameters(family);
    if (theta.size() != params.size()) {
        throw ArgumentError(std::string(family_name(family)) + ": expected " + std::to_string(params.size()) +
                            " parameters, got " + std::to_string(theta.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        const bool ok = std::isfinite(theta[k]) && (params[k].link != Link::log || theta[k] > 0.0);
        if (!ok) {
            throw DomainError(std::string(family_name(family)) + ": parameter '" + std::string(params[k].name) +
                              "' = " + std::to_string(theta[k]) + " outside its domain");
        }
    }
}

double student_t_cdf(double z, double nu) {
    if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
    return boost::math::cdf(boost::math::students_t_distribution<double>(nu), z);
}

Dual2 student_t_cdf(const Dual2& z, const Dual2& nu) {
    const double n = nu.v;
    const double zv = z.v;
    const double F = student_t_cdf(zv, n);

    // Standardized log density as a function of nu, seeded in nu.
    const Dual2 nu_var = Dual2::variable(n);
    const Dual2 log_norm = lgamma(0.5 * (nu_var + 1.0)) - lgamma(0.5 * nu_var) - 0.5 * log(nu_var * std::numbers::pi);
    auto log_density = [&](double s) { return log_norm - 0.5 * (nu_var + 1.0) * log1p(s * s / nu_var); };

    const Dual2 lf = log_density(zv);
    const double f = std::exp(lf.v);
    const double f_z = -f * (n + 1.0) * zv / (n + zv * zv);

    Dual2 out{F, f * z.d, f_z * z.d * z.d + f * z.dd};
    if (nu.is_constant()) return out;

    // dF/dnu = -sign(z) * int_{|z|}^inf df/dnu(s) ds, using that df/dnu is even
    // in s and integrates to zero over the real line.
    const double a = std::abs(zv);
    constexpr double tol = 1e-11;
    auto& quad = tail_integrator();
    const double i1 = quad.integrate(
        [&](double s) {
            const Dual2 l = log_density(s);
            return std::exp(l.v) * l.d;
        },
        a, std::numeric_limits<double>::infinity(), tol);
    const double i2 = quad.integrate(
        [&](double s) {
            const Dual2 l = log_density(s);
            return std::exp(l.v) * (l.d * l.d + l.dd);
        },
        a, std::numeric_limits<double>::infinity(), tol);
    const double sign = zv < 0.0 ? 1.0 : -1.0;
    const double F_nu = sign * i1;
    const double F_nunu = sign * i2;
    const double F_znu = f * lf.d;

    out.d += F_nu * nu.d;
    out.dd += 2.0 * F_znu * z.d * nu.d + F_nunu * nu.d * nu.d + F_nu * nu.dd;
    return out;
}

double negbin_cdf(double y, double mu, double size) {
    if (y < 0.0) return 0.0;
    return boost::math::ibeta(size, std::floor(y) + 1.0, size / (size + mu));
}

Dual2 negbin_cdf(double y, const Dual2& mu, const Dual2& size) {
    if (y < 0.0) return Dual2(0.0);
    if (mu.is_constant() && size.is_constant()) return Dual2(negbin_cdf(y, mu.v, size.v));
    // Log-space sum of the pmf recursion p(k+1) = p(k) (k + size)/(k + 1) * mu/(mu + size).
    const auto top = static_cast<std::size_t>(std::floor(y));
    std::vector<Dual2> terms(top + 1);
    const Dual2 log_ratio = -log1p(size / mu);
    terms[0] = -size * log1p(mu / size);
    double peak = terms[0].v;
    for (std::size_t k = 0; k < top; ++k) {
        terms[k + 1] = terms[k] + log((static_cast<double>(k) + size) / static_cast<double>(k + 1)) + log_ratio;
        peak = std::max(peak, terms[k + 1].v);
    }
    Dual2 total(0.0);
    for (const auto& t : terms) total += exp(t - peak);
    return total * std::exp(peak);
}

double quantile(Family family, double prob, std::span<const double> theta) {
    if (!(prob > 0.0 && prob < 1.0)) {
        throw ArgumentError("quantile: probability " + std::to_string(prob) + " outside (0, 1)");
    }
    check_theta(family, theta);
    switch (family) {
    case Family::gaussian: return theta[0] + theta[1] * normal_quantile(prob);
    case Family::student_t: {
        const boost::math::students_t_distribution<double> t(theta[2]);
        return theta[0] + theta[1] * boost::math::quantile(t, prob);
    }
    case Family::dagum: {
        // y = b (prob^(-1/p) - 1)^(-1/a)
        const double inner = std::expm1(-std::log(prob) / theta[2]);
        return theta[1] * std::pow(inner, -1.0 / theta[0]);
    }
    case Family::negbin: {
        const double mu = theta[0];
        const double size = theta[1];
        // Walk the pmf recursion for a starting point, then settle against cdf().
        double k = 0.0;
        double log_pk = -size * std::log1p(mu / size);
        const double log_ratio = -std::log1p(size / mu);
        double acc = std::exp(log_pk);
        while (acc < prob && k < 1e9) {
            log_pk += std::log((k + size) / (k + 1.0)) + log_ratio;
            k += 1.0;
            acc += std::exp(log_pk);
        }
        while (k > 0.0 && negbin_cdf(k - 1.0, mu, size) >= prob) k -= 1.0;
        while (negbin_cdf(k, mu, size) < prob) k += 1.0;
        return k;
    }
    }
    return 0.0;
}

std::optional<double> mean(Family family, std::span<const double> theta) {
    check_theta(family, theta);
    switch (family) {
    case Family::gaussian: return theta[0];
    case Family::student_t:
        if (theta[2] <= 1.0) return std::nullopt;
        return theta[0];
    case Family::dagum: {
        const double a = theta[0], b = theta[1], p = theta[2];
        if (a <= 1.0) return std::nullopt;
        return b * std::exp(std::lgamma(p + 1.0 / a) + std::lgamma(1.0 - 1.0 / a) - std::lgamma(p));
    }
    case Family::negbin: return theta[0];
    }
    return std::nullopt;
}

std::optional<double> variance(Family family, std::span<const double> theta) {
    check_theta(family, theta);
    switch (family) {
    case Family::gaussian: return theta[1] * theta[1];
    case Family::student_t:
        if (theta[2] <= 2.0) return std::nullopt;
        return theta[1] * theta[1] * theta[2] / (theta[2] - 2.0);
    case Family::dagum: {
        const double a = theta[0], b = theta[1], p = theta[2];
        if (a <= 2.0) return std::nullopt;
        const double m1 = std::exp(std::lgamma(p + 1.0 / a) + std::lgamma(1.0 - 1.0 / a) - std::lgamma(p));
        const double m2 = std::exp(std::lgamma(p + 2.0 / a) + std::lgamma(1.0 - 2.0 / a) - std::lgamma(p));
        return b * b * (m2 - m1 * m1);
    }
    case Family::negbin: return theta[0] + theta[0] * theta[0] / theta[1];
    }
    return std::nullopt;
}

}  // namespace mvgamlss
