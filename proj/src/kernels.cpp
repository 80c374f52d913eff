#include "mvgamlss/kernels.hpp"

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "mvgamlss/copula.hpp"

namespace mvgamlss {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kMaxParameters = 3;

template <class T>
struct MarginTerms {
    T log_pdf{};
    T u{};
    double lower = 0.0;
    double upper = 0.0;
    bool valid = true;
};

template <class T>
bool in_domain(Link link, const T& theta) {
    const double v = value_of(theta);
    return std::isfinite(v) && (link == Link::identity || v > 0.0);
}

double discrete_u(double lower, double upper, double zeta) {
    return normal_quantile(clamp_probability(lower + zeta * (upper - lower)));
}

template <class T>
MarginTerms<T> margin_terms(const KernelInput& in, std::size_t i, std::size_t j, const T& active_value) {
    MarginTerms<T> out;
    const std::size_t first = in.margin_offset[j];
    const std::size_t count = in.margin_offset[j + 1] - first;
    std::array<T, kMaxParameters> theta;
    for (std::size_t p = 0; p < count; ++p) {
        const std::size_t k = first + p;
        const T eta = k == in.active ? active_value : T(in.eta[i + k * in.n]);
        theta[p] = inverse_link(in.links[k], eta);
        if (!in_domain(in.links[k], theta[p])) {
            out.valid = false;
            return out;
        }
    }
    const Family family = in.families[j];
    const double y = in.y[i + j * in.n];
    const std::span<const T> th(theta.data(), count);
    out.log_pdf = log_pdf_unchecked(family, y, th);
    if (is_discrete(family)) {
        const T lo = left_limit_cdf_unchecked(family, y, th);
        const T hi = cdf_unchecked(family, y, th);
        out.lower = value_of(lo);
        out.upper = value_of(hi);
        out.u = normal_quantile(clamp_probability(lo + in.zeta[i + j * in.n] * (hi - lo)));
    } else {
        out.u = gaussianize_continuous(family, y, th);
    }
    return out;
}

// Per-thread scratch sized to the model; a fixed-size array of the largest
// dimension would be value-initialized for Dual2 on every observation.
template <class T>
struct Buffers {
    std::vector<T> u;
    std::vector<T> lambda;
};

template <class T>
Buffers<T>& buffers(std::size_t dim) {
    thread_local Buffers<T> b;
    if (b.u.size() < dim) {
        b.u.resize(dim);
        b.lambda.resize(num_pairs(dim));
    }
    return b;
}

template <class T>
T observation(const KernelInput& in, std::size_t i, std::size_t active_margin, const T& active_value,
              const MarginColumns* scratch) {
    auto& buf = buffers<T>(in.dim);
    auto& u = buf.u;
    T total(0.0);
    for (std::size_t j = 0; j < in.dim; ++j) {
        const std::size_t at = i + j * in.n;
        if (j == active_margin) {
            const auto terms = margin_terms(in, i, j, active_value);
            if (scratch) {
                scratch->log_pdf[i] = terms.valid ? value_of(terms.log_pdf) : kNaN;
                scratch->u[i] = terms.valid ? value_of(terms.u) : kNaN;
                scratch->lower[i] = terms.lower;
                scratch->upper[i] = terms.upper;
            }
            if (!terms.valid) return T(kNaN);
            total += terms.log_pdf;
            u[j] = terms.u;
        } else {
            total += T(in.log_pdf[at]);
            u[j] = is_discrete(in.families[j]) ? T(discrete_u(in.lower[at], in.upper[at], in.zeta[at]))
                                               : T(in.u[at]);
        }
    }
    if (in.dim < 2) return total;
    auto& lambda = buf.lambda;
    const std::size_t pairs = num_pairs(in.dim);
    for (std::size_t m = 0; m < pairs; ++m) {
        const std::size_t k = in.copula_offset + m;
        lambda[m] = k == in.active ? active_value : T(in.eta[i + k * in.n]);
    }
    total += copula_log_density_from_lambda(std::span<const T>(lambda.data(), pairs),
                                            std::span<const T>(u.data(), in.dim));
    return total;
}

// Exceptions cannot leave an OpenMP region; special-function failures turn
// into a non-finite contribution instead.
template <class T, class Body>
T guarded(Body&& body) {
    try {
        return body();
    } catch (const std::exception&) {
        return T(kNaN);
    }
}

template <class Body>
void for_each_observation(std::size_t n, Execution exec, Body&& body) {
    const auto count = static_cast<std::ptrdiff_t>(n);
    if (exec == Execution::serial) {
        for (std::ptrdiff_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

}  // namespace

std::size_t margin_of(const KernelInput& in, std::size_t predictor) {
    if (predictor == kNoPredictor || predictor >= in.copula_offset) return kNoPredictor;
    std::size_t j = 0;
    while (in.margin_offset[j + 1] <= predictor) ++j;
    return j;
}

std::size_t refresh_margin(const KernelInput& in, std::size_t j, const MarginColumns& out, Execution exec) {
    std::vector<unsigned char> bad(in.n, 0);
    for_each_observation(in.n, exec, [&](std::size_t i) {
        MarginTerms<double> terms;
        try {
            const double a = in.active == kNoPredictor ? 0.0 : in.active_eta[i];
            terms = margin_terms<double>(in, i, j, a);
        } catch (const std::exception&) {
            terms.valid = false;
        }
        out.log_pdf[i] = terms.valid ? terms.log_pdf : kNaN;
        out.u[i] = terms.valid ? terms.u : kNaN;
        out.lower[i] = terms.lower;
        out.upper[i] = terms.upper;
        bad[i] = terms.valid && std::isfinite(terms.log_pdf) ? 0 : 1;
    });
    std::size_t count = 0;
    for (unsigned char b : bad) count += b;
    return count;
}

void loglik_terms(const KernelInput& in, double* out, const MarginColumns* scratch, Execution exec) {
    const std::size_t active_margin = margin_of(in, in.active);
    const MarginColumns* sink = active_margin == kNoPredictor ? nullptr : scratch;
    for_each_observation(in.n, exec, [&](std::size_t i) {
        const double a = in.active == kNoPredictor ? 0.0 : in.active_eta[i];
        out[i] = guarded<double>([&] { return observation<double>(in, i, active_margin, a, sink); });
    });
}

void derivative_terms(const KernelInput& in, double* score, double* weight, Execution exec) {
    const std::size_t active_margin = margin_of(in, in.active);
    for_each_observation(in.n, exec, [&](std::size_t i) {
        const Dual2 a = Dual2::variable(in.active_eta ? in.active_eta[i] : in.eta[i + in.active * in.n]);
        const Dual2 l = guarded<Dual2>([&] { return observation<Dual2>(in, i, active_margin, a, nullptr); });
        score[i] = l.d;
        weight[i] = -l.dd;
        if (!std::isfinite(l.v)) score[i] = weight[i] = kNaN;
    });
}

}  // namespace mvgamlss
