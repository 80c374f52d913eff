#pragma once

// Per-observation log-likelihood and derivative kernels.
//
// Each observation's contribution is independent given the predictor matrix,
// the cached marginal terms and the randomization draws, so every kernel has
// a serial reference loop and an OpenMP loop sharing the same body. Outputs
// are written per observation and reduced by the caller in index order, which
// keeps results identical across execution modes.

#include <cstddef>
#include <limits>

#include "mvgamlss/margins.hpp"

namespace mvgamlss {

enum class Execution { serial, parallel };

inline constexpr std::size_t kNoPredictor = std::numeric_limits<std::size_t>::max();

struct KernelInput {
    std::size_t n = 0;
    std::size_t dim = 0;
    const double* y = nullptr;                   // n x D, column major
    const Family* families = nullptr;            // D
    const std::size_t* margin_offset = nullptr;  // D + 1: first predictor of each margin
    std::size_t copula_offset = 0;
    const Link* links = nullptr;                 // per predictor
    const double* eta = nullptr;                 // n x K, column major

    // Cached marginal terms (n x D). u holds continuous margins, lower/upper
    // hold F(y-) and F(y) for discrete margins.
    const double* log_pdf = nullptr;
    const double* u = nullptr;
    const double* lower = nullptr;
    const double* upper = nullptr;
    const double* zeta = nullptr;  // n x D uniforms, read for discrete margins

    // Optional replacement of one predictor column.
    std::size_t active = kNoPredictor;
    const double* active_eta = nullptr;
};

// Columns (length n) receiving the recomputed marginal terms of one margin.
struct MarginColumns {
    double* log_pdf = nullptr;
    double* u = nullptr;
    double* lower = nullptr;
    double* upper = nullptr;
};

// Margin owning `predictor`, or kNoPredictor for copula predictors.
std::size_t margin_of(const KernelInput& in, std::size_t predictor);

// Marginal terms of margin j at the input's predictor values (honouring the
// active replacement). Returns the number of observations with invalid
// parameters; their entries are NaN.
std::size_t refresh_margin(const KernelInput& in, std::size_t j, const MarginColumns& out, Execution exec);

// ell_i for every observation. When the active predictor is marginal and
// `scratch` is given, the recomputed terms of its margin are written there.
void loglik_terms(const KernelInput& in, double* out, const MarginColumns* scratch, Execution exec);

// d ell_i / d eta_active and -d^2 ell_i / d eta_active^2.
void derivative_terms(const KernelInput& in, double* score, double* weight, Execution exec);

}  // namespace mvgamlss
