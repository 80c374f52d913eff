#pragma once

// Simulation designs and replication metrics for checking the sampler's
// recovery of covariate-dependent dependence structures.
//
//   dagum5d             D = 5 Dagum margins with constant parameters drawn per
//                       data set (log a, log b, log p ~ U(-1, 2)), x ~ U(-0.9, 0.9),
//                       l21 = x^2, l31 = -x, l32 = x^3 - x, all other l = 0.
//   bivariate_gaussian  D = 2 Gaussian margins, x ~ U(-1, 1), with the
//                       stand-in effects of BivariateGaussianEffects.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mvgamlss/data.hpp"
#include "mvgamlss/model.hpp"
#include "mvgamlss/random.hpp"
#include "mvgamlss/sampler.hpp"

namespace mvgamlss {

enum class DesignTag { bivariate_gaussian, dagum5d };

std::string_view design_name(DesignTag tag);
DesignTag parse_design(std::string_view name);

struct SimDesign {
    DesignTag tag = DesignTag::dagum5d;
    std::size_t n = 500;
    std::size_t replications = 25;
    std::uint64_t seed = 1;

    void validate() const;
};

// Generating truth of one data set: per-margin natural parameters and the
// copula parameters as functions of the covariate x.
struct Truth {
    DesignTag design = DesignTag::dagum5d;
    std::vector<Family> families;
    std::vector<std::string> responses;
    double x_lower = 0.0;
    double x_upper = 0.0;
    std::function<std::vector<std::vector<double>>(double)> thetas;
    std::function<std::vector<double>(double)> lambda;
    std::vector<std::string> lambda_formulas;  // human-readable, per pair
    std::vector<std::vector<double>> margin_constants;  // dagum5d: drawn (a, b, p)

    std::size_t dimension() const { return families.size(); }
    // Copula correlation and Spearman's rho of every pair at x.
    std::vector<double> correlation(double x) const;
    std::vector<double> spearman(double x) const;
    // Design, margins, lambda formulas and the curves on `grid`.
    nlohmann::json to_json(std::span<const double> grid) const;
};

struct SimDataset {
    Dataset data;  // columns x, y1, ..., yD
    Truth truth;
};

SimDataset gen_dagum5d(std::size_t n, Rng& rng);

struct BivariateGaussianEffects {
    std::function<double(double)> mu1 = [](double x) { return 1.0 + 0.5 * x; };
    std::function<double(double)> mu2 = [](double x) { return std::sin(3.14159265358979323846 * x); };
    std::function<double(double)> log_sigma1 = [](double x) { return 0.3 * x; };
    std::function<double(double)> log_sigma2 = [](double x) { return -0.2 + 0.25 * x * x; };
    std::function<double(double)> lambda21 = [](double x) { return x; };
};

SimDataset gen_bivariate_gaussian(std::size_t n, Rng& rng, const BivariateGaussianEffects& effects = {});

// Replication r of a design, generated from derive_seed(design.seed, r).
SimDataset generate(const SimDesign& design, std::size_t replication);

// Model fitted to a design: P-splines in x (with intercepts) for every
// predictor of the bivariate design and for every lambda of dagum5d, whose
// marginal parameters are intercept-only.
ModelConfig design_model(DesignTag tag);

inline constexpr std::size_t kGridPoints = 41;
std::vector<double> evaluation_grid(const Truth& truth, std::size_t points = kGridPoints);

enum class CurveScale { spearman, correlation };

struct PairCurve {
    std::size_t pair = 0;
    std::string name;  // "rho_2_1"
    std::vector<double> truth, mean, lower, upper;
    bool zero_truth = false;
    double mse = 0.0;
    double coverage = 0.0;
    double width = 0.0;
    double median_abs_error = 0.0;
};

struct ReplicationReport {
    std::vector<double> grid;
    std::vector<PairCurve> pairs;
    double mean_coverage = 0.0;
    double mean_width = 0.0;
};

// Curves of the dependence measure on `grid` (x varied, other covariates at
// reference values) from the draws: posterior mean, 2.5% / 97.5% quantiles,
// MSE against the truth, pointwise coverage and band width.
ReplicationReport evaluate_replication(const Model& model, const PosteriorDraws& draws, const Truth& truth,
                                       std::span<const double> grid, CurveScale scale = CurveScale::spearman);

// Lower-level form on precomputed draws x grid matrices, one per pair.
ReplicationReport evaluate_curves(const std::vector<Eigen::MatrixXd>& curve_draws,
                                  const std::vector<std::vector<double>>& truth, std::span<const double> grid);

struct StudySettings {
    SimDesign design;
    ChainSettings chain;
    std::size_t jobs = 1;
    CurveScale scale = CurveScale::spearman;
};

struct PairSummary {
    std::string name;
    bool zero_truth = false;
    double mse_median = 0.0, mse_lower = 0.0, mse_upper = 0.0;
    double coverage = 0.0;
    double width = 0.0;
    double median_abs_error = 0.0;       // median over replications
    double median_abs_posterior_mean = 0.0;  // median over replications and grid of |mean|
};

struct StudyResult {
    std::vector<ReplicationReport> reports;
    std::vector<std::vector<double>> acceptance;  // per replication, per block
    std::vector<PairSummary> summary;
    double coverage = 0.0;        // all pairs
    double coverage_zero = 0.0;   // true-zero pairs
    double coverage_nonzero = 0.0;
    double width = 0.0;
    double seconds = 0.0;
};

// Runs every replication (in parallel up to `jobs`) and aggregates.
StudyResult run_study(const StudySettings& settings);
std::vector<PairSummary> summarize_study(const std::vector<ReplicationReport>& reports);

// Writes curves.csv (one row per replication, pair and grid point),
// summary.csv and study.json into `dir`.
void write_study(const StudyResult& result, const StudySettings& settings, const std::filesystem::path& dir);

}  // namespace mvgamlss
