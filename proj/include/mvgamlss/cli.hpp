#pragma once

// Command-line front end: JSON model specs, fit / simulate / residuals /
// summarize / study commands and their output files.
//
// Model spec (JSON):
//   {
//     "margins": [
//       {"response": "y1", "family": "gaussian",
//        "parameters": {"mu": ["intercept", "pspline(x)"], "sigma": ["intercept", "linear(z)"]}},
//       {"response": "y2", "family": "negbin"}
//     ],
//     "copula": "constant",            // or "independence", a list of D(D-1)/2
//                                      // term lists, or {"default": [...], "lambda_2_1": [...]}
//     "univariate": false,
//     "prior": {"a": 0.001, "b": 0.001},
//     "chain": {"iterations": 12000, "burnin": 2000, "thin": 10, "seed": 1, "damping": 1.0}
//   }
//
// Parameters left out are intercept-only. A term is either a string
// "kind" / "kind(covariate)" or an object with the keys type, covariate,
// knots, degree, order, constraint, prior ("flat" or "vague"), a, b, fixed,
// adjacency (edge-list file, relative to the spec) and edges.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvgamlss/data.hpp"
#include "mvgamlss/model.hpp"
#include "mvgamlss/sampler.hpp"

namespace mvgamlss {

// Throws ValidationError naming the offending field, e.g.
// "margins[0].family: unknown family 'gausian'".
ModelConfig parse_model_spec(const nlohmann::json& spec, const std::filesystem::path& base_dir = {});
// JSON syntax errors are reported with their line and column.
ModelConfig read_model_spec(const std::filesystem::path& path);
// Fully explicit form of a config (every term as an object, edges inlined).
nlohmann::json model_spec_to_json(const ModelConfig& config);

// Posterior summary row: mean, sd and 2.5 / 50 / 97.5% quantiles.
struct SummaryRow {
    std::string name;
    std::string kind;  // coefficient, tau2, parameter, correlation, spearman
    double mean = 0.0, sd = 0.0, q025 = 0.0, q500 = 0.0, q975 = 0.0;
};
SummaryRow summarize_draws(std::string name, std::string kind, std::vector<double> draws);

// Coefficients, smoothing variances and sample averages over observations
// of every natural parameter, copula correlation and Spearman's rho.
std::vector<SummaryRow> posterior_summary(const Model& model, const PosteriorDraws& draws);

void write_chain_csv(const Model& model, const PosteriorDraws& draws, const std::filesystem::path& path);
PosteriorDraws read_chain_csv(const Model& model, const std::filesystem::path& path);

// A completed fit directory: spec.json, data.csv and chain.csv.
struct FitArtifacts {
    Model model;
    PosteriorDraws draws;
};
FitArtifacts load_fit(const std::filesystem::path& dir);

struct FitOptions {
    std::filesystem::path spec, data, out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> iterations, burnin, thin;
    std::size_t jobs = 1;
};
// Writes chain.csv, diagnostics.json, summary.csv, spec.json and data.csv.
void cmd_fit(const FitOptions& options);

struct SimulateOptions {
    std::string design = "dagum5d";
    std::size_t n = 500;
    std::size_t replications = 1;
    std::uint64_t seed = 1;
    std::filesystem::path out;
};
// Writes data_repNNN.csv and truth_repNNN.json per replication, numbered from 001.
void cmd_simulate(const SimulateOptions& options);

struct ResidualOptions {
    std::filesystem::path fit;
    std::optional<std::filesystem::path> data;  // default: the training data
    std::optional<std::filesystem::path> out;   // default: the fit directory
    std::uint64_t seed = 1;
};

// Normalized quantile residuals Phi^-1(F_j(y_j)) at the posterior mean of
// the coefficients, randomized within [F(y-), F(y)] for discrete margins.
Eigen::MatrixXd quantile_residuals(const Model& model, const ParameterState& state, const Dataset& data, Rng& rng);
// Writes residuals.csv, qq.csv and qq_<response>.svg.
void cmd_residuals(const ResidualOptions& options);

// Functionals: "mean", "variance" and "parameters" per margin, "spearman"
// and "correlation" per pair.
struct SummarizeOptions {
    std::filesystem::path fit;
    std::optional<std::filesystem::path> spec;  // JSON with the fields below
    std::string covariate;
    std::size_t points = 41;
    std::optional<double> lower, upper;  // default: covariate range
    std::vector<std::string> functionals = {"mean", "variance", "spearman"};
    std::map<std::string, double> reference;
    std::optional<std::filesystem::path> out;
    bool svg = true;
};

struct SliceRow {
    std::string functional;
    std::string target;  // response name or "rho_i_j"
    double value = 0.0;  // covariate
    std::optional<double> mean, lower, upper;  // empty where undefined
    double defined = 1.0;  // fraction of draws with a defined value
};
std::vector<SliceRow> slice_functionals(const Model& model, const PosteriorDraws& draws, const SummarizeOptions& options);
// Writes slices.csv and one SVG per functional and target.
void cmd_summarize(const SummarizeOptions& options);

struct StudyOptions {
    std::string design = "dagum5d";
    std::size_t n = 500;
    std::size_t replications = 25;
    std::uint64_t seed = 1;
    std::size_t iterations = 12000, burnin = 2000, thin = 10;
    std::size_t jobs = 1;
    std::string scale = "spearman";
    std::filesystem::path out;
};
void cmd_study(const StudyOptions& options);

// Entry point of the executable; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace mvgamlss
