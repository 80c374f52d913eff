#pragma once

// Joint copula log-likelihood, exact per-predictor derivatives, log-priors
// and the MAP starting point for the sampler.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvgamlss/kernels.hpp"
#include "mvgamlss/model.hpp"
#include "mvgamlss/random.hpp"

namespace mvgamlss {

struct Derivatives {
    Eigen::VectorXd score;   // d ell / d eta_k per observation
    Eigen::VectorXd weight;  // -d^2 ell / d eta_k^2 per observation (not floored)
    bool finite = true;
};

// Likelihood state for one chain: the predictor matrix, cached marginal
// terms and the randomization draws of the discrete margins.
//
// Discrete margins get fresh draws at every evaluation unless the draws are
// frozen (MAP, finite-difference checks). A derivative call uses one set of
// draws for all of its observations.
class LikelihoodWorkspace {
public:
    explicit LikelihoodWorkspace(const Model& model, Execution exec = Execution::serial);

    const Model& model() const { return *model_; }
    Execution execution() const { return exec_; }

    // Recomputes eta and all marginal terms. Returns false when some
    // observation has parameters outside their domain.
    bool set_state(const ParameterState& state);
    const Eigen::MatrixXd& eta() const { return eta_; }

    // Draws once and reuses those draws until thaw_zeta().
    void freeze_zeta(Rng& rng);
    void thaw_zeta() { frozen_ = false; }
    const Eigen::MatrixXd& zeta() const { return zeta_; }

    double log_likelihood(Rng& rng);
    Eigen::VectorXd observation_log_likelihood(Rng& rng);
    Derivatives derivatives(std::size_t predictor, Rng& rng);

    // The same with column `predictor` of eta replaced by eta_k. The last
    // candidate_log_likelihood call can be adopted with commit().
    double candidate_log_likelihood(std::size_t predictor, const Eigen::VectorXd& eta_k, Rng& rng);
    Derivatives candidate_derivatives(std::size_t predictor, const Eigen::VectorXd& eta_k, Rng& rng);
    void commit();

private:
    KernelInput input(std::size_t active, const double* active_eta) const;
    void prepare_zeta(Rng& rng);
    double reduce(const Eigen::VectorXd& terms) const;
    Derivatives derivatives_at(std::size_t predictor, const double* eta_k, Rng& rng);

    const Model* model_;
    Execution exec_;
    std::vector<Link> links_;
    std::vector<std::size_t> margin_offsets_;
    std::vector<std::size_t> discrete_;
    Eigen::MatrixXd eta_;
    Eigen::MatrixXd log_pdf_, u_, lower_, upper_, zeta_;
    bool frozen_ = false;

    Eigen::VectorXd terms_;
    Eigen::VectorXd pending_eta_;
    std::size_t pending_ = kNoPredictor;
    Eigen::VectorXd scratch_log_pdf_, scratch_u_, scratch_lower_, scratch_upper_;
};

double joint_log_likelihood(const Model& model, const ParameterState& state, Rng& rng);
Derivatives score_and_weights(const Model& model, const ParameterState& state, std::size_t predictor, Rng& rng);

// log IG(x; a, b) = a log b - lgamma(a) - (a + 1) log x - b / x.
double inverse_gamma_log_density(double x, double a, double b);

// Sum over blocks of -rk/2 log tau2 - beta^T K beta / (2 tau2) plus the
// inverse-gamma log-priors of the smoothing variances of penalized blocks.
double log_prior(const Model& model, const ParameterState& state);
double log_posterior(const Model& model, const ParameterState& state, Rng& rng);

// A block in null-space coordinates beta = B v, so that the constraint
// A beta = 0 holds for every v.
struct BlockGeometry {
    Eigen::MatrixXd basis;    // B (L x q)
    Eigen::MatrixXd design;   // Z B (n x q)
    Eigen::MatrixXd penalty;  // B^T K B (q x q)
    bool penalized = false;
};
BlockGeometry block_geometry(const Model& model, std::size_t block);

inline constexpr double kWeightFloor = 1e-6;

// Newton/IWLS system of one block at coordinates v:
//   P = Z^T W Z + K / tau2,  g = Z^T nu - K v / tau2,  mean = v + damping P^-1 g,
// with weights floored at kWeightFloor. The mean equals P^-1 Z^T W (z - eta_-k)
// with working response z = eta + nu / W, i.e. the partial-residual form.
struct NewtonSystem {
    Eigen::MatrixXd precision;
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::VectorXd gradient;
    Eigen::VectorXd mean;
    bool ok = false;
};
NewtonSystem newton_system(const BlockGeometry& geometry, const Eigen::VectorXd& v, double tau2,
                           const Derivatives& derivatives, double damping = 1.0);

struct MapSettings {
    std::size_t max_iterations = 2000;
    double tolerance = 1e-4;     // per-coefficient gradient tolerance, times n
    std::size_t tau_interval = 10;
    std::size_t max_halvings = 30;
    bool extrapolate = true;     // accelerated block coordinate ascent
    // Also converged when the log-posterior gain over one tau interval is
    // below this, times n (flat ridges in weakly identified margins).
    double objective_tolerance = 1e-5;
    std::uint64_t seed = 1;
    Execution execution = Execution::serial;
};

struct MapResult {
    ParameterState state;
    bool converged = false;
    std::string criterion;  // "gradient", "objective" or empty
    std::size_t iterations = 0;
    double log_posterior = 0.0;
    double gradient_norm = 0.0;  // largest |g| / n over all blocks at the last sweep
    std::vector<double> trace;   // log posterior after each sweep
    std::vector<std::string> warnings;
};

// Block-wise Newton ascent with backtracking (no step may decrease the log
// posterior); smoothing variances move to their conditional modes
// b* / (a* + 1) every tau_interval sweeps. Randomization draws are frozen
// from the seed, so the result is deterministic.
// BIC = -2 loglik + edf log n at a state (normally the MAP). edf counts the
// null-space dimension of every unpenalized block plus
// tr((Z^T W Z + K / tau2)^-1 Z^T W Z) of every penalized block, with the
// floored working weights at the state. Fixed blocks count zero.
struct InformationCriterion {
    double log_likelihood = 0.0;
    double edf = 0.0;
    double bic = 0.0;
    std::vector<double> block_edf;  // per block, 0 for fixed blocks
};
InformationCriterion information_criterion(const Model& model, const ParameterState& state, std::uint64_t seed);
inline constexpr const char* kBicConvention =
    "BIC = -2 loglik(MAP) + edf log(n); edf = sum of unpenalized block sizes (after constraints) + "
    "sum over penalized blocks of tr((Z'WZ + K/tau2)^-1 Z'WZ) at the MAP working weights";

MapResult map_estimate(const Model& model, const MapSettings& settings = {});
MapResult map_estimate(const Model& model, const ParameterState& start, const MapSettings& settings);

}  // namespace mvgamlss
