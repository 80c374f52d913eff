#pragma once

// MCMC for the copula regression: one IWLS Metropolis-Hastings update per
// coefficient block followed by inverse-gamma Gibbs updates of the smoothing
// variances, started at the MAP.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvgamlss/likelihood.hpp"
#include "mvgamlss/model.hpp"
#include "mvgamlss/random.hpp"

namespace mvgamlss {

struct ChainSettings {
    std::size_t iterations = 12000;  // including burn-in
    std::size_t burnin = 2000;
    std::size_t thin = 10;
    std::uint64_t seed = 1;
    double damping = 1.0;      // step factor on the IWLS proposal mean
    bool run_map = true;
    MapSettings map;           // seed is derived from the chain seed
    bool store_spearman = false;  // per-observation Spearman rho of every pair
    Execution execution = Execution::serial;

    void validate() const;
};

ChainSettings chain_settings(const ChainConfig& config);

struct BlockStats {
    std::string name;
    std::size_t proposed = 0;
    std::size_t accepted = 0;
    std::size_t fallback = 0;   // random-walk proposals after a failed factorization
    std::size_t nonfinite = 0;  // candidates rejected for a non-finite likelihood

    double acceptance_rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

struct PosteriorDraws {
    std::vector<std::string> coefficient_names;
    std::vector<std::size_t> tau2_blocks;  // penalized blocks, one tau2 column each
    std::vector<std::string> tau2_names;
    Eigen::MatrixXd beta;      // draws x coefficients
    Eigen::MatrixXd tau2;      // draws x penalized blocks
    Eigen::VectorXd loglik;    // at the stored draws
    std::vector<double> trace;  // log-likelihood after every iteration
    Eigen::MatrixXd spearman;  // draws x (n * pairs), pair-major, when requested
    std::vector<BlockStats> blocks;  // in sweep order
    bool map_converged = false;
    std::size_t map_iterations = 0;
    ParameterState map_state;
    double map_log_posterior = 0.0;
    std::vector<std::string> warnings;

    std::size_t size() const { return static_cast<std::size_t>(beta.rows()); }
    ParameterState state(const Model& model, std::size_t draw) const;
};

struct Proposal {
    Eigen::VectorXd v;      // null-space coordinates of the candidate
    Eigen::VectorXd beta;   // B v
    Eigen::VectorXd eta;    // candidate predictor column
    double log_forward = 0.0;  // log q(candidate | current)
    double log_reverse = 0.0;  // log q(current | candidate)
    bool fallback = false;
};

// Log density of N(mean, P^-1) at x given the Cholesky factor of P.
double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::LLT<Eigen::MatrixXd>& llt);

// IWLS proposal for one block: beta* = B v*, v* ~ N(mean, P^-1) in the
// null-space coordinates of the block constraint. The reverse density is
// built from the score and weights at the candidate.
Proposal iwls_propose(const BlockGeometry& geometry, const Model& model, const ParameterState& state,
                      std::size_t block, LikelihoodWorkspace& workspace, Rng& rng, double damping = 1.0);

struct InverseGammaParameters {
    double shape = 0.0;
    double rate = 0.0;
};
// Full conditional IG(rk(K)/2 + a, beta^T K beta / 2 + b). Throws
// NumericalError when beta^T K beta is negative beyond rounding.
InverseGammaParameters tau_conditional(const Eigen::VectorXd& beta, const Eigen::MatrixXd& penalty, int rank,
                                       double a, double b);
double gibbs_tau(const Eigen::VectorXd& beta, const Eigen::MatrixXd& penalty, int rank, double a, double b,
                 Rng& rng);

class Sampler {
public:
    Sampler(const Model& model, ChainSettings settings);

    // Uses `state` as the current state (no MAP).
    void initialize(const ParameterState& state);
    const ParameterState& state() const { return state_; }
    double current_log_likelihood() const { return loglik_; }

    // One Metropolis-Hastings update of a block; returns the accept flag.
    bool mh_step(std::size_t block, Rng& rng);
    void gibbs_step(std::size_t block, Rng& rng);
    void sweep(Rng& rng);

    const std::vector<BlockStats>& stats() const { return stats_; }
    BlockStats& stats_for(std::size_t block) { return stats_[position_[block]]; }

    // MAP (unless disabled), then iterations sweeps with storage.
    PosteriorDraws run();

private:
    const Model& model_;
    ChainSettings settings_;
    LikelihoodWorkspace workspace_;
    std::vector<BlockGeometry> geometry_;
    std::vector<std::size_t> position_;
    std::vector<BlockStats> stats_;
    ParameterState state_;
    double loglik_ = 0.0;
};

PosteriorDraws run_chain(const Model& model, const ChainSettings& settings);

// Spearman's rho of every copula pair per observation (n x pairs) from a
// predictor matrix.
Eigen::MatrixXd observation_spearman(const Model& model, const Eigen::MatrixXd& eta);

}  // namespace mvgamlss
