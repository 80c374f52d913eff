#include "mvgamlss/sampler.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "mvgamlss/copula.hpp"
#include "mvgamlss/errors.hpp"

namespace mvgamlss {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double block_log_prior(const BlockGeometry& g, const Eigen::VectorXd& v, double tau2) {
    if (!g.penalized) return 0.0;
    return -0.5 * v.dot(g.penalty * v) / tau2;
}

Eigen::VectorXd standard_normal_vector(Eigen::Index size, Rng& rng) {
    Eigen::VectorXd z(size);
    for (Eigen::Index l = 0; l < size; ++l) z[l] = standard_normal(rng);
    return z;
}

}  // namespace

void ChainSettings::validate() const {
    if (iterations == 0) throw ArgumentError("chain: iterations must be positive");
    if (burnin >= iterations) throw ArgumentError("chain: burn-in must be smaller than the number of iterations");
    if (thin < 1) throw ArgumentError("chain: thinning must be at least 1");
    if (!(damping > 0.0 && damping <= 1.0)) throw ArgumentError("chain: damping must lie in (0, 1]");
}

ChainSettings chain_settings(const ChainConfig& config) {
    ChainSettings s;
    s.iterations = config.iterations;
    s.burnin = config.burnin;
    s.thin = config.thin;
    s.seed = config.seed;
    s.damping = config.damping;
    return s;
}

ParameterState PosteriorDraws::state(const Model& model, std::size_t draw) const {
    std::vector<double> tau(model.blocks().size(), 1.0);
    for (std::size_t c = 0; c < tau2_blocks.size(); ++c) {
        tau[tau2_blocks[c]] = tau2(static_cast<Eigen::Index>(draw), static_cast<Eigen::Index>(c));
    }
    return ParameterState::from_flat(model, beta.row(static_cast<Eigen::Index>(draw)).transpose(), tau);
}

double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::LLT<Eigen::MatrixXd>& llt) {
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::VectorXd r = L.transpose() * (x - mean);
    const double log_det = L.diagonal().array().log().sum();
    return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) + log_det - 0.5 * r.squaredNorm();
}

Proposal iwls_propose(const BlockGeometry& geometry, const Model& model, const ParameterState& state,
                      std::size_t block, LikelihoodWorkspace& workspace, Rng& rng, double damping) {
    const auto& blk = model.blocks()[block];
    const double tau2 = state.tau2[block];
    const Eigen::VectorXd v = geometry.basis.transpose() * state.beta[block];
    const Eigen::VectorXd eta = workspace.eta().col(static_cast<Eigen::Index>(blk.predictor));

    Proposal p;
    const Derivatives current = workspace.derivatives(blk.predictor, rng);
    const NewtonSystem forward = newton_system(geometry, v, tau2, current, damping);
    const Eigen::VectorXd z = standard_normal_vector(v.size(), rng);
    if (forward.ok) {
        p.v = forward.mean + forward.llt.matrixU().solve(z);
        p.log_forward = gaussian_log_density(p.v, forward.mean, forward.llt);
    } else {
        const double scale = geometry.penalized ? 0.1 * std::sqrt(tau2) : 0.01;
        p.v = v + scale * z;
        p.fallback = true;
    }
    p.beta = geometry.basis * p.v;
    p.eta = eta + geometry.design * (p.v - v);
    if (p.fallback) return p;

    const Derivatives at_candidate = workspace.candidate_derivatives(blk.predictor, p.eta, rng);
    const NewtonSystem reverse = newton_system(geometry, p.v, tau2, at_candidate, damping);
    p.log_reverse = reverse.ok ? gaussian_log_density(v, reverse.mean, reverse.llt) : kNegInf;
    return p;
}

InverseGammaParameters tau_conditional(const Eigen::VectorXd& beta, const Eigen::MatrixXd& penalty, int rank,
                                       double a, double b) {
    double quad = beta.dot(penalty * beta);
    const double scale = penalty.cwiseAbs().maxCoeff() * beta.squaredNorm();
    if (quad < -1e-10 * std::max(1.0, scale)) {
        throw NumericalError("tau_conditional: negative quadratic form " + std::to_string(quad));
    }
    quad = std::max(0.0, quad);
    return {0.5 * rank + a, 0.5 * quad + b};
}

double gibbs_tau(const Eigen::VectorXd& beta, const Eigen::MatrixXd& penalty, int rank, double a, double b,
                 Rng& rng) {
    const auto ig = tau_conditional(beta, penalty, rank, a, b);
    std::gamma_distribution<double> gamma(ig.shape, 1.0 / ig.rate);
    return 1.0 / gamma(rng);
}

Sampler::Sampler(const Model& model, ChainSettings settings)
    : model_(model), settings_(std::move(settings)), workspace_(model, settings_.execution) {
    settings_.validate();
    geometry_.resize(model.blocks().size());
    position_.assign(model.blocks().size(), 0);
    for (std::size_t b : model.sweep_order()) {
        geometry_[b] = block_geometry(model, b);
        position_[b] = stats_.size();
        stats_.push_back(BlockStats{model.blocks()[b].name});
    }
}

void Sampler::initialize(const ParameterState& state) {
    state_ = state;
    if (!workspace_.set_state(state_)) throw NumericalError("sampler: starting state has invalid parameters");
    Rng rng = make_rng(derive_seed(settings_.seed, 2));
    loglik_ = workspace_.log_likelihood(rng);
    if (!std::isfinite(loglik_)) throw NumericalError("sampler: non-finite log-likelihood at the starting state");
}

bool Sampler::mh_step(std::size_t block, Rng& rng) {
    auto& stats = stats_for(block);
    const auto& g = geometry_[block];
    ++stats.proposed;
    const Proposal p = iwls_propose(g, model_, state_, block, workspace_, rng, settings_.damping);
    if (p.fallback) ++stats.fallback;
    const std::size_t k = model_.blocks()[block].predictor;
    const double candidate = workspace_.candidate_log_likelihood(k, p.eta, rng);
    const double current = model_.has_discrete_margin() ? workspace_.log_likelihood(rng) : loglik_;
    const double log_u = std::log(uniform01(rng));
    if (model_.has_discrete_margin()) loglik_ = current;
    if (!std::isfinite(candidate)) {
        ++stats.nonfinite;
        return false;
    }
    const double tau2 = state_.tau2[block];
    const Eigen::VectorXd v = g.basis.transpose() * state_.beta[block];
    const double log_alpha = candidate - current + block_log_prior(g, p.v, tau2) - block_log_prior(g, v, tau2) +
                             p.log_reverse - p.log_forward;
    if (!(log_u < log_alpha)) return false;
    workspace_.commit();
    state_.beta[block] = p.beta;
    loglik_ = candidate;
    ++stats.accepted;
    return true;
}

void Sampler::gibbs_step(std::size_t block, Rng& rng) {
    const auto& term = model_.term(model_.blocks()[block]);
    state_.tau2[block] = gibbs_tau(state_.beta[block], term.penalty, term.penalty_rank, term.a, term.b, rng);
}

void Sampler::sweep(Rng& rng) {
    for (std::size_t b : model_.sweep_order()) mh_step(b, rng);
    for (std::size_t b : model_.penalized_blocks()) gibbs_step(b, rng);
}

PosteriorDraws Sampler::run() {
    PosteriorDraws draws;
    ParameterState start = initial_state(model_);
    if (settings_.run_map) {
        MapSettings ms = settings_.map;
        ms.seed = derive_seed(settings_.seed, 1);
        ms.execution = settings_.execution;
        try {
            MapResult map = map_estimate(model_, start, ms);
            draws.map_converged = map.converged;
            draws.map_iterations = map.iterations;
            draws.map_log_posterior = map.log_posterior;
            draws.warnings = map.warnings;
            start = map.state;
        } catch (const std::exception& e) {
            draws.warnings.push_back(std::string("MAP failed (") + e.what() + "); starting from zero coefficients");
        }
    }
    draws.map_state = start;
    initialize(start);

    Rng rng = make_rng(settings_.seed);
    const std::size_t kept = (settings_.iterations - settings_.burnin + settings_.thin - 1) / settings_.thin;
    draws.coefficient_names = model_.coefficient_names();
    draws.tau2_blocks = model_.penalized_blocks();
    for (std::size_t b : draws.tau2_blocks) draws.tau2_names.push_back("tau2." + model_.blocks()[b].name);
    const auto rows = static_cast<Eigen::Index>(kept);
    draws.beta.resize(rows, model_.num_coefficients());
    draws.tau2.resize(rows, static_cast<Eigen::Index>(draws.tau2_blocks.size()));
    draws.loglik.resize(rows);
    const auto pairs = static_cast<Eigen::Index>(num_pairs(model_.dimension()));
    if (settings_.store_spearman) draws.spearman.resize(rows, static_cast<Eigen::Index>(model_.n()) * pairs);
    draws.trace.reserve(settings_.iterations);

    Eigen::Index row = 0;
    for (std::size_t it = 0; it < settings_.iterations; ++it) {
        sweep(rng);
        draws.trace.push_back(loglik_);
        if (it < settings_.burnin || (it - settings_.burnin) % settings_.thin != 0) continue;
        draws.beta.row(row) = state_.flatten(model_).transpose();
        for (std::size_t c = 0; c < draws.tau2_blocks.size(); ++c) {
            draws.tau2(row, static_cast<Eigen::Index>(c)) = state_.tau2[draws.tau2_blocks[c]];
        }
        draws.loglik[row] = loglik_;
        if (settings_.store_spearman) {
            const Eigen::MatrixXd rho = observation_spearman(model_, workspace_.eta());
            draws.spearman.row(row) = Eigen::Map<const Eigen::RowVectorXd>(rho.data(), rho.size());
        }
        ++row;
    }
    draws.blocks = stats_;
    return draws;
}

PosteriorDraws run_chain(const Model& model, const ChainSettings& settings) {
    Sampler sampler(model, settings);
    return sampler.run();
}

Eigen::MatrixXd observation_spearman(const Model& model, const Eigen::MatrixXd& eta) {
    const std::size_t dim = model.dimension();
    const std::size_t pairs = num_pairs(dim);
    Eigen::MatrixXd out(eta.rows(), static_cast<Eigen::Index>(pairs));
    std::vector<double> lambda(pairs);
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        for (std::size_t m = 0; m < pairs; ++m) lambda[m] = eta(i, static_cast<Eigen::Index>(model.copula_predictor(m)));
        const CorrelationBundle bundle = lambda_to_bundle(lambda, dim);
        for (std::size_t m = 0; m < pairs; ++m) {
            const auto [a, b] = pair_from_index(m);
            out(i, static_cast<Eigen::Index>(m)) =
                spearman_rho(bundle.omega(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
        }
    }
    return out;
}

}  // namespace mvgamlss
