#include "mvgamlss/likelihood.hpp"

#include <algorithm>
#include <cmath>

#include "mvgamlss/errors.hpp"

namespace mvgamlss {

LikelihoodWorkspace::LikelihoodWorkspace(const Model& model, Execution exec) : model_(&model), exec_(exec) {
    const auto n = static_cast<Eigen::Index>(model.n());
    const auto d = static_cast<Eigen::Index>(model.dimension());
    for (std::size_t k = 0; k < model.predictors().size(); ++k) links_.push_back(model.link(k));
    for (std::size_t j = 0; j <= model.dimension(); ++j) margin_offsets_.push_back(model.predictor_offset(j));
    for (std::size_t j = 0; j < model.dimension(); ++j) {
        if (is_discrete(model.families()[j])) discrete_.push_back(j);
    }
    eta_ = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(model.predictors().size()));
    log_pdf_ = u_ = lower_ = upper_ = zeta_ = Eigen::MatrixXd::Zero(n, d);
    terms_.resize(n);
    scratch_log_pdf_.resize(n);
    scratch_u_.resize(n);
    scratch_lower_.resize(n);
    scratch_upper_.resize(n);
}

KernelInput LikelihoodWorkspace::input(std::size_t active, const double* active_eta) const {
    KernelInput in;
    in.n = model_->n();
    in.dim = model_->dimension();
    in.y = model_->response().data();
    in.families = model_->families().data();
    in.margin_offset = margin_offsets_.data();
    in.copula_offset = model_->copula_offset();
    in.links = links_.data();
    in.eta = eta_.data();
    in.log_pdf = log_pdf_.data();
    in.u = u_.data();
    in.lower = lower_.data();
    in.upper = upper_.data();
    in.zeta = zeta_.data();
    in.active = active;
    in.active_eta = active_eta;
    return in;
}

bool LikelihoodWorkspace::set_state(const ParameterState& state) {
    eta_ = predictor_matrix(*model_, state);
    pending_ = kNoPredictor;
    const KernelInput in = input(kNoPredictor, nullptr);
    std::size_t bad = 0;
    for (std::size_t j = 0; j < model_->dimension(); ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        MarginColumns out{log_pdf_.col(c).data(), u_.col(c).data(), lower_.col(c).data(), upper_.col(c).data()};
        bad += refresh_margin(in, j, out, exec_);
    }
    return bad == 0;
}

void LikelihoodWorkspace::prepare_zeta(Rng& rng) {
    if (frozen_) return;
    for (std::size_t j : discrete_) {
        auto col = zeta_.col(static_cast<Eigen::Index>(j));
        for (Eigen::Index i = 0; i < col.size(); ++i) col[i] = uniform01(rng);
    }
}

void LikelihoodWorkspace::freeze_zeta(Rng& rng) {
    frozen_ = false;
    prepare_zeta(rng);
    frozen_ = true;
}

double LikelihoodWorkspace::reduce(const Eigen::VectorXd& terms) const {
    double total = 0.0;
    for (Eigen::Index i = 0; i < terms.size(); ++i) total += terms[i];
    return total;
}

Eigen::VectorXd LikelihoodWorkspace::observation_log_likelihood(Rng& rng) {
    prepare_zeta(rng);
    Eigen::VectorXd out(static_cast<Eigen::Index>(model_->n()));
    loglik_terms(input(kNoPredictor, nullptr), out.data(), nullptr, exec_);
    return out;
}

double LikelihoodWorkspace::log_likelihood(Rng& rng) {
    prepare_zeta(rng);
    loglik_terms(input(kNoPredictor, nullptr), terms_.data(), nullptr, exec_);
    return reduce(terms_);
}

double LikelihoodWorkspace::candidate_log_likelihood(std::size_t predictor, const Eigen::VectorXd& eta_k, Rng& rng) {
    if (predictor >= links_.size()) throw ArgumentError("candidate_log_likelihood: predictor index out of range");
    if (eta_k.size() != eta_.rows()) throw ArgumentError("candidate_log_likelihood: eta length mismatch");
    prepare_zeta(rng);
    pending_ = predictor;
    pending_eta_ = eta_k;
    MarginColumns scratch{scratch_log_pdf_.data(), scratch_u_.data(), scratch_lower_.data(), scratch_upper_.data()};
    loglik_terms(input(predictor, pending_eta_.data()), terms_.data(), &scratch, exec_);
    return reduce(terms_);
}

void LikelihoodWorkspace::commit() {
    if (pending_ == kNoPredictor) throw ContractError("commit: no candidate evaluated");
    const KernelInput in = input(pending_, nullptr);
    const std::size_t j = margin_of(in, pending_);
    eta_.col(static_cast<Eigen::Index>(pending_)) = pending_eta_;
    if (j != kNoPredictor) {
        const auto c = static_cast<Eigen::Index>(j);
        log_pdf_.col(c) = scratch_log_pdf_;
        u_.col(c) = scratch_u_;
        lower_.col(c) = scratch_lower_;
        upper_.col(c) = scratch_upper_;
    }
    pending_ = kNoPredictor;
}

Derivatives LikelihoodWorkspace::derivatives_at(std::size_t predictor, const double* eta_k, Rng& rng) {
    if (predictor >= links_.size()) throw ArgumentError("derivatives: predictor index out of range");
    prepare_zeta(rng);
    Derivatives out;
    const auto n = static_cast<Eigen::Index>(model_->n());
    out.score.resize(n);
    out.weight.resize(n);
    derivative_terms(input(predictor, eta_k), out.score.data(), out.weight.data(), exec_);
    out.finite = out.score.allFinite() && out.weight.allFinite();
    return out;
}

Derivatives LikelihoodWorkspace::derivatives(std::size_t predictor, Rng& rng) {
    return derivatives_at(predictor, nullptr, rng);
}

Derivatives LikelihoodWorkspace::candidate_derivatives(std::size_t predictor, const Eigen::VectorXd& eta_k, Rng& rng) {
    if (eta_k.size() != eta_.rows()) throw ArgumentError("candidate_derivatives: eta length mismatch");
    return derivatives_at(predictor, eta_k.data(), rng);
}

double joint_log_likelihood(const Model& model, const ParameterState& state, Rng& rng) {
    LikelihoodWorkspace ws(model);
    ws.set_state(state);
    return ws.log_likelihood(rng);
}

Derivatives score_and_weights(const Model& model, const ParameterState& state, std::size_t predictor, Rng& rng) {
    LikelihoodWorkspace ws(model);
    ws.set_state(state);
    return ws.derivatives(predictor, rng);
}

double inverse_gamma_log_density(double x, double a, double b) {
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

double log_prior(const Model& model, const ParameterState& state) {
    double total = 0.0;
    for (std::size_t b = 0; b < model.blocks().size(); ++b) {
        const auto& term = model.term(model.blocks()[b]);
        if (!term.penalized() || term.fixed) continue;
        const double tau2 = state.tau2[b];
        if (!(tau2 > 0.0)) throw DomainError("log_prior: smoothing variance must be positive");
        const double quad = state.beta[b].dot(term.penalty * state.beta[b]);
        total += -0.5 * term.penalty_rank * std::log(tau2) - quad / (2.0 * tau2) +
                 inverse_gamma_log_density(tau2, term.a, term.b);
    }
    return total;
}

double log_posterior(const Model& model, const ParameterState& state, Rng& rng) {
    return joint_log_likelihood(model, state, rng) + log_prior(model, state);
}

BlockGeometry block_geometry(const Model& model, std::size_t block) {
    const auto& term = model.term(model.blocks()[block]);
    BlockGeometry g;
    g.basis = term.null_basis;
    g.design = term.design * g.basis;
    g.penalty = g.basis.transpose() * term.penalty * g.basis;
    g.penalized = term.penalized();
    return g;
}

NewtonSystem newton_system(const BlockGeometry& geometry, const Eigen::VectorXd& v, double tau2,
                           const Derivatives& derivatives, double damping) {
    NewtonSystem sys;
    if (!derivatives.finite) return sys;
    const Eigen::VectorXd w = derivatives.weight.cwiseMax(kWeightFloor);
    const Eigen::MatrixXd& Z = geometry.design;
    sys.precision = Z.transpose() * w.asDiagonal() * Z;
    sys.gradient = Z.transpose() * derivatives.score;
    if (geometry.penalized) {
        sys.precision += geometry.penalty / tau2;
        sys.gradient -= geometry.penalty * v / tau2;
    }
    sys.llt.compute(sys.precision);
    if (sys.llt.info() != Eigen::Success || !sys.precision.allFinite()) return sys;
    sys.mean = v + damping * sys.llt.solve(sys.gradient);
    sys.ok = sys.mean.allFinite();
    return sys;
}

namespace {

double block_log_prior(const BlockGeometry& g, const Eigen::VectorXd& v, double tau2) {
    if (!g.penalized) return 0.0;
    return -0.5 * v.dot(g.penalty * v) / tau2;
}

// Conditional modes of the smoothing variances; returns the largest relative change.
double update_tau_modes(const Model& model, ParameterState& state) {
    double change = 0.0;
    for (std::size_t b : model.penalized_blocks()) {
        const auto& term = model.term(model.blocks()[b]);
        const double quad = std::max(0.0, state.beta[b].dot(term.penalty * state.beta[b]));
        const double shape = 0.5 * term.penalty_rank + term.a;
        const double rate = 0.5 * quad + term.b;
        const double mode = rate / (shape + 1.0);
        change = std::max(change, std::abs(mode - state.tau2[b]) / state.tau2[b]);
        state.tau2[b] = mode;
    }
    return change;
}

}  // namespace

InformationCriterion information_criterion(const Model& model, const ParameterState& state, std::uint64_t seed) {
    InformationCriterion ic;
    LikelihoodWorkspace ws(model);
    Rng rng = make_rng(seed);
    ws.freeze_zeta(rng);
    if (!ws.set_state(state)) throw NumericalError("information_criterion: state has invalid parameters");
    ic.log_likelihood = ws.log_likelihood(rng);
    ic.block_edf.assign(model.blocks().size(), 0.0);
    for (std::size_t b : model.sweep_order()) {
        const BlockGeometry g = block_geometry(model, b);
        if (!g.penalized) {
            ic.block_edf[b] = static_cast<double>(g.design.cols());
            continue;
        }
        const Derivatives der = ws.derivatives(model.blocks()[b].predictor, rng);
        if (!der.finite) throw NumericalError("information_criterion: non-finite weights in block " + model.blocks()[b].name);
        const Eigen::VectorXd w = der.weight.cwiseMax(kWeightFloor);
        const Eigen::MatrixXd fisher = g.design.transpose() * w.asDiagonal() * g.design;
        const Eigen::MatrixXd precision = fisher + g.penalty / state.tau2[b];
        ic.block_edf[b] = precision.ldlt().solve(fisher).trace();
    }
    for (double e : ic.block_edf) ic.edf += e;
    ic.bic = -2.0 * ic.log_likelihood + ic.edf * std::log(static_cast<double>(model.n()));
    return ic;
}

MapResult map_estimate(const Model& model, const MapSettings& settings) {
    return map_estimate(model, initial_state(model), settings);
}

MapResult map_estimate(const Model& model, const ParameterState& start, const MapSettings& settings) {
    MapResult result;
    result.state = start;
    auto& state = result.state;
    LikelihoodWorkspace ws(model, settings.execution);
    Rng rng = make_rng(settings.seed);
    ws.freeze_zeta(rng);
    if (!ws.set_state(state)) throw NumericalError("map_estimate: starting state has invalid parameters");

    std::vector<BlockGeometry> geometry(model.blocks().size());
    for (std::size_t b : model.sweep_order()) geometry[b] = block_geometry(model, b);

    const double n = static_cast<double>(model.n());
    double ll = ws.log_likelihood(rng);
    if (!std::isfinite(ll)) throw NumericalError("map_estimate: non-finite log-likelihood at the starting state");
    bool warned_derivatives = false;

    for (std::size_t it = 1; it <= settings.max_iterations; ++it) {
        const ParameterState previous = state;
        double max_gradient = 0.0;
        for (std::size_t b : model.sweep_order()) {
            const auto& blk = model.blocks()[b];
            const auto& g = geometry[b];
            const auto k = static_cast<Eigen::Index>(blk.predictor);
            const Eigen::VectorXd v = g.basis.transpose() * state.beta[b];
            const Derivatives der = ws.derivatives(blk.predictor, rng);
            if (!der.finite) {
                if (!warned_derivatives) result.warnings.push_back("non-finite derivatives in block " + blk.name);
                warned_derivatives = true;
                continue;
            }
            const NewtonSystem sys = newton_system(g, v, state.tau2[b], der);
            max_gradient = std::max(max_gradient, sys.gradient.cwiseAbs().maxCoeff() / n);
            Eigen::VectorXd step;
            if (sys.ok) {
                step = sys.mean - v;
            } else {
                const double scale = std::max(1.0, sys.precision.diagonal().cwiseAbs().maxCoeff());
                step = sys.gradient / scale;
            }
            const double objective = ll + block_log_prior(g, v, state.tau2[b]);
            double t = 1.0;
            for (std::size_t h = 0; h <= settings.max_halvings; ++h, t *= 0.5) {
                const Eigen::VectorXd v_new = v + t * step;
                const Eigen::VectorXd eta_new = ws.eta().col(k) + g.design * (t * step);
                const double ll_new = ws.candidate_log_likelihood(blk.predictor, eta_new, rng);
                if (std::isfinite(ll_new) && ll_new + block_log_prior(g, v_new, state.tau2[b]) >= objective) {
                    ws.commit();
                    state.beta[b] = g.basis * v_new;
                    ll = ll_new;
                    break;
                }
            }
        }
        // Extrapolate along the sweep direction to cut zigzag between correlated blocks.
        if (settings.extrapolate) {
            double best = ll + log_prior(model, state);
            ParameterState accepted = state;
            double accepted_ll = ll;
            for (double alpha = 1.0; alpha <= 64.0; alpha *= 2.0) {
                ParameterState trial = state;
                for (std::size_t b : model.sweep_order())
                    trial.beta[b] += alpha * (state.beta[b] - previous.beta[b]);
                if (!ws.set_state(trial)) break;
                const double trial_ll = ws.log_likelihood(rng);
                const double trial_lp = trial_ll + log_prior(model, trial);
                if (!std::isfinite(trial_lp) || trial_lp <= best) break;
                best = trial_lp;
                accepted = std::move(trial);
                accepted_ll = trial_ll;
            }
            state = std::move(accepted);
            ll = accepted_ll;
            ws.set_state(state);
        }
        result.iterations = it;
        result.gradient_norm = max_gradient;
        const bool small_gradient = max_gradient <= settings.tolerance;
        double tau_change = 0.0;
        if (small_gradient || it % settings.tau_interval == 0) tau_change = update_tau_modes(model, state);
        result.trace.push_back(ll + log_prior(model, state));
        if (small_gradient && tau_change < 1e-3) {
            result.converged = true;
            result.criterion = "gradient";
            break;
        }
        const std::size_t window = std::max<std::size_t>(settings.tau_interval, 1);
        if (it % window == 0 && it >= 2 * window && tau_change < 1e-3) {
            const double gain = result.trace.back() - result.trace[result.trace.size() - 1 - window];
            if (gain < settings.objective_tolerance * n) {
                result.converged = true;
                result.criterion = "objective";
                break;
            }
        }
    }
    result.log_posterior = ll + log_prior(model, state);
    if (!result.converged) {
        result.warnings.push_back("MAP did not converge in " + std::to_string(settings.max_iterations) +
                                  " iterations (largest gradient/n " + std::to_string(result.gradient_norm) + ")");
    }
    return result;
}

}  // namespace mvgamlss
