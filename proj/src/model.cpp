#include "mvgamlss/model.hpp"

#include <algorithm>

#include "mvgamlss/copula.hpp"
#include "mvgamlss/errors.hpp"

namespace mvgamlss {

PredictorConfig intercept_only() {
    PredictorConfig p;
    p.terms.push_back(TermConfig{});
    return p;
}

namespace {

PredictorSpec build_predictor(const PredictorConfig& config, const Dataset& data, Link link, const std::string& where) {
    if (config.terms.empty()) throw ValidationError(where + ": predictor has no terms");
    const auto intercepts = std::count_if(config.terms.begin(), config.terms.end(),
                                          [](const TermConfig& t) { return t.kind == TermKind::intercept; });
    if (intercepts > 1) throw ValidationError(where + ": at most one intercept term is allowed");
    PredictorSpec spec;
    spec.link = link;
    for (std::size_t s = 0; s < config.terms.size(); ++s) {
        try {
            spec.terms.push_back(make_term(config.terms[s], data, intercepts > 0));
        } catch (const std::exception& e) {
            throw ValidationError(where + ".terms[" + std::to_string(s) + "]: " + e.what());
        }
    }
    return spec;
}

int role_rank(ParameterRole role) {
    switch (role) {
    case ParameterRole::location: return 0;
    case ParameterRole::scale: return 1;
    case ParameterRole::shape: return 2;
    }
    return 3;
}

}  // namespace

Model Model::build(const ModelConfig& config, const Dataset& data) {
    Model m;
    m.config_ = config;
    m.data_ = data;
    const std::size_t dim = config.margins.size();
    if (dim == 0) throw ValidationError("margins: at least one margin is required");
    if (dim == 1 && !config.univariate) {
        throw ValidationError("margins: a single margin has no copula; set \"univariate\": true for a univariate fit");
    }
    if (dim > 1 && config.univariate) throw ValidationError("univariate: only valid with exactly one margin");
    if (dim > kMaxDimension) throw ValidationError("margins: at most " + std::to_string(kMaxDimension) + " responses");
    if (config.copula.size() != num_pairs(dim)) {
        throw ValidationError("copula: expected " + std::to_string(num_pairs(dim)) + " predictors for " +
                              std::to_string(dim) + " margins, got " + std::to_string(config.copula.size()));
    }
    if (data.rows() == 0) throw ValidationError("data: no observations");

    m.response_.resize(static_cast<Eigen::Index>(data.rows()), static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
        const auto& mc = config.margins[j];
        const std::string where = "margins[" + std::to_string(j) + "]";
        if (!data.has_column(mc.response)) {
            throw ValidationError(where + ".response: column '" + mc.response + "' not found in data");
        }
        const auto y = data.column(mc.response);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const bool bad_count = is_discrete(mc.family) && (y[i] < 0.0 || y[i] != std::floor(y[i]));
            const bool bad_dagum = mc.family == Family::dagum && !(y[i] > 0.0);
            if (bad_count || bad_dagum) {
                throw ValidationError(where + ": response '" + mc.response + "' value " + format_double(y[i]) +
                                      " on data row " + std::to_string(i + 1) + " is outside the support of " +
                                      std::string(family_name(mc.family)));
            }
            m.response_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = y[i];
        }
        m.families_.push_back(mc.family);
        m.responses_.push_back(mc.response);

        const auto params = parameters(mc.family);
        if (mc.parameters.size() != params.size()) {
            throw ValidationError(where + ": family " + std::string(family_name(mc.family)) + " needs " +
                                  std::to_string(params.size()) + " predictors");
        }
        m.margin_offsets_.push_back(m.predictors_.size());
        for (std::size_t p = 0; p < params.size(); ++p) {
            Predictor pred;
            pred.name = mc.response + "." + std::string(params[p].name);
            pred.target = PredictorTarget::marginal;
            pred.margin = j;
            pred.parameter = p;
            pred.spec = build_predictor(mc.parameters[p], data, params[p].link,
                                        where + ".predictors." + std::string(params[p].name));
            m.predictors_.push_back(std::move(pred));
        }
    }
    m.margin_offsets_.push_back(m.predictors_.size());
    m.copula_offset_ = m.predictors_.size();
    for (std::size_t pair = 0; pair < config.copula.size(); ++pair) {
        const auto [i, j] = pair_from_index(pair);
        Predictor pred;
        pred.name = "lambda_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
        pred.target = PredictorTarget::copula;
        pred.pair = pair;
        pred.spec = build_predictor(config.copula[pair], data, Link::identity, "copula[" + std::to_string(pair) + "]");
        m.predictors_.push_back(std::move(pred));
    }

    Eigen::Index offset = 0;
    for (std::size_t k = 0; k < m.predictors_.size(); ++k) {
        const auto& terms = m.predictors_[k].spec.terms;
        for (std::size_t s = 0; s < terms.size(); ++s) {
            Block b;
            b.predictor = k;
            b.term = s;
            b.name = m.predictors_[k].name + "." + terms[s].label;
            b.offset = offset;
            b.size = terms[s].size();
            offset += b.size;
            m.blocks_.push_back(std::move(b));
        }
    }
    m.num_coefficients_ = offset;

    // Sweep: margins in order, parameters by role; copula predictors last.
    std::vector<std::size_t> order(m.blocks_.size());
    for (std::size_t b = 0; b < order.size(); ++b) order[b] = b;
    auto key = [&](std::size_t b) {
        const auto& pred = m.predictors_[m.blocks_[b].predictor];
        if (pred.target == PredictorTarget::copula) return std::make_tuple(dim, 0, pred.pair, m.blocks_[b].term);
        const int role = role_rank(parameters(m.families_[pred.margin])[pred.parameter].role);
        return std::make_tuple(pred.margin, role, pred.parameter, m.blocks_[b].term);
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    for (std::size_t b : order) {
        const auto& t = m.term(m.blocks_[b]);
        if (t.fixed) continue;
        m.sweep_order_.push_back(b);
        if (t.penalized()) m.penalized_blocks_.push_back(b);
    }
    return m;
}

std::size_t Model::marginal_predictor(std::size_t margin, std::size_t parameter) const {
    return margin_offsets_[margin] + parameter;
}

const EffectTerm& Model::term(const Block& block) const { return predictors_[block.predictor].spec.terms[block.term]; }

bool Model::has_discrete_margin() const { return std::any_of(families_.begin(), families_.end(), is_discrete); }

std::vector<std::string> Model::coefficient_names() const {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(num_coefficients_));
    for (const auto& b : blocks_) {
        if (b.size == 1) {
            names.push_back(b.name);
            continue;
        }
        for (Eigen::Index l = 0; l < b.size; ++l) names.push_back(b.name + "[" + std::to_string(l) + "]");
    }
    return names;
}

Eigen::VectorXd ParameterState::flatten(const Model& model) const {
    Eigen::VectorXd flat(model.num_coefficients());
    for (std::size_t b = 0; b < model.blocks().size(); ++b) {
        flat.segment(model.blocks()[b].offset, model.blocks()[b].size) = beta[b];
    }
    return flat;
}

ParameterState ParameterState::from_flat(const Model& model, const Eigen::VectorXd& flat, std::span<const double> tau2) {
    if (flat.size() != model.num_coefficients()) throw ArgumentError("from_flat: coefficient count mismatch");
    if (tau2.size() != model.blocks().size()) throw ArgumentError("from_flat: smoothing variance count mismatch");
    ParameterState s;
    for (const auto& b : model.blocks()) s.beta.push_back(flat.segment(b.offset, b.size));
    s.tau2.assign(tau2.begin(), tau2.end());
    return s;
}

ParameterState initial_state(const Model& model) {
    ParameterState s;
    for (const auto& b : model.blocks()) {
        const auto& t = model.term(b);
        s.beta.push_back(t.fixed ? *t.fixed : Eigen::VectorXd::Zero(b.size));
        s.tau2.push_back(1.0);
    }
    return s;
}

Eigen::MatrixXd predictor_matrix(const Model& model, const ParameterState& state) {
    Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(model.n()),
                                                static_cast<Eigen::Index>(model.predictors().size()));
    for (std::size_t b = 0; b < model.blocks().size(); ++b) {
        const auto& blk = model.blocks()[b];
        eta.col(static_cast<Eigen::Index>(blk.predictor)).noalias() += model.term(blk).design * state.beta[b];
    }
    return eta;
}

Eigen::MatrixXd predictor_matrix(const Model& model, const ParameterState& state, const Dataset& data) {
    Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(data.rows()),
                                                static_cast<Eigen::Index>(model.predictors().size()));
    for (std::size_t b = 0; b < model.blocks().size(); ++b) {
        const auto& blk = model.blocks()[b];
        eta.col(static_cast<Eigen::Index>(blk.predictor)).noalias() += model.term(blk).evaluate(data) * state.beta[b];
    }
    return eta;
}

std::vector<std::vector<double>> margin_parameters(const Model& model, const Eigen::RowVectorXd& eta_row) {
    std::vector<std::vector<double>> thetas(model.dimension());
    for (std::size_t j = 0; j < model.dimension(); ++j) {
        const auto params = parameters(model.families()[j]);
        for (std::size_t p = 0; p < params.size(); ++p) {
            const auto k = static_cast<Eigen::Index>(model.marginal_predictor(j, p));
            thetas[j].push_back(inverse_link(params[p].link, eta_row[k]));
        }
    }
    return thetas;
}

std::vector<double> copula_lambda(const Model& model, const Eigen::RowVectorXd& eta_row) {
    std::vector<double> lambda(num_pairs(model.dimension()));
    for (std::size_t m = 0; m < lambda.size(); ++m) {
        lambda[m] = eta_row[static_cast<Eigen::Index>(model.copula_predictor(m))];
    }
    return lambda;
}

}  // namespace mvgamlss
