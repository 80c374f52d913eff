#include "mvgamlss/design.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mvgamlss/errors.hpp"

namespace mvgamlss {

std::string_view term_kind_name(TermKind kind) {
    switch (kind) {
    case TermKind::intercept: return "intercept";
    case TermKind::linear: return "linear";
    case TermKind::pspline: return "pspline";
    case TermKind::random_effect: return "random_effect";
    case TermKind::mrf: return "mrf";
    }
    return "unknown";
}

TermKind parse_term_kind(std::string_view name) {
    for (TermKind k : {TermKind::intercept, TermKind::linear, TermKind::pspline, TermKind::random_effect,
                       TermKind::mrf}) {
        if (term_kind_name(k) == name) return k;
    }
    throw ArgumentError("unknown term kind '" + std::string(name) +
                        "' (expected intercept, linear, pspline, random_effect or mrf)");
}

BSplineBasis::BSplineBasis(double lower, double upper, int segments, int degree)
    : lower_(lower), upper_(upper), segments_(segments), degree_(degree) {
    if (segments < 1) throw ArgumentError("bspline: need at least one inner knot interval");
    if (degree < 1) throw ArgumentError("bspline: degree must be at least 1");
    if (!(upper > lower)) throw ValidationError("bspline: degenerate covariate range");
    const double h = (upper - lower) / segments;
    knots_.resize(static_cast<std::size_t>(segments + 2 * degree + 1));
    for (std::size_t k = 0; k < knots_.size(); ++k) {
        knots_[k] = lower + (static_cast<double>(k) - degree) * h;
    }
    knots_[static_cast<std::size_t>(degree)] = lower;
    knots_[static_cast<std::size_t>(degree + segments)] = upper;
}

BSplineBasis BSplineBasis::from_data(std::span<const double> x, int segments, int degree) {
    if (x.empty()) throw ValidationError("bspline: empty covariate");
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (!(*hi > *lo)) throw ValidationError("bspline: covariate is constant; cannot place knots");
    return BSplineBasis(*lo, *hi, segments, degree);
}

Eigen::MatrixXd BSplineBasis::evaluate(std::span<const double> x, std::size_t* clamped) const {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, size());
    std::vector<double> basis(static_cast<std::size_t>(degree_ + 1));
    std::vector<double> left(basis.size());
    std::vector<double> right(basis.size());
    std::size_t outside = 0;
    const double h = (upper_ - lower_) / segments_;
    for (Eigen::Index i = 0; i < n; ++i) {
        double xi = x[static_cast<std::size_t>(i)];
        if (xi < lower_ || xi > upper_) {
            ++outside;
            xi = std::clamp(xi, lower_, upper_);
        }
        // Knot span mu with t_mu <= x < t_mu+1, right-closed at the upper boundary.
        int seg = static_cast<int>(std::floor((xi - lower_) / h));
        seg = std::clamp(seg, 0, segments_ - 1);
        const auto& t = knots_;
        auto mu = static_cast<std::size_t>(seg + degree_);
        if (xi < t[mu] && seg > 0) --mu;
        else if (xi >= t[mu + 1] && seg < segments_ - 1) ++mu;

        basis[0] = 1.0;
        for (int j = 1; j <= degree_; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            left[ju] = xi - t[mu + 1 - ju];
            right[ju] = t[mu + ju] - xi;
            double saved = 0.0;
            for (std::size_t r = 0; r < ju; ++r) {
                const double temp = basis[r] / (right[r + 1] + left[ju - r]);
                basis[r] = saved + right[r + 1] * temp;
                saved = left[ju - r] * temp;
            }
            basis[ju] = saved;
        }
        const auto first = static_cast<Eigen::Index>(mu) - degree_;
        for (int r = 0; r <= degree_; ++r) Z(i, first + r) = basis[static_cast<std::size_t>(r)];
    }
    if (clamped) *clamped = outside;
    return Z;
}

Eigen::MatrixXd bspline_design(std::span<const double> x, int num_inner_knots, int degree) {
    return BSplineBasis::from_data(x, num_inner_knots, degree).evaluate(x);
}

Eigen::MatrixXd difference_penalty(int size, int order) {
    if (order < 0 || size <= order) {
        throw ArgumentError("difference_penalty: need size > order (size " + std::to_string(size) + ", order " +
                            std::to_string(order) + ")");
    }
    Eigen::MatrixXd D = Eigen::MatrixXd::Identity(size, size);
    for (int k = 0; k < order; ++k) {
        D = (D.bottomRows(D.rows() - 1) - D.topRows(D.rows() - 1)).eval();
    }
    return D.transpose() * D;
}

Eigen::MatrixXd mrf_penalty(const std::vector<std::vector<std::size_t>>& adjacency) {
    const std::size_t g = adjacency.size();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(g));
    for (std::size_t r = 0; r < g; ++r) {
        for (std::size_t s : adjacency[r]) {
            if (s >= g) throw ArgumentError("mrf_penalty: neighbour index out of range");
            if (s == r) throw ArgumentError("mrf_penalty: self loop at region " + std::to_string(r));
            const auto& back = adjacency[s];
            if (std::find(back.begin(), back.end(), r) == back.end()) {
                throw ArgumentError("mrf_penalty: adjacency is not symmetric (" + std::to_string(r) + " -> " +
                                    std::to_string(s) + ")");
            }
        }
    }
    for (std::size_t r = 0; r < g; ++r) {
        std::vector<std::size_t> nb = adjacency[r];
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
        const auto ri = static_cast<Eigen::Index>(r);
        K(ri, ri) = static_cast<double>(nb.size());
        for (std::size_t s : nb) K(ri, static_cast<Eigen::Index>(s)) = -1.0;
    }
    return K;
}

std::size_t connected_components(const std::vector<std::vector<std::size_t>>& adjacency) {
    std::vector<std::size_t> parent(adjacency.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    std::size_t comps = adjacency.size();
    for (std::size_t r = 0; r < adjacency.size(); ++r) {
        for (std::size_t s : adjacency[r]) {
            const std::size_t a = find(r), b = find(s);
            if (a != b) {
                parent[a] = b;
                --comps;
            }
        }
    }
    return comps;
}

std::vector<std::pair<long, long>> read_edge_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open adjacency file '" + path.string() + "'");
    std::vector<std::pair<long, long>> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ss(line);
        long a = 0, b = 0;
        if (!(ss >> a)) continue;
        std::string rest;
        if (!(ss >> b) || (ss >> rest)) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected 'regionA regionB'");
        }
        edges.emplace_back(a, b);
    }
    return edges;
}

Eigen::MatrixXd centering_constraint(const Eigen::MatrixXd& design) {
    if (design.rows() == 0 || design.cols() == 0) throw ArgumentError("centering_constraint: empty design");
    return design.colwise().mean();
}

Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& constraint, Eigen::Index size) {
    if (constraint.rows() == 0) return Eigen::MatrixXd::Identity(size, size);
    if (constraint.cols() != size) throw ArgumentError("null_space_basis: constraint width mismatch");
    const Eigen::Index c = constraint.rows();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(constraint);
    if (rank_check.rank() < c) throw ArgumentError("null_space_basis: constraint matrix lacks full row rank");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(constraint.transpose());
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(size, size);
    return Q.rightCols(size - c);
}

Eigen::VectorXd project_to_constraint(const Eigen::MatrixXd& constraint, const Eigen::VectorXd& beta) {
    if (constraint.rows() == 0) return beta;
    const Eigen::MatrixXd AAt = constraint * constraint.transpose();
    return beta - constraint.transpose() * AAt.ldlt().solve(constraint * beta);
}

int numeric_rank(const Eigen::MatrixXd& symmetric, double tol) {
    if (symmetric.size() == 0) return 0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetric, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    return static_cast<int>((ev.array() > tol * scale).count());
}

namespace {

Eigen::MatrixXd indicator_design(std::span<const double> x, const std::vector<double>& levels) {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(levels.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto it = std::lower_bound(levels.begin(), levels.end(), x[i]);
        if (it != levels.end() && *it == x[i]) {
            Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(it - levels.begin())) = 1.0;
        }
    }
    return Z;
}

void require_integral(std::span<const double> x, const std::string& covariate) {
    for (double v : x) {
        if (v != std::floor(v)) {
            throw ValidationError("covariate '" + covariate + "' must hold integer level/region ids");
        }
    }
}

}  // namespace

Eigen::MatrixXd EffectTerm::evaluate(const Dataset& data, std::size_t* clamped) const {
    if (clamped) *clamped = 0;
    const auto n = static_cast<Eigen::Index>(data.rows());
    switch (kind) {
    case TermKind::intercept: return Eigen::MatrixXd::Ones(n, 1);
    case TermKind::linear: {
        const auto x = data.column(covariate);
        return Eigen::Map<const Eigen::VectorXd>(x.data(), n);
    }
    case TermKind::pspline: return spline->evaluate(data.column(covariate), clamped);
    case TermKind::random_effect:
    case TermKind::mrf: return indicator_design(data.column(covariate), levels);
    }
    return {};
}

EffectTerm make_term(const TermConfig& config, const Dataset& data, bool predictor_has_intercept) {
    EffectTerm term;
    term.kind = config.kind;
    term.covariate = config.covariate;
    term.a = config.a;
    term.b = config.b;
    if (!(config.a > 0.0 && config.b > 0.0)) throw ValidationError("hyperparameters a and b must be positive");

    const bool needs_covariate = config.kind != TermKind::intercept;
    if (needs_covariate && !data.has_column(config.covariate)) {
        throw ValidationError("covariate '" + config.covariate + "' not found in data");
    }
    term.label = std::string(term_kind_name(config.kind));
    if (needs_covariate) term.label += "(" + config.covariate + ")";

    bool allow_constraint = false;
    switch (config.kind) {
    case TermKind::intercept:
    case TermKind::linear: {
        term.design = term.evaluate(data);
        term.penalty = Eigen::MatrixXd::Constant(1, 1, config.vague ? 1.0 : 0.0);
        term.penalty_rank = config.vague ? 1 : 0;
        break;
    }
    case TermKind::pspline: {
        term.spline = BSplineBasis::from_data(data.column(config.covariate), config.knots, config.degree);
        term.design = term.spline->evaluate(data.column(config.covariate));
        term.penalty = difference_penalty(static_cast<int>(term.design.cols()), config.order);
        term.penalty_rank = static_cast<int>(term.design.cols()) - config.order;
        allow_constraint = true;
        break;
    }
    case TermKind::random_effect: {
        const auto x = data.column(config.covariate);
        require_integral(x, config.covariate);
        term.levels.assign(x.begin(), x.end());
        std::sort(term.levels.begin(), term.levels.end());
        term.levels.erase(std::unique(term.levels.begin(), term.levels.end()), term.levels.end());
        term.design = indicator_design(x, term.levels);
        const auto g = static_cast<Eigen::Index>(term.levels.size());
        term.penalty = Eigen::MatrixXd::Identity(g, g);
        term.penalty_rank = static_cast<int>(g);
        allow_constraint = true;
        break;
    }
    case TermKind::mrf: {
        const auto x = data.column(config.covariate);
        require_integral(x, config.covariate);
        std::vector<double> nodes(x.begin(), x.end());
        for (const auto& [a, b] : config.edges) {
            if (a == b) throw ValidationError("adjacency: self loop at region " + std::to_string(a));
            nodes.push_back(static_cast<double>(a));
            nodes.push_back(static_cast<double>(b));
        }
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        term.levels = nodes;
        auto index = [&](long id) {
            return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), static_cast<double>(id)) -
                                            nodes.begin());
        };
        std::vector<std::vector<std::size_t>> adjacency(nodes.size());
        for (const auto& [a, b] : config.edges) {
            adjacency[index(a)].push_back(index(b));
            adjacency[index(b)].push_back(index(a));
        }
        term.design = indicator_design(x, term.levels);
        term.penalty = mrf_penalty(adjacency);
        term.penalty_rank = static_cast<int>(nodes.size() - connected_components(adjacency));
        allow_constraint = true;
        break;
    }
    }

    if (config.constraint.has_value() && *config.constraint && !allow_constraint) {
        throw ValidationError("constraint only applies to pspline, random_effect and mrf terms");
    }
    const bool constrained = allow_constraint && config.constraint.value_or(predictor_has_intercept);
    term.constraint = Eigen::MatrixXd(0, term.design.cols());
    if (constrained) {
        Eigen::MatrixXd A = centering_constraint(term.design);
        if (A.norm() > 1e-12) term.constraint = A;
    }
    term.null_basis = null_space_basis(term.constraint, term.design.cols());

    if (config.fixed) {
        if (static_cast<Eigen::Index>(config.fixed->size()) != term.design.cols()) {
            throw ValidationError("fixed value for term '" + term.label + "' needs " +
                                  std::to_string(term.design.cols()) + " coefficients");
        }
        term.fixed = Eigen::Map<const Eigen::VectorXd>(config.fixed->data(), term.design.cols());
    }
    return term;
}

bool PredictorSpec::has_intercept() const {
    return std::any_of(terms.begin(), terms.end(), [](const EffectTerm& t) { return t.kind == TermKind::intercept; });
}

Eigen::Index PredictorSpec::num_coefficients() const {
    Eigen::Index total = 0;
    for (const auto& t : terms) total += t.size();
    return total;
}

Eigen::VectorXd evaluate_predictor(const PredictorSpec& spec, std::span<const Eigen::VectorXd> beta_blocks) {
    if (beta_blocks.size() != spec.terms.size()) throw ArgumentError("evaluate_predictor: block count mismatch");
    if (spec.terms.empty()) return {};
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(spec.terms.front().design.rows());
    for (std::size_t s = 0; s < spec.terms.size(); ++s) {
        if (beta_blocks[s].size() != spec.terms[s].size()) {
            throw ArgumentError("evaluate_predictor: block " + std::to_string(s) + " has wrong length");
        }
        eta.noalias() += spec.terms[s].design * beta_blocks[s];
    }
    return eta;
}

Eigen::VectorXd evaluate_predictor(const PredictorSpec& spec, std::span<const Eigen::VectorXd> beta_blocks,
                                   const Dataset& data) {
    if (beta_blocks.size() != spec.terms.size()) throw ArgumentError("evaluate_predictor: block count mismatch");
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.rows()));
    for (std::size_t s = 0; s < spec.terms.size(); ++s) {
        if (beta_blocks[s].size() != spec.terms[s].size()) {
            throw ArgumentError("evaluate_predictor: block " + std::to_string(s) + " has wrong length");
        }
        eta.noalias() += spec.terms[s].evaluate(data) * beta_blocks[s];
    }
    return eta;
}

}  // namespace mvgamlss
