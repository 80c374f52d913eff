#pragma once

// Design matrices, prior precision (penalty) matrices and centering
// constraints for the additive effect terms of a predictor.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mvgamlss/data.hpp"
#include "mvgamlss/margins.hpp"

namespace mvgamlss {

enum class TermKind { intercept, linear, pspline, random_effect, mrf };

std::string_view term_kind_name(TermKind kind);
TermKind parse_term_kind(std::string_view name);

inline constexpr double kDefaultHyperA = 0.001;
inline constexpr double kDefaultHyperB = 0.001;

// Equidistant B-spline basis on [lower, upper]. The range is cut into
// `segments` equal intervals and `degree` exterior knots are added on each
// side, giving segments + degree basis functions.
class BSplineBasis {
public:
    BSplineBasis(double lower, double upper, int segments, int degree);
    // Throws ValidationError when x is constant.
    static BSplineBasis from_data(std::span<const double> x, int segments, int degree);

    // Values outside [lower, upper] are clamped to the boundary; the count of
    // clamped values is written to `clamped` when given.
    Eigen::MatrixXd evaluate(std::span<const double> x, std::size_t* clamped = nullptr) const;

    int size() const { return segments_ + degree_; }
    int degree() const { return degree_; }
    double lower() const { return lower_; }
    double upper() const { return upper_; }
    const std::vector<double>& knots() const { return knots_; }

private:
    double lower_;
    double upper_;
    int segments_;
    int degree_;
    std::vector<double> knots_;
};

Eigen::MatrixXd bspline_design(std::span<const double> x, int num_inner_knots, int degree);

// K = D^T D with D the order-th difference matrix on `size` coefficients.
Eigen::MatrixXd difference_penalty(int size, int order);

// Graph Laplacian of a symmetric neighbour list without self loops.
Eigen::MatrixXd mrf_penalty(const std::vector<std::vector<std::size_t>>& adjacency);
std::size_t connected_components(const std::vector<std::vector<std::size_t>>& adjacency);

// Edge list "regionA regionB" per line (integer region ids, '#' comments).
std::vector<std::pair<long, long>> read_edge_list(const std::filesystem::path& path);

// Single row 1^T Z / n: A beta = 0 iff the fitted effect has mean zero.
Eigen::MatrixXd centering_constraint(const Eigen::MatrixXd& design);

// Orthonormal basis of {beta : A beta = 0}; identity when A has no rows.
Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& constraint, Eigen::Index size);

// beta - A^T (A A^T)^-1 A beta.
Eigen::VectorXd project_to_constraint(const Eigen::MatrixXd& constraint, const Eigen::VectorXd& beta);

// Eigenvalues above tol * max(1, largest eigenvalue).
int numeric_rank(const Eigen::MatrixXd& symmetric, double tol = 1e-8);

struct TermConfig {
    TermKind kind = TermKind::intercept;
    std::string covariate;
    int knots = 20;
    int degree = 3;
    int order = 2;
    std::optional<bool> constraint;  // default: centered when the predictor has an intercept
    bool vague = false;              // intercept/linear: K = I instead of the flat K = 0
    double a = kDefaultHyperA;
    double b = kDefaultHyperB;
    std::vector<std::pair<long, long>> edges;  // mrf neighbours
    std::optional<std::vector<double>> fixed;  // held at this value, never sampled
};

struct EffectTerm {
    TermKind kind = TermKind::intercept;
    std::string covariate;
    std::string label;

    std::optional<BSplineBasis> spline;
    std::vector<double> levels;  // random_effect / mrf: covariate value of each column

    Eigen::MatrixXd design;      // Z on the training data
    Eigen::MatrixXd penalty;     // K
    int penalty_rank = 0;
    Eigen::MatrixXd constraint;  // A, zero rows when unconstrained
    Eigen::MatrixXd null_basis;  // orthonormal basis of ker A
    double a = kDefaultHyperA;
    double b = kDefaultHyperB;
    std::optional<Eigen::VectorXd> fixed;

    Eigen::Index size() const { return design.cols(); }
    bool penalized() const { return penalty_rank > 0; }
    bool constrained() const { return constraint.rows() > 0; }

    // Z at arbitrary data using the training basis (knots, levels).
    Eigen::MatrixXd evaluate(const Dataset& data, std::size_t* clamped = nullptr) const;
};

EffectTerm make_term(const TermConfig& config, const Dataset& data, bool predictor_has_intercept);

struct PredictorSpec {
    std::vector<EffectTerm> terms;
    Link link = Link::identity;

    bool has_intercept() const;
    Eigen::Index num_coefficients() const;
};

// eta = sum_s Z_s beta_s on the training designs.
Eigen::VectorXd evaluate_predictor(const PredictorSpec& spec, std::span<const Eigen::VectorXd> beta_blocks);
// The same on new data rows.
Eigen::VectorXd evaluate_predictor(const PredictorSpec& spec, std::span<const Eigen::VectorXd> beta_blocks,
                                   const Dataset& data);

}  // namespace mvgamlss
