#pragma once

// A fitted-model description: D margins with one structured additive
// predictor per distributional parameter, plus D(D-1)/2 predictors for the
// copula parameters lambda. Coefficients are organised in blocks, one per
// effect term, in predictor order (margins first, copula last).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvgamlss/data.hpp"
#include "mvgamlss/design.hpp"
#include "mvgamlss/margins.hpp"

namespace mvgamlss {

struct PredictorConfig {
    std::vector<TermConfig> terms;
};

struct MarginConfig {
    std::string response;
    Family family = Family::gaussian;
    std::vector<PredictorConfig> parameters;  // one per family parameter, in family order
};

struct ChainConfig {
    std::size_t iterations = 12000;
    std::size_t burnin = 2000;
    std::size_t thin = 10;
    std::uint64_t seed = 1;
    double damping = 1.0;
};

struct ModelConfig {
    std::vector<MarginConfig> margins;
    std::vector<PredictorConfig> copula;  // D(D-1)/2 entries, row-major pair order
    bool univariate = false;
    ChainConfig chain;
};

// Intercept-only predictor list.
PredictorConfig intercept_only();

enum class PredictorTarget { marginal, copula };

struct Predictor {
    std::string name;  // "y1.mu", "lambda_2_1"
    PredictorTarget target = PredictorTarget::marginal;
    std::size_t margin = 0;     // marginal: response index
    std::size_t parameter = 0;  // marginal: family parameter index
    std::size_t pair = 0;       // copula: lambda index
    PredictorSpec spec;
};

struct Block {
    std::size_t predictor = 0;
    std::size_t term = 0;
    std::string name;  // "<predictor>.<term label>"
    Eigen::Index offset = 0;  // position in the flattened coefficient vector
    Eigen::Index size = 0;
};

class Model {
public:
    // Validates the configuration against the data and builds every design,
    // penalty and constraint. Throws ValidationError naming the field.
    static Model build(const ModelConfig& config, const Dataset& data);

    std::size_t n() const { return static_cast<std::size_t>(response_.rows()); }
    std::size_t dimension() const { return families_.size(); }
    const std::vector<Family>& families() const { return families_; }
    const std::vector<std::string>& responses() const { return responses_; }
    const Eigen::MatrixXd& response() const { return response_; }  // n x D
    const std::vector<Predictor>& predictors() const { return predictors_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    const ModelConfig& config() const { return config_; }
    const Dataset& data() const { return data_; }

    std::size_t marginal_predictor(std::size_t margin, std::size_t parameter) const;
    std::size_t copula_predictor(std::size_t pair) const { return copula_offset_ + pair; }
    std::size_t copula_offset() const { return copula_offset_; }
    std::size_t predictor_offset(std::size_t margin) const { return margin_offsets_[margin]; }
    const EffectTerm& term(const Block& block) const;
    Link link(std::size_t predictor) const { return predictors_[predictor].spec.link; }

    bool has_discrete_margin() const;
    Eigen::Index num_coefficients() const { return num_coefficients_; }
    std::vector<std::string> coefficient_names() const;

    // Non-fixed blocks: per margin location, scale, shape; copula last.
    const std::vector<std::size_t>& sweep_order() const { return sweep_order_; }
    // Blocks carrying a smoothing variance (rank K > 0, not fixed).
    const std::vector<std::size_t>& penalized_blocks() const { return penalized_blocks_; }

private:
    ModelConfig config_;
    Dataset data_;
    std::vector<Family> families_;
    std::vector<std::string> responses_;
    Eigen::MatrixXd response_;
    std::vector<Predictor> predictors_;
    std::vector<Block> blocks_;
    std::vector<std::size_t> margin_offsets_;
    std::size_t copula_offset_ = 0;
    Eigen::Index num_coefficients_ = 0;
    std::vector<std::size_t> sweep_order_;
    std::vector<std::size_t> penalized_blocks_;
};

struct ParameterState {
    std::vector<Eigen::VectorXd> beta;  // per block
    std::vector<double> tau2;           // per block; 1 for unpenalized blocks

    Eigen::VectorXd flatten(const Model& model) const;
    static ParameterState from_flat(const Model& model, const Eigen::VectorXd& beta, std::span<const double> tau2);
};

// Zero coefficients (fixed blocks at their value), unit smoothing variances.
ParameterState initial_state(const Model& model);

// n x K predictor matrix on the training data.
Eigen::MatrixXd predictor_matrix(const Model& model, const ParameterState& state);
// The same at new data rows.
Eigen::MatrixXd predictor_matrix(const Model& model, const ParameterState& state, const Dataset& data);

// Per-margin natural parameters and lambda from one row of the predictor matrix.
std::vector<std::vector<double>> margin_parameters(const Model& model, const Eigen::RowVectorXd& eta_row);
std::vector<double> copula_lambda(const Model& model, const Eigen::RowVectorXd& eta_row);

}  // namespace mvgamlss
