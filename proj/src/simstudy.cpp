#include "mvgamlss/simstudy.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "mvgamlss/copula.hpp"
#include "mvgamlss/errors.hpp"
#include "mvgamlss/stats.hpp"
#include "mvgamlss/svg.hpp"

namespace mvgamlss {

std::string_view design_name(DesignTag tag) {
    switch (tag) {
    case DesignTag::bivariate_gaussian: return "bivariate_gaussian";
    case DesignTag::dagum5d: return "dagum5d";
    }
    return "unknown";
}

DesignTag parse_design(std::string_view name) {
    for (DesignTag t : {DesignTag::bivariate_gaussian, DesignTag::dagum5d}) {
        if (design_name(t) == name) return t;
    }
    throw ArgumentError("unknown design '" + std::string(name) + "' (expected bivariate_gaussian or dagum5d)");
}

void SimDesign::validate() const {
    if (n < 50) throw ArgumentError("simulation: n must be at least 50");
    if (replications < 1) throw ArgumentError("simulation: need at least one replication");
}

std::vector<double> Truth::correlation(double x) const {
    const std::vector<double> l = lambda(x);
    const CorrelationBundle bundle = lambda_to_bundle(l, dimension());
    std::vector<double> out(l.size());
    for (std::size_t m = 0; m < l.size(); ++m) {
        const auto [i, j] = pair_from_index(m);
        out[m] = bundle.omega(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    return out;
}

std::vector<double> Truth::spearman(double x) const {
    std::vector<double> out = correlation(x);
    for (double& w : out) w = spearman_rho(w);
    return out;
}

namespace {

std::string pair_name(std::string_view prefix, std::size_t m) {
    const auto [i, j] = pair_from_index(m);
    return std::string(prefix) + "_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
}

std::vector<std::string> response_names(std::size_t dim) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < dim; ++j) names.push_back("y" + std::to_string(j + 1));
    return names;
}

Dataset simulate_rows(const Truth& truth, std::size_t n, double x_lower, double x_upper, Rng& rng) {
    const std::size_t dim = truth.dimension();
    Eigen::MatrixXd values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim + 1));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double x = x_lower + (x_upper - x_lower) * uniform01(rng);
        const CorrelationBundle bundle = lambda_to_bundle(truth.lambda(x), dim);
        const auto thetas = truth.thetas(x);
        const Eigen::VectorXd y = latent_to_response(sample_latent(bundle, rng), truth.families, thetas);
        values(r, 0) = x;
        values.row(r).tail(static_cast<Eigen::Index>(dim)) = y.transpose();
    }
    std::vector<std::string> names{"x"};
    for (const auto& name : truth.responses) names.push_back(name);
    return Dataset(std::move(names), std::move(values));
}

}  // namespace

nlohmann::json Truth::to_json(std::span<const double> grid) const {
    nlohmann::json j;
    j["design"] = design_name(design);
    j["responses"] = responses;
    std::vector<std::string> fam;
    for (Family f : families) fam.emplace_back(family_name(f));
    j["families"] = fam;
    j["x_range"] = {x_lower, x_upper};
    if (!margin_constants.empty()) j["margin_parameters"] = margin_constants;
    nlohmann::json formulas = nlohmann::json::object();
    for (std::size_t m = 0; m < lambda_formulas.size(); ++m) formulas[pair_name("lambda", m)] = lambda_formulas[m];
    j["lambda"] = formulas;
    nlohmann::json curves = nlohmann::json::object();
    curves["x"] = std::vector<double>(grid.begin(), grid.end());
    const std::size_t pairs = num_pairs(dimension());
    std::vector<std::vector<double>> lam(pairs), rho(pairs);
    for (double x : grid) {
        const auto l = lambda(x);
        const auto r = spearman(x);
        for (std::size_t m = 0; m < pairs; ++m) {
            lam[m].push_back(l[m]);
            rho[m].push_back(r[m]);
        }
    }
    for (std::size_t m = 0; m < pairs; ++m) {
        curves[pair_name("lambda", m)] = lam[m];
        curves[pair_name("spearman", m)] = rho[m];
    }
    j["curves"] = curves;
    return j;
}

SimDataset gen_dagum5d(std::size_t n, Rng& rng) {
    constexpr std::size_t dim = 5;
    Truth t;
    t.design = DesignTag::dagum5d;
    t.families.assign(dim, Family::dagum);
    t.responses = response_names(dim);
    t.x_lower = -0.9;
    t.x_upper = 0.9;
    for (std::size_t j = 0; j < dim; ++j) {
        std::vector<double> theta(3);
        for (double& v : theta) v = std::exp(-1.0 + 3.0 * uniform01(rng));
        t.margin_constants.push_back(theta);
    }
    const auto constants = t.margin_constants;
    t.thetas = [constants](double) { return constants; };
    t.lambda = [](double x) {
        std::vector<double> l(num_pairs(dim), 0.0);
        l[pair_index(1, 0)] = x * x;
        l[pair_index(2, 0)] = -x;
        l[pair_index(2, 1)] = x * x * x - x;
        return l;
    };
    t.lambda_formulas.assign(num_pairs(dim), "0");
    t.lambda_formulas[pair_index(1, 0)] = "x^2";
    t.lambda_formulas[pair_index(2, 0)] = "-x";
    t.lambda_formulas[pair_index(2, 1)] = "x^3 - x";
    SimDataset out;
    out.data = simulate_rows(t, n, t.x_lower, t.x_upper, rng);
    out.truth = std::move(t);
    return out;
}

SimDataset gen_bivariate_gaussian(std::size_t n, Rng& rng, const BivariateGaussianEffects& effects) {
    Truth t;
    t.design = DesignTag::bivariate_gaussian;
    t.families.assign(2, Family::gaussian);
    t.responses = response_names(2);
    t.x_lower = -1.0;
    t.x_upper = 1.0;
    t.thetas = [effects](double x) {
        return std::vector<std::vector<double>>{{effects.mu1(x), std::exp(effects.log_sigma1(x))},
                                                {effects.mu2(x), std::exp(effects.log_sigma2(x))}};
    };
    t.lambda = [effects](double x) { return std::vector<double>{effects.lambda21(x)}; };
    t.lambda_formulas = {"lambda21(x)"};
    SimDataset out;
    out.data = simulate_rows(t, n, t.x_lower, t.x_upper, rng);
    out.truth = std::move(t);
    return out;
}

SimDataset generate(const SimDesign& design, std::size_t replication) {
    design.validate();
    Rng rng = make_rng(derive_seed(design.seed, replication));
    switch (design.tag) {
    case DesignTag::bivariate_gaussian: return gen_bivariate_gaussian(design.n, rng);
    case DesignTag::dagum5d: return gen_dagum5d(design.n, rng);
    }
    throw ArgumentError("generate: unknown design");
}

ModelConfig design_model(DesignTag tag) {
    TermConfig spline;
    spline.kind = TermKind::pspline;
    spline.covariate = "x";
    PredictorConfig smooth = intercept_only();
    smooth.terms.push_back(spline);

    ModelConfig config;
    const std::size_t dim = tag == DesignTag::dagum5d ? 5 : 2;
    for (std::size_t j = 0; j < dim; ++j) {
        MarginConfig margin;
        margin.response = "y" + std::to_string(j + 1);
        if (tag == DesignTag::dagum5d) {
            margin.family = Family::dagum;
            margin.parameters.assign(3, intercept_only());
        } else {
            margin.family = Family::gaussian;
            margin.parameters.assign(2, smooth);
        }
        config.margins.push_back(std::move(margin));
    }
    config.copula.assign(num_pairs(dim), smooth);
    return config;
}

std::vector<double> evaluation_grid(const Truth& truth, std::size_t points) {
    return linear_grid(truth.x_lower, truth.x_upper, points);
}

ReplicationReport evaluate_curves(const std::vector<Eigen::MatrixXd>& curve_draws,
                                  const std::vector<std::vector<double>>& truth, std::span<const double> grid) {
    if (curve_draws.size() != truth.size()) throw ArgumentError("evaluate_curves: pair count mismatch");
    ReplicationReport report;
    report.grid.assign(grid.begin(), grid.end());
    double coverage = 0.0, width = 0.0;
    for (std::size_t m = 0; m < curve_draws.size(); ++m) {
        const Eigen::MatrixXd& draws = curve_draws[m];
        if (draws.rows() == 0) throw ArgumentError("evaluate_curves: no draws");
        if (static_cast<std::size_t>(draws.cols()) != grid.size() || truth[m].size() != grid.size()) {
            throw ArgumentError("evaluate_curves: grid size mismatch");
        }
        PairCurve c;
        c.pair = m;
        c.name = pair_name("rho", m);
        c.truth = truth[m];
        c.zero_truth = true;
        std::vector<double> abs_error;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const auto col = draws.col(static_cast<Eigen::Index>(g));
            std::vector<double> values(col.data(), col.data() + col.size());
            std::sort(values.begin(), values.end());
            const double mu = mean(values);
            const double lo = quantile_sorted(values, 0.025);
            const double hi = quantile_sorted(values, 0.975);
            const double t = truth[m][g];
            c.mean.push_back(mu);
            c.lower.push_back(lo);
            c.upper.push_back(hi);
            c.mse += (mu - t) * (mu - t);
            c.coverage += (lo <= t && t <= hi) ? 1.0 : 0.0;
            c.width += hi - lo;
            abs_error.push_back(std::abs(mu - t));
            if (std::abs(t) > 1e-12) c.zero_truth = false;
        }
        const auto points = static_cast<double>(grid.size());
        c.mse /= points;
        c.coverage /= points;
        c.width /= points;
        c.median_abs_error = median(abs_error);
        coverage += c.coverage;
        width += c.width;
        report.pairs.push_back(std::move(c));
    }
    report.mean_coverage = coverage / static_cast<double>(curve_draws.size());
    report.mean_width = width / static_cast<double>(curve_draws.size());
    return report;
}

ReplicationReport evaluate_replication(const Model& model, const PosteriorDraws& draws, const Truth& truth,
                                       std::span<const double> grid, CurveScale scale) {
    if (draws.size() == 0) throw ArgumentError("evaluate_replication: no draws");
    const std::size_t dim = model.dimension();
    const std::size_t pairs = num_pairs(dim);
    if (truth.dimension() != dim) throw ArgumentError("evaluate_replication: truth and model dimensions differ");
    const Dataset slice = slice_data(model.data(), "x", grid);

    std::vector<std::size_t> copula_blocks;
    std::vector<Eigen::MatrixXd> designs;
    for (std::size_t b = 0; b < model.blocks().size(); ++b) {
        const auto& blk = model.blocks()[b];
        if (blk.predictor < model.copula_offset()) continue;
        copula_blocks.push_back(b);
        designs.push_back(model.term(blk).evaluate(slice));
    }

    const auto points = static_cast<Eigen::Index>(grid.size());
    std::vector<Eigen::MatrixXd> curves(pairs, Eigen::MatrixXd(static_cast<Eigen::Index>(draws.size()), points));
    Eigen::MatrixXd lambda(points, static_cast<Eigen::Index>(pairs));
    std::vector<double> row(pairs);
    for (std::size_t s = 0; s < draws.size(); ++s) {
        lambda.setZero();
        for (std::size_t c = 0; c < copula_blocks.size(); ++c) {
            const auto& blk = model.blocks()[copula_blocks[c]];
            const Eigen::VectorXd beta = draws.beta.row(static_cast<Eigen::Index>(s)).segment(blk.offset, blk.size);
            const auto m = static_cast<Eigen::Index>(blk.predictor - model.copula_offset());
            lambda.col(m).noalias() += designs[c] * beta;
        }
        for (Eigen::Index g = 0; g < points; ++g) {
            for (std::size_t m = 0; m < pairs; ++m) row[m] = lambda(g, static_cast<Eigen::Index>(m));
            const CorrelationBundle bundle = lambda_to_bundle(row, dim);
            for (std::size_t m = 0; m < pairs; ++m) {
                const auto [i, j] = pair_from_index(m);
                const double w = bundle.omega(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                curves[m](static_cast<Eigen::Index>(s), g) = scale == CurveScale::spearman ? spearman_rho(w) : w;
            }
        }
    }
    std::vector<std::vector<double>> truth_curves(pairs);
    for (double x : grid) {
        const auto t = scale == CurveScale::spearman ? truth.spearman(x) : truth.correlation(x);
        for (std::size_t m = 0; m < pairs; ++m) truth_curves[m].push_back(t[m]);
    }
    return evaluate_curves(curves, truth_curves, grid);
}

std::vector<PairSummary> summarize_study(const std::vector<ReplicationReport>& reports) {
    std::vector<PairSummary> out;
    if (reports.empty()) return out;
    const std::size_t pairs = reports.front().pairs.size();
    for (std::size_t m = 0; m < pairs; ++m) {
        PairSummary s;
        s.name = reports.front().pairs[m].name;
        s.zero_truth = reports.front().pairs[m].zero_truth;
        std::vector<double> mse, cov, width, err, abs_mean;
        for (const auto& r : reports) {
            const auto& c = r.pairs[m];
            mse.push_back(c.mse);
            cov.push_back(c.coverage);
            width.push_back(c.width);
            err.push_back(c.median_abs_error);
            for (double v : c.mean) abs_mean.push_back(std::abs(v));
        }
        std::sort(mse.begin(), mse.end());
        s.mse_median = quantile_sorted(mse, 0.5);
        s.mse_lower = quantile_sorted(mse, 0.025);
        s.mse_upper = quantile_sorted(mse, 0.975);
        s.coverage = mean(cov);
        s.width = mean(width);
        s.median_abs_error = median(err);
        s.median_abs_posterior_mean = median(abs_mean);
        out.push_back(s);
    }
    return out;
}

StudyResult run_study(const StudySettings& settings) {
    settings.design.validate();
    settings.chain.validate();
    const auto start = std::chrono::steady_clock::now();
    const std::size_t reps = settings.design.replications;
    StudyResult result;
    result.reports.resize(reps);
    result.acceptance.resize(reps);
    std::vector<std::string> errors(reps);
    const int jobs = static_cast<int>(std::max<std::size_t>(1, settings.jobs));

#pragma omp parallel for num_threads(jobs) schedule(dynamic)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(reps); ++r) {
        const auto rep = static_cast<std::size_t>(r);
        try {
            const SimDataset ds = generate(settings.design, rep);
            const Model model = Model::build(design_model(settings.design.tag), ds.data);
            ChainSettings chain = settings.chain;
            chain.seed = derive_seed(settings.chain.seed, 1000 + rep);
            chain.execution = Execution::serial;
            const PosteriorDraws draws = run_chain(model, chain);
            result.reports[rep] =
                evaluate_replication(model, draws, ds.truth, evaluation_grid(ds.truth), settings.scale);
            for (const auto& b : draws.blocks) result.acceptance[rep].push_back(b.acceptance_rate());
        } catch (const std::exception& e) {
            errors[rep] = e.what();
        }
    }
    for (std::size_t r = 0; r < reps; ++r) {
        if (!errors[r].empty()) throw NumericalError("replication " + std::to_string(r) + ": " + errors[r]);
    }

    result.summary = summarize_study(result.reports);
    double all = 0.0, zero = 0.0, nonzero = 0.0, width = 0.0;
    std::size_t n_zero = 0, n_nonzero = 0;
    for (const auto& s : result.summary) {
        all += s.coverage;
        width += s.width;
        if (s.zero_truth) {
            zero += s.coverage;
            ++n_zero;
        } else {
            nonzero += s.coverage;
            ++n_nonzero;
        }
    }
    const auto pairs = static_cast<double>(result.summary.size());
    result.coverage = all / pairs;
    result.width = width / pairs;
    result.coverage_zero = n_zero ? zero / static_cast<double>(n_zero) : std::nan("");
    result.coverage_nonzero = n_nonzero ? nonzero / static_cast<double>(n_nonzero) : std::nan("");
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

void write_study(const StudyResult& result, const StudySettings& settings, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "curves.csv");
        out << "replication,pair,x,truth,mean,lower,upper,covered\n";
        for (std::size_t r = 0; r < result.reports.size(); ++r) {
            const auto& rep = result.reports[r];
            for (const auto& c : rep.pairs) {
                for (std::size_t g = 0; g < rep.grid.size(); ++g) {
                    const bool covered = c.lower[g] <= c.truth[g] && c.truth[g] <= c.upper[g];
                    out << r << ',' << c.name << ',' << format_double(rep.grid[g]) << ',' << format_double(c.truth[g])
                        << ',' << format_double(c.mean[g]) << ',' << format_double(c.lower[g]) << ','
                        << format_double(c.upper[g]) << ',' << (covered ? 1 : 0) << '\n';
                }
            }
        }
    }
    {
        std::ofstream out(dir / "summary.csv");
        out << "pair,zero_truth,mse_median,mse_q025,mse_q975,coverage,width,median_abs_error,"
               "median_abs_posterior_mean\n";
        for (const auto& s : result.summary) {
            out << s.name << ',' << (s.zero_truth ? 1 : 0) << ',' << format_double(s.mse_median) << ','
                << format_double(s.mse_lower) << ',' << format_double(s.mse_upper) << ','
                << format_double(s.coverage) << ',' << format_double(s.width) << ','
                << format_double(s.median_abs_error) << ',' << format_double(s.median_abs_posterior_mean) << '\n';
        }
    }
    nlohmann::json j;
    j["design"] = design_name(settings.design.tag);
    j["n"] = settings.design.n;
    j["replications"] = settings.design.replications;
    j["seed"] = settings.design.seed;
    j["chain"] = {{"iterations", settings.chain.iterations},
                  {"burnin", settings.chain.burnin},
                  {"thin", settings.chain.thin},
                  {"seed", settings.chain.seed}};
    j["scale"] = settings.scale == CurveScale::spearman ? "spearman" : "correlation";
    j["coverage"] = result.coverage;
    j["coverage_zero_pairs"] = result.coverage_zero;
    j["coverage_nonzero_pairs"] = result.coverage_nonzero;
    j["band_width"] = result.width;
    std::ofstream(dir / "study.json") << j.dump(2) << '\n';

    // Replication-averaged posterior mean against the truth, one plot per pair.
    if (result.reports.empty()) return;
    const auto& first = result.reports.front();
    for (std::size_t m = 0; m < first.pairs.size(); ++m) {
        std::vector<double> avg(first.grid.size(), 0.0), lo(avg), hi(avg);
        for (const auto& rep : result.reports) {
            for (std::size_t g = 0; g < avg.size(); ++g) {
                avg[g] += rep.pairs[m].mean[g] / static_cast<double>(result.reports.size());
                lo[g] += rep.pairs[m].lower[g] / static_cast<double>(result.reports.size());
                hi[g] += rep.pairs[m].upper[g] / static_cast<double>(result.reports.size());
            }
        }
        LinePlot plot;
        plot.title = first.pairs[m].name;
        plot.x_label = "x";
        plot.x = first.grid;
        plot.series = {{"truth", first.pairs[m].truth, false}, {"posterior mean", avg, false},
                       {"2.5%", lo, true}, {"97.5%", hi, true}};
        write_svg(plot, dir / (first.pairs[m].name + ".svg"));
    }
}

}  // namespace mvgamlss
