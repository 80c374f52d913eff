#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mvgamlss {

// Column-named numeric table. Integer-valued columns (counts, region ids)
// are stored as doubles.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<std::string> names, Eigen::MatrixXd values);

    // Header row required. Rows with empty or NA fields are rejected with a
    // ValidationError listing their line numbers.
    static Dataset read_csv(const std::filesystem::path& path);
    static Dataset parse_csv(std::string_view text, std::string_view source = "<memory>");
    void write_csv(const std::filesystem::path& path) const;

    std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }
    const std::vector<std::string>& names() const { return names_; }
    const Eigen::MatrixXd& values() const { return values_; }

    bool has_column(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;  // throws ValidationError
    std::span<const double> column(std::string_view name) const;

private:
    std::vector<std::string> names_;
    Eigen::MatrixXd values_;
};

// Reference value of a covariate for slice plots: the mode for binary or
// few-level integer columns (at most 10 distinct integers), the mean otherwise.
double reference_value(std::span<const double> column);

// One row per grid value of `covariate`; every other column is held at its
// reference value unless listed in `overrides`.
Dataset slice_data(const Dataset& data, std::string_view covariate, std::span<const double> grid,
                   const std::map<std::string, double>& overrides = {});

// Equidistant grid of `points` values on [lower, upper].
std::vector<double> linear_grid(double lower, double upper, std::size_t points);

// Shortest decimal text that round-trips a double exactly (17 significant digits).
std::string format_double(double x);

}  // namespace mvgamlss
