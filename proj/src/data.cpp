#include "mvgamlss/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "mvgamlss/errors.hpp"

namespace mvgamlss {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool parse_number(std::string_view field, double& out) {
    if (field.empty() || field == "NA" || field == "NaN" || field == "nan") return false;
    if (field.front() == '+') field.remove_prefix(1);
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(field.data(), end, out);
    return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

}  // namespace

Dataset::Dataset(std::vector<std::string> names, Eigen::MatrixXd values)
    : names_(std::move(names)), values_(std::move(values)) {
    if (static_cast<Eigen::Index>(names_.size()) != values_.cols()) {
        throw ValidationError("dataset: " + std::to_string(names_.size()) + " names for " +
                              std::to_string(values_.cols()) + " columns");
    }
}

Dataset Dataset::read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open data file '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str(), path.string());
}

Dataset Dataset::parse_csv(std::string_view text, std::string_view source) {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);  // UTF-8 BOM
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    const std::string src(source);
    if (lines.empty() || trim(lines[0]).empty()) throw ValidationError(src + ": missing header row");

    std::vector<std::string> names;
    for (auto f : split(lines[0])) {
        if (f.empty()) throw ValidationError(src + ": empty column name in header");
        names.emplace_back(f);
    }
    for (std::size_t a = 0; a < names.size(); ++a) {
        for (std::size_t b = a + 1; b < names.size(); ++b) {
            if (names[a] == names[b]) throw ValidationError(src + ": duplicate column '" + names[a] + "'");
        }
    }

    std::vector<double> cells;
    std::vector<std::size_t> bad_lines;
    std::size_t rows = 0;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (trim(lines[li]).empty()) continue;
        const auto fields = split(lines[li]);
        bool ok = fields.size() == names.size();
        std::vector<double> row(names.size(), 0.0);
        for (std::size_t c = 0; ok && c < names.size(); ++c) ok = parse_number(fields[c], row[c]);
        if (!ok) {
            bad_lines.push_back(li + 1);
            continue;
        }
        cells.insert(cells.end(), row.begin(), row.end());
        ++rows;
    }
    if (!bad_lines.empty()) {
        std::string msg = src + ": missing or non-numeric values on line(s)";
        for (std::size_t k = 0; k < std::min<std::size_t>(bad_lines.size(), 20); ++k) {
            msg += (k ? ", " : " ") + std::to_string(bad_lines[k]);
        }
        if (bad_lines.size() > 20) msg += ", ... (" + std::to_string(bad_lines.size()) + " rows)";
        throw ValidationError(msg);
    }
    Eigen::MatrixXd values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(names.size()));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < names.size(); ++c) {
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cells[r * names.size() + c];
        }
    }
    return Dataset(std::move(names), std::move(values));
}

void Dataset::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    for (std::size_t c = 0; c < names_.size(); ++c) out << (c ? "," : "") << names_[c];
    out << '\n';
    for (Eigen::Index r = 0; r < values_.rows(); ++r) {
        for (Eigen::Index c = 0; c < values_.cols(); ++c) out << (c ? "," : "") << format_double(values_(r, c));
        out << '\n';
    }
}

bool Dataset::has_column(std::string_view name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t Dataset::index_of(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ValidationError("column '" + std::string(name) + "' not found in data");
    return static_cast<std::size_t>(it - names_.begin());
}

std::span<const double> Dataset::column(std::string_view name) const {
    const auto c = static_cast<Eigen::Index>(index_of(name));
    return {values_.col(c).data(), rows()};
}

double reference_value(std::span<const double> column) {
    if (column.empty()) throw ValidationError("reference_value: empty column");
    std::map<double, std::size_t> counts;
    bool integral = true;
    for (double v : column) {
        if (v != std::floor(v)) integral = false;
        if (counts.size() <= 10) ++counts[v];
    }
    if (integral && counts.size() <= 10) {
        auto best = counts.begin();
        for (auto it = counts.begin(); it != counts.end(); ++it) {
            if (it->second > best->second) best = it;
        }
        return best->first;
    }
    double sum = 0.0;
    for (double v : column) sum += v;
    return sum / static_cast<double>(column.size());
}

Dataset slice_data(const Dataset& data, std::string_view covariate, std::span<const double> grid,
                   const std::map<std::string, double>& overrides) {
    const std::size_t target = data.index_of(covariate);
    for (const auto& [name, value] : overrides) data.index_of(name);
    Eigen::MatrixXd values(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(data.cols()));
    for (std::size_t c = 0; c < data.cols(); ++c) {
        const auto cc = static_cast<Eigen::Index>(c);
        if (c == target) {
            for (std::size_t r = 0; r < grid.size(); ++r) values(static_cast<Eigen::Index>(r), cc) = grid[r];
            continue;
        }
        const auto it = overrides.find(data.names()[c]);
        const double ref = it != overrides.end() ? it->second : reference_value(data.column(data.names()[c]));
        values.col(cc).setConstant(ref);
    }
    return Dataset(data.names(), std::move(values));
}

std::vector<double> linear_grid(double lower, double upper, std::size_t points) {
    if (points < 2) throw ArgumentError("linear_grid: need at least two points");
    std::vector<double> grid(points);
    for (std::size_t k = 0; k < points; ++k) {
        grid[k] = lower + (upper - lower) * static_cast<double>(k) / static_cast<double>(points - 1);
    }
    grid.back() = upper;
    return grid;
}

std::string format_double(double x) {
    if (std::isnan(x)) return "NA";
    char buf[40];
    const int len = std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf, static_cast<std::size_t>(len));
}

}  // namespace mvgamlss
