#pragma once

// File formats: wide curve CSV, truth and eigenfunction CSVs, benchmark
// tables, and the JSON run-configuration and result documents.
//
// Needs nlohmann/json (json.hpp) on the include path.

#include "passfpca/eigenratio.hpp"
#include "passfpca/errors.hpp"
#include "passfpca/estimators.hpp"
#include "passfpca/grid.hpp"
#include "passfpca/metrics.hpp"
#include "passfpca/simgen.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace passfpca::io {

using json = nlohmann::json;

/// Shortest-form %g rendering with `digits` significant digits.
inline std::string format_number(double x, int digits = 17) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

inline constexpr int kGridDigits = 12;

inline std::vector<std::string_view> split_fields(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

inline double parse_number(std::string_view field, std::size_t line) {
    field = trim(field);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError("not a number: '" + std::string(field) + "'", line);
    }
    return value;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// ---------------------------------------------------------------------------
// Curves

/// `curve_id,t_1,...,t_N` header (grid points at 12 significant digits),
/// then one row per curve.
inline void write_curves_csv(std::ostream& out, const FunctionalSample& sample) {
    const Grid& grid = sample.grid();
    out << "curve_id";
    for (Eigen::Index j = 0; j < grid.points().size(); ++j) out << ',' << format_number(grid.points()(j), kGridDigits);
    out << '\n';
    for (std::size_t i = 0; i < sample.size(); ++i) {
        out << i + 1;
        const auto row = sample.values().row(static_cast<Eigen::Index>(i));
        for (Eigen::Index j = 0; j < row.size(); ++j) out << ',' << format_number(row(j));
        out << '\n';
    }
}

/// Reads a wide curve CSV.  The header must list the grid j/N, j = 1..N.
inline FunctionalSample read_curves_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty input, expected a header row", 1);
    ++line_no;
    const auto header = split_fields(line);
    if (header.size() < 3) throw ParseError("header needs curve_id and at least two grid columns", line_no);
    if (trim(header[0]) != "curve_id") throw ParseError("first header column must be 'curve_id'", line_no);
    const std::size_t n_points = header.size() - 1;
    const Grid grid = make_grid(n_points);
    for (std::size_t j = 0; j < n_points; ++j) {
        const double t = parse_number(header[j + 1], line_no);
        if (std::abs(t - grid.points()(static_cast<Eigen::Index>(j))) > 1e-9) {
            throw ParseError("header column " + std::to_string(j + 2) + " is " + std::string(trim(header[j + 1])) +
                                 ", expected grid point " + format_number(grid.points()(static_cast<Eigen::Index>(j)), kGridDigits),
                             line_no);
        }
    }

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || trim(line) == "\r") continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()),
                             line_no);
        }
        std::vector<double> row(n_points);
        for (std::size_t j = 0; j < n_points; ++j) {
            row[j] = parse_number(fields[j + 1], line_no);
            if (!std::isfinite(row[j])) throw ParseError("non-finite value in column " + std::to_string(j + 2), line_no);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("no curves after the header", line_no);

    Matrix values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_points));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < n_points; ++j)
            values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return FunctionalSample(grid, std::move(values));
}

inline FunctionalSample read_curves_csv(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    return read_curves_csv(in);
}

inline void write_curves_csv(const std::filesystem::path& path, const FunctionalSample& sample) {
    std::ofstream out = open_output(path);
    write_curves_csv(out, sample);
    finish(out, path);
}

// ---------------------------------------------------------------------------
// Truth and eigenfunctions

/// Long format `quantity,index,value`: mean and phi_k per grid point,
/// eigenvalue per component, outlier_mask per curve (all 1-based).
inline void write_truth_csv(std::ostream& out, const GroundTruth& truth) {
    out << "quantity,index,value\n";
    for (Eigen::Index j = 0; j < truth.mean.size(); ++j) out << "mean," << j + 1 << ',' << format_number(truth.mean(j)) << '\n';
    for (Eigen::Index k = 0; k < truth.eigenfunctions.cols(); ++k)
        for (Eigen::Index j = 0; j < truth.eigenfunctions.rows(); ++j)
            out << "phi_" << k + 1 << ',' << j + 1 << ',' << format_number(truth.eigenfunctions(j, k)) << '\n';
    for (Eigen::Index k = 0; k < truth.eigenvalues.size(); ++k)
        out << "eigenvalue," << k + 1 << ',' << format_number(truth.eigenvalues(k)) << '\n';
    for (std::size_t i = 0; i < truth.outlier_mask.size(); ++i)
        out << "outlier_mask," << i + 1 << ',' << (truth.outlier_mask[i] ? 1 : 0) << '\n';
}

inline void write_truth_csv(const std::filesystem::path& path, const GroundTruth& truth) {
    std::ofstream out = open_output(path);
    write_truth_csv(out, truth);
    finish(out, path);
}

/// `t,phi_1,...,phi_Q`, one row per grid point.
inline void write_eigenfunctions_csv(std::ostream& out, const EigenSystem& sys) {
    out << 't';
    for (std::size_t k = 0; k < sys.q; ++k) out << ",phi_" << k + 1;
    out << '\n';
    for (Eigen::Index j = 0; j < sys.eigenfunctions.rows(); ++j) {
        out << format_number(sys.grid.points()(j), kGridDigits);
        for (Eigen::Index k = 0; k < sys.eigenfunctions.cols(); ++k) out << ',' << format_number(sys.eigenfunctions(j, k));
        out << '\n';
    }
}

inline void write_eigenfunctions_csv(const std::filesystem::path& path, const EigenSystem& sys) {
    std::ofstream out = open_output(path);
    write_eigenfunctions_csv(out, sys);
    finish(out, path);
}

inline json to_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline json to_json(const EigenratioEstimate& e) {
    return {{"method", to_string(e.method)},
            {"ratios", to_json(e.ratios)},
            {"converged", e.converged},
            {"iterations", e.iterations},
            {"final_delta", e.final_delta}};
}

inline json to_json(const ConvergenceMargins& m) {
    return {{"lhs", to_json(m.lhs)},
            {"inverse_ratio", to_json(m.inverse_ratio)},
            {"margin", to_json(m.margin)},
            {"all_positive", m.all_positive()}};
}

inline void write_json(const std::filesystem::path& path, const json& doc) {
    std::ofstream out = open_output(path);
    out << doc.dump(2) << '\n';
    finish(out, path);
}

// ---------------------------------------------------------------------------
// Benchmark configuration

struct BenchmarkConfig {
    std::vector<SimulationConfig> configs;
    std::vector<MethodSpec> methods;
    std::size_t replications = 200;
    std::uint64_t seed = 1;
    BenchmarkSettings settings;
    std::optional<std::string> results_csv;
    std::optional<std::string> summary_json;
};

namespace detail {

inline void reject_unknown(const json& object, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!object.is_object()) throw UsageError(std::string(where) + ": expected an object");
    for (const auto& [key, value] : object.items()) {
        bool known = false;
        for (std::string_view a : allowed) known |= key == a;
        if (!known) throw UsageError(std::string(where) + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get(const json& object, std::string_view where, const char* key, T fallback) {
    if (!object.contains(key)) return fallback;
    const json& v = object.at(key);
    const std::string path = std::string(where) + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw UsageError(path + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_unsigned()) throw UsageError(path + ": expected a nonnegative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw UsageError(path + ": expected a number");
    } else {
        if (!v.is_string()) throw UsageError(path + ": expected a string");
    }
    return v.get<T>();
}

inline std::vector<std::string> get_strings(const json& object, std::string_view where, const char* key,
                                            std::vector<std::string> fallback) {
    if (!object.contains(key)) return fallback;
    const json& v = object.at(key);
    const std::string path = std::string(where) + "." + key;
    if (!v.is_array()) throw UsageError(path + ": expected an array of strings");
    std::vector<std::string> out;
    for (const json& e : v) {
        if (!e.is_string()) throw UsageError(path + ": expected an array of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

inline std::vector<double> get_numbers(const json& object, std::string_view where, const char* key, std::vector<double> fallback) {
    if (!object.contains(key)) return fallback;
    const json& v = object.at(key);
    const std::string path = std::string(where) + "." + key;
    if (!v.is_array()) throw UsageError(path + ": expected an array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
        if (!e.is_number()) throw UsageError(path + ": expected an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

}  // namespace detail

/// Builds a benchmark run from a configuration document:
///
///     {
///       "replications": 200, "seed": 20240601,
///       "simulation": {"n": 200, "n_points": 101, "outlier_fraction": 0.05},
///       "scenarios": {"score_laws": [...], "outlier_schemes": [...], "noise_sd": [0]},
///       "methods": ["pass", "cov", "mspc", "pass/raw/elliptical"],
///       "settings": {"q": 4, "trim_fraction": 0.01, "tol": 1e-8, "max_iter": 500,
///                    "basis_size": 15, "penalty": null, "threads": 1},
///       "output": {"results_csv": "...", "summary_json": "..."}
///     }
///
/// Scenarios are the product noise_sd x outlier_schemes x score_laws, in
/// that nesting order.  Every key is optional except "methods"; unknown keys
/// raise UsageError.
inline BenchmarkConfig parse_benchmark_config(const json& doc) {
    using detail::get;
    detail::reject_unknown(doc, "config", {"replications", "seed", "simulation", "scenarios", "methods", "settings", "output"});
    BenchmarkConfig cfg;
    cfg.replications = get<std::size_t>(doc, "config", "replications", cfg.replications);
    if (cfg.replications < 1) throw UsageError("config.replications: must be at least 1");
    cfg.seed = get<std::uint64_t>(doc, "config", "seed", cfg.seed);

    SimulationConfig base;
    if (doc.contains("simulation")) {
        const json& s = doc.at("simulation");
        detail::reject_unknown(s, "config.simulation", {"n", "n_points", "outlier_fraction"});
        base.n = get<std::size_t>(s, "config.simulation", "n", base.n);
        base.n_points = get<std::size_t>(s, "config.simulation", "n_points", base.n_points);
        base.outlier_fraction = get<double>(s, "config.simulation", "outlier_fraction", base.outlier_fraction);
    }

    std::vector<std::string> laws{"gaussian"};
    std::vector<std::string> schemes{"none"};
    std::vector<double> noise{0.0};
    if (doc.contains("scenarios")) {
        const json& s = doc.at("scenarios");
        detail::reject_unknown(s, "config.scenarios", {"score_laws", "outlier_schemes", "noise_sd"});
        laws = detail::get_strings(s, "config.scenarios", "score_laws", laws);
        schemes = detail::get_strings(s, "config.scenarios", "outlier_schemes", schemes);
        noise = detail::get_numbers(s, "config.scenarios", "noise_sd", noise);
    }
    if (laws.empty() || schemes.empty() || noise.empty()) throw UsageError("config.scenarios: lists must be nonempty");
    for (double sd : noise) {
        for (const std::string& scheme : schemes) {
            const auto o = parse_outlier_scheme(scheme);
            if (!o) throw UsageError("config.scenarios.outlier_schemes: unknown scheme '" + scheme + "'");
            for (const std::string& law : laws) {
                const auto l = parse_score_law(law);
                if (!l) throw UsageError("config.scenarios.score_laws: unknown law '" + law + "'");
                SimulationConfig c = base;
                c.score_law = *l;
                c.outlier_scheme = *o;
                c.noise_sd = sd;
                c.seed = cfg.seed;
                try {
                    c.validate();
                } catch (const Error& e) {
                    throw UsageError(std::string("config: ") + e.what());
                }
                cfg.configs.push_back(c);
            }
        }
    }

    for (const std::string& m : detail::get_strings(doc, "config", "methods", {})) {
        try {
            cfg.methods.push_back(MethodSpec::parse(m));
        } catch (const DomainError& e) {
            throw UsageError(std::string("config.methods: ") + e.what());
        }
    }
    if (cfg.methods.empty()) throw UsageError("config.methods: method list is empty");

    if (doc.contains("settings")) {
        const json& s = doc.at("settings");
        const char* where = "config.settings";
        detail::reject_unknown(s, where, {"q", "trim_fraction", "tol", "max_iter", "basis_size", "penalty", "threads"});
        BenchmarkSettings& st = cfg.settings;
        st.q = get<std::size_t>(s, where, "q", st.q);
        st.trim_fraction = get<double>(s, where, "trim_fraction", st.trim_fraction);
        st.tol = get<double>(s, where, "tol", st.tol);
        st.max_iter = static_cast<int>(get<std::size_t>(s, where, "max_iter", static_cast<std::size_t>(st.max_iter)));
        st.basis_size = get<std::size_t>(s, where, "basis_size", st.basis_size);
        if (s.contains("penalty") && !s.at("penalty").is_null()) st.penalty = get<double>(s, where, "penalty", 0.0);
        st.threads = static_cast<unsigned>(get<std::size_t>(s, where, "threads", st.threads));
        if (st.q < 1) throw UsageError("config.settings.q: must be at least 1");
        if (!(st.trim_fraction >= 0.0 && st.trim_fraction <= 0.1)) throw UsageError("config.settings.trim_fraction: must lie in [0, 0.1]");
        if (!(st.tol > 0.0)) throw UsageError("config.settings.tol: must be positive");
        if (st.max_iter < 1) throw UsageError("config.settings.max_iter: must be at least 1");
        if (st.penalty && !(*st.penalty >= 0.0)) throw UsageError("config.settings.penalty: must be nonnegative");
    }

    if (doc.contains("output")) {
        const json& o = doc.at("output");
        detail::reject_unknown(o, "config.output", {"results_csv", "summary_json"});
        if (o.contains("results_csv")) cfg.results_csv = get<std::string>(o, "config.output", "results_csv", "");
        if (o.contains("summary_json")) cfg.summary_json = get<std::string>(o, "config.output", "summary_json", "");
    }
    return cfg;
}

inline BenchmarkConfig read_benchmark_config(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
    return parse_benchmark_config(doc);
}

// ---------------------------------------------------------------------------
// Benchmark output

inline constexpr std::string_view kBenchmarkColumns =
    "config_index,score_law,outlier_scheme,n,n_points,outlier_fraction,noise_sd,method,replications,successes,failures,"
    "failed,mse,bias,bias_squared,pve_mse,pve_median";

inline void write_benchmark_csv(std::ostream& out, const BenchmarkTable& table) {
    out << kBenchmarkColumns << '\n';
    for (const BenchmarkRow& r : table.rows) {
        out << r.config_index << ',' << to_string(r.config.score_law) << ',' << to_string(r.config.outlier_scheme) << ','
            << r.config.n << ',' << r.config.n_points << ',' << format_number(r.config.outlier_fraction) << ','
            << format_number(r.config.noise_sd) << ',' << r.method << ',' << table.replications << ',' << r.successes << ','
            << r.failures << ',' << (r.failed ? 1 : 0) << ',' << format_number(r.mse) << ',' << format_number(r.bias) << ','
            << format_number(r.bias_squared) << ',' << format_number(r.pve_mse) << ',' << format_number(r.pve_median) << '\n';
    }
}

inline void write_benchmark_csv(const std::filesystem::path& path, const BenchmarkTable& table) {
    std::ofstream out = open_output(path);
    write_benchmark_csv(out, table);
    finish(out, path);
}

inline json nullable(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json benchmark_summary(const BenchmarkTable& table, const BenchmarkSettings& settings) {
    json rows = json::array();
    std::size_t flagged = 0;
    for (const BenchmarkRow& r : table.rows) {
        flagged += r.failures > 0;
        rows.push_back({{"config_index", r.config_index},
                        {"score_law", to_string(r.config.score_law)},
                        {"outlier_scheme", to_string(r.config.outlier_scheme)},
                        {"n", r.config.n},
                        {"n_points", r.config.n_points},
                        {"outlier_fraction", r.config.outlier_fraction},
                        {"noise_sd", r.config.noise_sd},
                        {"method", r.method},
                        {"replications", table.replications},
                        {"successes", r.successes},
                        {"failures", r.failures},
                        {"failed", r.failed},
                        {"mse", nullable(r.mse)},
                        {"bias", nullable(r.bias)},
                        {"bias_squared", nullable(r.bias_squared)},
                        {"pve_mse", nullable(r.pve_mse)},
                        {"pve_median", nullable(r.pve_median)}});
    }
    return {{"seed", table.seed},
            {"replications", table.replications},
            {"settings",
             {{"q", settings.q},
              {"trim_fraction", settings.trim_fraction},
              {"tol", settings.tol},
              {"max_iter", settings.max_iter},
              {"basis_size", settings.basis_size},
              {"penalty", settings.penalty ? json(*settings.penalty) : json(nullptr)}}},
            {"rows_total", table.rows.size()},
            {"rows_flagged", flagged},
            {"rows", std::move(rows)}};
}

}  // namespace passfpca::io
