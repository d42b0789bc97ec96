// passfpca: simulate, fit, ratio and bench subcommands.
//
// Exit codes: 0 success, 2 usage, 3 I/O, 4 parse, 5 estimation,
// 6 benchmark failure under --strict.

#include "passfpca/io.hpp"
#include "passfpca/passfpca.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

using namespace passfpca;
using io::json;

enum Exit : int { ok = 0, usage = 2, io_failure = 3, parse_failure = 4, estimation = 5, strict_failure = 6 };

template <typename Enum>
std::map<std::string, Enum> enum_map(std::initializer_list<Enum> values) {
    std::map<std::string, Enum> m;
    for (Enum v : values) m.emplace(to_string(v), v);
    return m;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    SimulationConfig config;
    std::uint64_t replicate = 0;
    std::string out = "curves.csv";
    std::string truth = "truth.csv";
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
    auto* cmd = app.add_subcommand("simulate", "Draw one sample from the Fourier simulation model");
    cmd->add_option("--law", a.config.score_law, "Score law")
        ->transform(CLI::CheckedTransformer(enum_map({ScoreLaw::gaussian, ScoreLaw::multivariate_t, ScoreLaw::frechet,
                                                      ScoreLaw::lognormal, ScoreLaw::chisquare})))
        ->capture_default_str();
    cmd->add_option("--outliers", a.config.outlier_scheme, "Outlier scheme")
        ->transform(CLI::CheckedTransformer(enum_map({OutlierScheme::none, OutlierScheme::ol1, OutlierScheme::ol2})))
        ->capture_default_str();
    cmd->add_option("--n", a.config.n, "Number of curves")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--n-points", a.config.n_points, "Grid size N (t_j = j/N)")->check(CLI::Range(2, 1 << 20))->capture_default_str();
    cmd->add_option("--outlier-fraction", a.config.outlier_fraction, "Fraction of contaminated curves")
        ->check(CLI::Range(0.0, 0.4999999))
        ->capture_default_str();
    cmd->add_option("--noise-sd", a.config.noise_sd, "Measurement noise sd")->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--seed", a.config.seed, "Random seed")->capture_default_str();
    cmd->add_option("--replicate", a.replicate, "Replicate index within the seed")->capture_default_str();
    cmd->add_option("-o,--out", a.out, "Curves CSV")->capture_default_str();
    cmd->add_option("--truth", a.truth, "Truth CSV")->capture_default_str();
}

int run_simulate(const SimulateArgs& a) {
    auto [sample, truth] = generate(a.config, a.replicate);
    io::write_curves_csv(a.out, sample);
    io::write_truth_csv(a.truth, truth);
    return ok;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
    std::string input;
    std::string method = "pass";
    std::string smoothing = "none";
    std::string ratio;
    std::size_t q = 4;
    double trim = kDefaultTrimFraction;
    double tol = kDefaultRatioTol;
    int max_iter = kDefaultRatioMaxIter;
    std::optional<double> penalty;
    std::size_t basis_size = 15;
    std::string eigenfunctions = "eigenfunctions.csv";
    std::string result = "result.json";
};

void add_fit(CLI::App& app, FitArgs& a) {
    auto* cmd = app.add_subcommand("fit", "Estimate eigenfunctions, eigenvalues and eigenratios from a curves CSV");
    cmd->add_option("input", a.input, "Curves CSV (curve_id,t_1,...,t_N)")->required();
    cmd->add_option("--method", a.method, "Estimator")->check(CLI::IsMember({"pass", "cov", "mspc"}))->capture_default_str();
    cmd->add_option("--smoothing", a.smoothing, "Noise handling")
        ->check(CLI::IsMember({"none", "pre_smooth", "smooth_cf"}))
        ->capture_default_str();
    cmd->add_option("--ratio", a.ratio, "Ratio solver (default: mc for pass, classical for cov, none for mspc)")
        ->check(CLI::IsMember({"none", "mc", "elliptical", "classical"}));
    cmd->add_option("--q", a.q, "Number of components")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--trim", a.trim, "Pair trimming fraction for the mc solver")->check(CLI::Range(0.0, 0.1))->capture_default_str();
    cmd->add_option("--tol", a.tol, "Fixed-point tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--max-iter", a.max_iter, "Fixed-point iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--penalty", a.penalty, "Smoothing penalty (default: GCV)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--basis-size", a.basis_size, "Marginal B-spline count for smooth_cf")->check(CLI::Range(4, 100000))->capture_default_str();
    cmd->add_option("--eigenfunctions", a.eigenfunctions, "Output eigenfunctions CSV")->capture_default_str();
    cmd->add_option("--result", a.result, "Output result JSON")->capture_default_str();
}

MethodSpec fit_method(const FitArgs& a) {
    std::string text = a.method + "/" + (a.smoothing == "none" ? std::string("raw") : a.smoothing);
    if (!a.ratio.empty()) text += "/" + a.ratio;
    try {
        return MethodSpec::parse(text);
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }
}

/// Eigen-pairs with eigenvalue above this fraction of the largest count
/// toward the rank.
constexpr double kRankTolerance = 1e-10;

EigenSystem truncate_to_rank(const EigenSystem& sys) {
    std::size_t rank = 0;
    const double top = sys.eigenvalues.size() ? sys.eigenvalues(0) : 0.0;
    for (Eigen::Index k = 0; k < sys.eigenvalues.size(); ++k)
        if (sys.eigenvalues(k) > kRankTolerance * top) ++rank;
    if (rank == 0) throw DegenerateSampleError("fit: estimated surface is zero");
    if (rank == sys.q) return sys;
    const auto r = static_cast<Eigen::Index>(rank);
    return EigenSystem{sys.grid, sys.eigenvalues.head(r), sys.eigenfunctions.leftCols(r), rank};
}

int run_fit(const FitArgs& a) {
    const MethodSpec method = fit_method(a);
    const FunctionalSample raw = io::read_curves_csv(a.input);
    if (raw.size() < 2) throw InsufficientSampleError("fit: need at least 2 curves");
    if (a.q > raw.grid().n_points()) throw UsageError("fit: --q exceeds the grid size");

    BenchmarkSettings settings;
    settings.q = a.q;
    settings.trim_fraction = a.trim;
    settings.tol = a.tol;
    settings.max_iter = a.max_iter;
    settings.basis_size = a.basis_size;
    settings.penalty = a.penalty;
    detail::SmootherCache smoothers;
    detail::ReplicateContext ctx(raw, settings, smoothers);

    const EigenSystem sys = truncate_to_rank(ctx.eigensystem(method.estimator, method.preprocessing));
    const FunctionalSample& sample = ctx.working_sample(method.preprocessing);

    json doc;
    doc["input"] = a.input;
    doc["method"] = method.name();
    doc["n_curves"] = raw.size();
    doc["n_points"] = raw.grid().n_points();
    doc["q_requested"] = a.q;
    doc["q"] = sys.q;
    doc["eigenvalues"] = io::to_json(sys.eigenvalues);
    json cp = json::array();
    for (std::size_t k = 1; k <= sys.q; ++k) cp.push_back(cpve(sys.eigenvalues, k));
    doc["cpve_within_q"] = cp;
    doc["smoothing"] = {{"scheme", to_string(method.preprocessing)},
                        {"penalty", a.penalty ? json(*a.penalty) : json("gcv")},
                        {"basis_size", a.basis_size}};
    doc["ratios"] = nullptr;
    doc["pve_first"] = nullptr;
    doc["diagnostics"] = json::object();

    const Vector init = ctx.initial_ratios(method.preprocessing).head(static_cast<Eigen::Index>(sys.q));
    std::optional<EigenratioEstimate> estimate;
    switch (method.ratio) {
        case RatioSolver::none:
            break;
        case RatioSolver::classical: {
            const Vector r = classical_ratios(sys.eigenvalues);
            doc["ratios"] = {{"method", "classical"}, {"ratios", io::to_json(r)}};
            doc["pve_first"] = pve_from_ratios(r);
            break;
        }
        case RatioSolver::monte_carlo: {
            const PairScores ps = pair_scores(sample, sys, sys.q, a.trim);
            estimate = eigenratio_mc(ps, sys.eigenvalues, init, a.tol, a.max_iter);
            doc["diagnostics"]["pairs"] = ps.pair_count();
            doc["diagnostics"]["usable_pairs"] = ps.usable.size();
            doc["diagnostics"]["trim_fraction"] = a.trim;
            if (sys.q > 1 && estimate->converged) {
                doc["diagnostics"]["convergence_condition"] = io::to_json(convergence_condition(ps, estimate->ratios.tail(sys.q - 1)));
            }
            break;
        }
        case RatioSolver::elliptical:
            estimate = eigenratio_elliptical(sys.eigenvalues, init, a.tol, a.max_iter);
            break;
    }
    if (estimate) {
        doc["ratios"] = io::to_json(*estimate);
        doc["pve_first"] = pve_from_ratios(estimate->ratios);
        if (!estimate->converged) {
            io::write_json(a.result, doc);
            throw ConvergenceError("fit: ratio solver did not converge in " + std::to_string(a.max_iter) + " iterations",
                                   estimate->ratios);
        }
    }

    io::write_eigenfunctions_csv(a.eigenfunctions, sys);
    io::write_json(a.result, doc);
    return ok;
}

// ---------------------------------------------------------------------------
// ratio

struct RatioArgs {
    std::string input;
    std::string solver = "both";
    std::size_t q = 4;
    double trim = kDefaultTrimFraction;
    double tol = kDefaultRatioTol;
    int max_iter = kDefaultRatioMaxIter;
    std::string result;
};

void add_ratio(CLI::App& app, RatioArgs& a) {
    auto* cmd = app.add_subcommand("ratio", "PASS eigenratios and the convergence diagnostic for a curves CSV");
    cmd->add_option("input", a.input, "Curves CSV (curve_id,t_1,...,t_N)")->required();
    cmd->add_option("--solver", a.solver, "Ratio solver")->check(CLI::IsMember({"mc", "elliptical", "both"}))->capture_default_str();
    cmd->add_option("--q", a.q, "Number of components")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--trim", a.trim, "Pair trimming fraction")->check(CLI::Range(0.0, 0.1))->capture_default_str();
    cmd->add_option("--tol", a.tol, "Fixed-point tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--max-iter", a.max_iter, "Fixed-point iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--result", a.result, "Output JSON (default: standard output)");
}

int run_ratio(const RatioArgs& a) {
    const FunctionalSample sample = io::read_curves_csv(a.input);
    if (a.q > sample.grid().n_points()) throw UsageError("ratio: --q exceeds the grid size");
    const EigenSystem sys = truncate_to_rank(eigendecompose(pass_covariance(sample), a.q));
    Vector init = Vector::Ones(static_cast<Eigen::Index>(sys.q));
    if (sample.size() >= 2) {
        const Vector c = classical_ratios(eigendecompose(sample_covariance(sample), sys.q).eigenvalues);
        if (c.allFinite() && (c.array() > 0.0).all()) init = c;
    }

    json doc;
    doc["input"] = a.input;
    doc["q"] = sys.q;
    doc["pass_eigenvalues"] = io::to_json(sys.eigenvalues);
    bool converged = true;
    if (a.solver != "elliptical") {
        const PairScores ps = pair_scores(sample, sys, sys.q, a.trim);
        const EigenratioEstimate e = eigenratio_mc(ps, sys.eigenvalues, init, a.tol, a.max_iter);
        doc["mc"] = io::to_json(e);
        doc["mc"]["pve_first"] = pve_from_ratios(e.ratios);
        doc["mc"]["trim_fraction"] = a.trim;
        if (sys.q > 1 && e.converged) doc["mc"]["convergence_condition"] = io::to_json(convergence_condition(ps, e.ratios.tail(sys.q - 1)));
        converged &= e.converged;
    }
    if (a.solver != "mc") {
        const EigenratioEstimate e = eigenratio_elliptical(sys.eigenvalues, init, a.tol, a.max_iter);
        doc["elliptical"] = io::to_json(e);
        doc["elliptical"]["pve_first"] = pve_from_ratios(e.ratios);
        converged &= e.converged;
    }

    if (a.result.empty()) std::cout << doc.dump(2) << '\n';
    else io::write_json(a.result, doc);
    if (!converged) {
        std::cerr << "passfpca: ratio solver did not converge in " << a.max_iter << " iterations\n";
        return estimation;
    }
    return ok;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
    std::string config;
    std::optional<std::size_t> replications;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string results;
    std::string summary;
    bool strict = false;
};

void add_bench(CLI::App& app, BenchArgs& a) {
    auto* cmd = app.add_subcommand("bench", "Run a simulation benchmark described by a JSON config");
    cmd->add_option("config", a.config, "Benchmark config JSON")->required();
    cmd->add_option("--replications", a.replications, "Override the replication count")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", a.seed, "Override the seed");
    cmd->add_option("--threads", a.threads, "Worker threads (0: all cores); results do not depend on it");
    cmd->add_option("--results", a.results, "Results CSV (default: config output.results_csv or bench_results.csv)");
    cmd->add_option("--summary", a.summary, "Summary JSON (default: config output.summary_json or bench_summary.json)");
    cmd->add_flag("--strict", a.strict, "Exit 6 if any replicate fails");
}

int run_bench(const BenchArgs& a) {
    io::BenchmarkConfig cfg = io::read_benchmark_config(a.config);
    if (a.replications) cfg.replications = *a.replications;
    if (a.seed) cfg.seed = *a.seed;
    if (a.threads) cfg.settings.threads = *a.threads;
    const std::string results = !a.results.empty() ? a.results : cfg.results_csv.value_or("bench_results.csv");
    const std::string summary = !a.summary.empty() ? a.summary : cfg.summary_json.value_or("bench_summary.json");

    const BenchmarkTable table = run_benchmark(cfg.configs, cfg.methods, cfg.replications, cfg.seed, cfg.settings);
    io::write_benchmark_csv(results, table);
    io::write_json(summary, io::benchmark_summary(table, cfg.settings));

    std::size_t flagged = 0;
    for (const BenchmarkRow& r : table.rows) {
        if (r.failures == 0) continue;
        ++flagged;
        std::cerr << "passfpca: warning: " << to_string(r.config.score_law) << '/' << to_string(r.config.outlier_scheme)
                  << " noise_sd=" << r.config.noise_sd << ' ' << r.method << ": " << r.failures << " of "
                  << table.replications << " replicates failed" << (r.failed ? " (cell failed)" : "") << '\n';
    }
    return a.strict && flagged > 0 ? strict_failure : ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust functional PCA with the pairwise spatial sign covariance"};
    app.require_subcommand(1);
    SimulateArgs simulate;
    FitArgs fit;
    RatioArgs ratio;
    BenchArgs bench;
    add_simulate(app, simulate);
    add_fit(app, fit);
    add_ratio(app, ratio);
    add_bench(app, bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (app.got_subcommand("simulate")) return run_simulate(simulate);
        if (app.got_subcommand("fit")) return run_fit(fit);
        if (app.got_subcommand("ratio")) return run_ratio(ratio);
        if (app.got_subcommand("bench")) return run_bench(bench);
    } catch (const UsageError& e) {
        std::cerr << "passfpca: usage error: " << e.what() << '\n';
        return usage;
    } catch (const IoError& e) {
        std::cerr << "passfpca: I/O error: " << e.what() << '\n';
        return io_failure;
    } catch (const ParseError& e) {
        std::cerr << "passfpca: parse error: " << e.what() << '\n';
        return parse_failure;
    } catch (const Error& e) {
        std::cerr << "passfpca: estimation error: " << e.what() << '\n';
        return estimation;
    } catch (const std::exception& e) {
        std::cerr << "passfpca: error: " << e.what() << '\n';
        return estimation;
    }
    return usage;
}
