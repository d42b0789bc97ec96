#pragma once

// Error metrics for estimated eigenfunctions and eigenratios, and the
// replication harness that runs estimators over simulated samples.

#include "passfpca/eigenratio.hpp"
#include "passfpca/errors.hpp"
#include "passfpca/estimators.hpp"
#include "passfpca/grid.hpp"
#include "passfpca/simgen.hpp"
#include "passfpca/smoothing.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace passfpca {

/// estimate * sign(<estimate, truth>); a zero inner product keeps the sign.
inline Vector align_sign(const Vector& estimate, const Vector& truth, const Grid& grid) {
    return inner_product(estimate, truth, grid) < 0.0 ? Vector(-estimate) : estimate;
}

struct ReplicationResult {
    std::string method;
    SimulationConfig config;
    std::size_t replications = 0;              ///< attempted
    std::vector<Vector> first_eigenfunctions;  ///< successful replicates only
    std::vector<Vector> ratios;                ///< may be empty when the method has no ratio solver
};

struct EigenfunctionError {
    double mse = 0.0;
    double bias = 0.0;
};

/// Mean integrated squared error and bias norm of sign-aligned estimates.
inline EigenfunctionError eigenfunction_mse(const std::vector<Vector>& estimates, const Vector& truth, const Grid& grid) {
    if (estimates.empty()) throw InsufficientSampleError("eigenfunction_mse: no replicates");
    Vector mean = Vector::Zero(truth.size());
    double sq = 0.0;
    for (const Vector& e : estimates) {
        const Vector aligned = align_sign(e, truth, grid);
        const Vector diff = aligned - truth;
        sq += inner_product(diff, diff, grid);
        mean += aligned;
    }
    const auto count = static_cast<double>(estimates.size());
    mean /= count;
    return {sq / count, l2_norm((mean - truth).eval(), grid)};
}

inline EigenfunctionError eigenfunction_mse(const ReplicationResult& results, const GroundTruth& truth, const Grid& grid) {
    return eigenfunction_mse(results.first_eigenfunctions, truth.eigenfunctions.col(0), grid);
}

/// PVE of the first component implied by a ratio vector (ratios(0) == 1).
inline double pve_from_ratios(const Vector& ratios) { return 1.0 / ratios.sum(); }

inline double true_pve(const Vector& eigenvalues) { return eigenvalues(0) / eigenvalues.sum(); }

/// Mean squared error of the first-component PVE.
inline double pve_error(const std::vector<Vector>& ratio_estimates, const Vector& truth_eigenvalues) {
    if (ratio_estimates.empty()) throw InsufficientSampleError("pve_error: no replicates");
    const double target = true_pve(truth_eigenvalues);
    double acc = 0.0;
    for (const Vector& r : ratio_estimates) {
        const double e = pve_from_ratios(r) - target;
        acc += e * e;
    }
    return acc / static_cast<double>(ratio_estimates.size());
}

inline double median(std::vector<double> values) {
    if (values.empty()) throw InsufficientSampleError("median of nothing");
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

// ---------------------------------------------------------------------------
// Benchmark harness

enum class Estimator { pass, cov, mspc };
enum class Preprocessing { raw, pre_smooth, smooth_cf };
enum class RatioSolver { none, monte_carlo, elliptical, classical };

inline const char* to_string(Estimator e) {
    switch (e) {
        case Estimator::pass: return "pass";
        case Estimator::cov: return "cov";
        case Estimator::mspc: return "mspc";
    }
    return "?";
}

inline const char* to_string(Preprocessing p) {
    switch (p) {
        case Preprocessing::raw: return "raw";
        case Preprocessing::pre_smooth: return "pre_smooth";
        case Preprocessing::smooth_cf: return "smooth_cf";
    }
    return "?";
}

inline const char* to_string(RatioSolver r) {
    switch (r) {
        case RatioSolver::none: return "none";
        case RatioSolver::monte_carlo: return "mc";
        case RatioSolver::elliptical: return "elliptical";
        case RatioSolver::classical: return "classical";
    }
    return "?";
}

/// One benchmark method, written `estimator[/preprocessing[/ratio]]`, e.g.
/// `pass`, `cov/smooth_cf`, `pass/raw/elliptical`.  The ratio solver
/// defaults to `mc` for pass, `classical` for cov and `none` for mspc.
struct MethodSpec {
    Estimator estimator = Estimator::pass;
    Preprocessing preprocessing = Preprocessing::raw;
    RatioSolver ratio = RatioSolver::monte_carlo;

    std::string name() const {
        return std::string(to_string(estimator)) + "/" + to_string(preprocessing) + "/" + to_string(ratio);
    }

    static MethodSpec parse(std::string_view text) {
        std::vector<std::string_view> parts;
        std::size_t start = 0;
        while (true) {
            const std::size_t slash = text.find('/', start);
            parts.push_back(text.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start));
            if (slash == std::string_view::npos) break;
            start = slash + 1;
        }
        if (parts.size() > 3) throw DomainError("method '" + std::string(text) + "': too many components");
        MethodSpec m;
        if (parts[0] == "pass") {
            m.estimator = Estimator::pass;
            m.ratio = RatioSolver::monte_carlo;
        } else if (parts[0] == "cov") {
            m.estimator = Estimator::cov;
            m.ratio = RatioSolver::classical;
        } else if (parts[0] == "mspc") {
            m.estimator = Estimator::mspc;
            m.ratio = RatioSolver::none;
        } else {
            throw DomainError("method '" + std::string(text) + "': unknown estimator");
        }
        if (parts.size() > 1) {
            if (parts[1] == "raw") m.preprocessing = Preprocessing::raw;
            else if (parts[1] == "pre_smooth") m.preprocessing = Preprocessing::pre_smooth;
            else if (parts[1] == "smooth_cf") m.preprocessing = Preprocessing::smooth_cf;
            else throw DomainError("method '" + std::string(text) + "': unknown preprocessing");
        }
        if (parts.size() > 2) {
            if (parts[2] == "none") m.ratio = RatioSolver::none;
            else if (parts[2] == "mc") m.ratio = RatioSolver::monte_carlo;
            else if (parts[2] == "elliptical") m.ratio = RatioSolver::elliptical;
            else if (parts[2] == "classical") m.ratio = RatioSolver::classical;
            else throw DomainError("method '" + std::string(text) + "': unknown ratio solver");
        }
        if (m.estimator == Estimator::mspc && m.preprocessing == Preprocessing::smooth_cf) {
            throw DomainError("method '" + std::string(text) + "': mspc has no surface-smoothing variant");
        }
        if (m.estimator != Estimator::pass &&
            (m.ratio == RatioSolver::monte_carlo || m.ratio == RatioSolver::elliptical)) {
            throw DomainError("method '" + std::string(text) + "': PASS ratio solvers need the pass estimator");
        }
        return m;
    }
};

struct BenchmarkSettings {
    std::size_t q = 4;
    double trim_fraction = kDefaultTrimFraction;
    double tol = kDefaultRatioTol;
    int max_iter = kDefaultRatioMaxIter;
    std::size_t basis_size = 15;
    std::optional<double> penalty;  ///< nullopt: GCV
    unsigned threads = 1;           ///< 0: hardware concurrency
};

struct BenchmarkRow {
    std::size_t config_index = 0;
    SimulationConfig config;
    std::string method;
    std::size_t successes = 0;
    std::size_t failures = 0;
    bool failed = false;  ///< no successful replicate
    double mse = std::nan("");
    double bias = std::nan("");
    double bias_squared = std::nan("");
    double pve_mse = std::nan("");     ///< NaN when the method has no ratio solver
    double pve_median = std::nan("");
};

struct BenchmarkTable {
    std::vector<BenchmarkRow> rows;
    std::size_t replications = 0;
    std::uint64_t seed = 0;

    const BenchmarkRow& find(std::size_t config_index, std::string_view method) const {
        for (const auto& r : rows)
            if (r.config_index == config_index && r.method == method) return r;
        throw DomainError("benchmark table has no row for " + std::string(method));
    }
};

/// Per-replicate outcome of one method.
struct MethodOutcome {
    bool ok = false;
    Vector first_eigenfunction;
    std::optional<Vector> ratios;
    std::string failure;
};

namespace detail {

/// Shared grid-level smoothers for one benchmark run.
struct SmootherCache {
    std::unique_ptr<CurveSmoother> curves;
    std::unique_ptr<SurfaceSmoother> surfaces;
};

/// Lazily computed intermediate results for one simulated sample.
class ReplicateContext {
public:
    ReplicateContext(FunctionalSample sample, const BenchmarkSettings& settings, const SmootherCache& smoothers)
        : raw_(std::move(sample)), settings_(settings), smoothers_(smoothers) {}

    const FunctionalSample& working_sample(Preprocessing p) {
        if (p != Preprocessing::pre_smooth) return raw_;
        if (!smoothed_) {
            SmoothingSpec spec{SmoothingScheme::pre_smooth, settings_.penalty, settings_.basis_size};
            smoothed_ = presmooth(raw_, spec, smoothers_.curves.get());
        }
        return *smoothed_;
    }

    const EigenSystem& eigensystem(Estimator e, Preprocessing p) {
        const auto key = std::make_pair(static_cast<int>(e), static_cast<int>(p));
        auto it = systems_.find(key);
        if (it != systems_.end()) return it->second;
        const FunctionalSample& sample = working_sample(p);
        EigenSystem sys;
        if (e == Estimator::mspc) {
            sys = mspc(sample, settings_.q);
        } else {
            CovarianceSurface surface = e == Estimator::pass ? pass_covariance(sample) : sample_covariance(sample);
            if (p == Preprocessing::smooth_cf) {
                SmoothingSpec spec{SmoothingScheme::smooth_cf, settings_.penalty, settings_.basis_size};
                surface = smooth_surface(remove_diagonal(std::move(surface)), spec, smoothers_.surfaces.get());
            }
            sys = eigendecompose(surface, settings_.q);
        }
        return systems_.emplace(key, std::move(sys)).first->second;
    }

    /// Initial ratios for the PASS solvers: face-value sample covariance
    /// ratios, all ones when those are unusable.
    Vector initial_ratios(Preprocessing p) {
        try {
            Vector init = classical_ratios(eigensystem(Estimator::cov, p).eigenvalues);
            if (init.allFinite() && (init.array() > 0.0).all()) return init;
        } catch (const Error&) {
        }
        return Vector::Ones(static_cast<Eigen::Index>(settings_.q));
    }

private:
    FunctionalSample raw_;
    std::optional<FunctionalSample> smoothed_;
    const BenchmarkSettings& settings_;
    const SmootherCache& smoothers_;
    std::map<std::pair<int, int>, EigenSystem> systems_;
};

inline MethodOutcome run_method(ReplicateContext& ctx, const MethodSpec& method, const BenchmarkSettings& settings) {
    MethodOutcome out;
    try {
        const EigenSystem& sys = ctx.eigensystem(method.estimator, method.preprocessing);
        out.first_eigenfunction = sys.eigenfunctions.col(0);
        switch (method.ratio) {
            case RatioSolver::none:
                break;
            case RatioSolver::classical:
                out.ratios = classical_ratios(sys.eigenvalues);
                break;
            case RatioSolver::monte_carlo: {
                const PairScores ps = pair_scores(ctx.working_sample(method.preprocessing), sys, settings.q, settings.trim_fraction);
                const EigenratioEstimate est = eigenratio_mc(ps, sys.eigenvalues, ctx.initial_ratios(method.preprocessing),
                                                             settings.tol, settings.max_iter);
                if (!est.converged) throw ConvergenceError("eigenratio_mc did not converge", est.ratios);
                out.ratios = est.ratios;
                break;
            }
            case RatioSolver::elliptical: {
                const EigenratioEstimate est = eigenratio_elliptical(sys.eigenvalues, ctx.initial_ratios(method.preprocessing),
                                                                     settings.tol, settings.max_iter);
                if (!est.converged) throw ConvergenceError("eigenratio_elliptical did not converge", est.ratios);
                out.ratios = est.ratios;
                break;
            }
        }
        out.ok = true;
    } catch (const Error& e) {
        out.ok = false;
        out.failure = e.what();
    }
    return out;
}

/// Calls body(i) for i in [0, count) on up to `threads` workers.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += threads) body(i);
        });
    }
}

}  // namespace detail

/// Runs every method on `replications` simulated samples of every config.
///
/// Replicate r of every config is drawn from streams keyed (seed, r), so
/// all methods of a config see the same samples and the table does not
/// depend on thread count.  Failed replicates are excluded and counted.
inline BenchmarkTable run_benchmark(const std::vector<SimulationConfig>& configs, const std::vector<MethodSpec>& methods,
                                    std::size_t replications, std::uint64_t seed, const BenchmarkSettings& settings = {}) {
    if (methods.empty()) throw DomainError("run_benchmark: method list is empty");
    if (configs.empty()) throw DomainError("run_benchmark: config list is empty");
    if (replications < 1) throw DomainError("run_benchmark: need at least one replication");

    BenchmarkTable table;
    table.replications = replications;
    table.seed = seed;

    for (std::size_t c = 0; c < configs.size(); ++c) {
        SimulationConfig config = configs[c];
        config.seed = seed;
        config.validate();
        const Grid grid = make_grid(config.n_points);
        const GroundTruth truth = fourier_truth(grid);

        detail::SmootherCache smoothers;
        bool need_curves = false;
        bool need_surfaces = false;
        for (const auto& m : methods) {
            need_curves |= m.preprocessing == Preprocessing::pre_smooth;
            need_surfaces |= m.preprocessing == Preprocessing::smooth_cf;
        }
        if (need_curves) smoothers.curves = std::make_unique<CurveSmoother>(grid.n_points());
        if (need_surfaces) smoothers.surfaces = std::make_unique<SurfaceSmoother>(grid, settings.basis_size);

        std::vector<std::vector<MethodOutcome>> outcomes(replications);
        detail::parallel_for(replications, settings.threads, [&](std::size_t r) {
            auto [sample, rep_truth] = generate(config, r);
            detail::ReplicateContext ctx(std::move(sample), settings, smoothers);
            outcomes[r].reserve(methods.size());
            for (const auto& m : methods) outcomes[r].push_back(detail::run_method(ctx, m, settings));
        });

        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            BenchmarkRow row;
            row.config_index = c;
            row.config = config;
            row.method = methods[mi].name();
            ReplicationResult result{row.method, config, replications, {}, {}};
            for (std::size_t r = 0; r < replications; ++r) {
                const MethodOutcome& o = outcomes[r][mi];
                if (!o.ok) {
                    ++row.failures;
                    continue;
                }
                ++row.successes;
                result.first_eigenfunctions.push_back(o.first_eigenfunction);
                if (o.ratios) result.ratios.push_back(*o.ratios);
            }
            row.failed = row.successes == 0;
            if (!row.failed) {
                const EigenfunctionError err = eigenfunction_mse(result, truth, grid);
                row.mse = err.mse;
                row.bias = err.bias;
                row.bias_squared = err.bias * err.bias;
                if (!result.ratios.empty()) {
                    row.pve_mse = pve_error(result.ratios, truth.eigenvalues);
                    std::vector<double> pves;
                    pves.reserve(result.ratios.size());
                    for (const Vector& v : result.ratios) pves.push_back(pve_from_ratios(v));
                    row.pve_median = median(std::move(pves));
                }
            }
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

}  // namespace passfpca
