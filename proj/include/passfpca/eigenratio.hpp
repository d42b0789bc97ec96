#pragma once

// Recovery of the eigenratios lambda_j(Gamma) / lambda_1(Gamma) from the
// PASS spectrum.
//
// PASS eigenvalues satisfy  kappa_j = E[ r_j U_j^2 / sum_k r_k U_k^2 ]  where
// r are the eigenratios and U the standardized projections of a pairwise
// difference onto the eigenfunctions.  Dividing the j-th equation by the
// first gives a fixed-point map for r with r_1 = 1:
//
//     r_k <- (kappa_k / kappa_1) * f_1(r) / f_k(r),
//     f_k(r) = E[ U_k^2 / sum_l r_l U_l^2 ].
//
// f_k is either averaged over empirical pair scores (no distributional
// assumption) or evaluated by a one-dimensional integral that is exact for
// Gaussian U (elliptical pairwise differences).

#include "passfpca/errors.hpp"
#include "passfpca/estimators.hpp"
#include "passfpca/grid.hpp"
#include "passfpca/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace passfpca {

/// Standardized projections of all pairwise differences x_i - x_j (i < j,
/// lexicographic order) onto the leading q eigenfunctions.
struct PairScores {
    std::size_t q = 0;
    Matrix scores;                                     ///< pairs x q, V_{ij,l}
    Vector standardizers;                              ///< s_l, mean squared retained projection
    double trim_fraction = 0.0;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> retained;  ///< per-component trimming mask
    std::vector<Eigen::Index> usable;                  ///< pairs retained in every component

    std::size_t pair_count() const noexcept { return static_cast<std::size_t>(scores.rows()); }
};

enum class RatioMethod { monte_carlo, elliptical };

inline const char* to_string(RatioMethod m) { return m == RatioMethod::monte_carlo ? "monte_carlo" : "elliptical"; }

struct EigenratioEstimate {
    Vector ratios;  ///< ratios(0) == 1
    int iterations = 0;
    bool converged = false;
    double final_delta = std::numeric_limits<double>::infinity();
    RatioMethod method = RatioMethod::monte_carlo;
};

/// Number of largest |projections| removed per component.
inline std::size_t trimmed_count(double trim_fraction, std::size_t pairs) {
    return static_cast<std::size_t>(std::ceil(trim_fraction * static_cast<double>(pairs) - 1e-9));
}

inline PairScores pair_scores(const FunctionalSample& sample, const EigenSystem& eigensystem, std::size_t q,
                              double trim_fraction) {
    if (sample.size() < 2) throw InsufficientSampleError("pair_scores: need at least 2 curves");
    if (q < 1 || q > eigensystem.q) {
        throw DimensionError("pair_scores: q must lie in [1, " + std::to_string(eigensystem.q) + "]");
    }
    if (!(trim_fraction >= 0.0 && trim_fraction <= 0.1)) {
        throw DomainError("pair_scores: trim_fraction must lie in [0, 0.1]");
    }
    if (!(eigensystem.grid == sample.grid())) throw DimensionError("pair_scores: grid mismatch");

    const auto n = static_cast<Eigen::Index>(sample.size());
    const auto qi = static_cast<Eigen::Index>(q);
    const Matrix proj = sample.values() * eigensystem.eigenfunctions.leftCols(qi) * sample.grid().spacing();

    const Eigen::Index pairs = n * (n - 1) / 2;
    Matrix raw(pairs, qi);
    Eigen::Index p = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j, ++p) raw.row(p) = proj.row(i) - proj.row(j);

    const std::size_t drop = trimmed_count(trim_fraction, static_cast<std::size_t>(pairs));
    if (drop >= static_cast<std::size_t>(pairs)) throw DomainError("pair_scores: trimming removes every pair");

    PairScores out;
    out.q = q;
    out.trim_fraction = trim_fraction;
    out.retained.setConstant(pairs, qi, true);
    out.standardizers.resize(qi);
    out.scores.resize(pairs, qi);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(pairs));
    for (Eigen::Index l = 0; l < qi; ++l) {
        if (drop > 0) {
            std::iota(order.begin(), order.end(), Eigen::Index{0});
            // Largest magnitude first, ties by pair index.
            std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(drop - 1), order.end(),
                             [&](Eigen::Index a, Eigen::Index b) {
                                 const double fa = std::abs(raw(a, l));
                                 const double fb = std::abs(raw(b, l));
                                 return fa > fb || (fa == fb && a < b);
                             });
            for (std::size_t k = 0; k < drop; ++k) out.retained(order[k], l) = false;
        }
        double acc = 0.0;
        double kept = 0.0;
        for (Eigen::Index r = 0; r < pairs; ++r) {
            if (!out.retained(r, l)) continue;
            acc += raw(r, l) * raw(r, l);
            kept += 1.0;
        }
        const double s = acc / kept;
        if (!(s > 0.0)) {
            throw DegenerateSampleError("pair_scores: component " + std::to_string(l + 1) + " has zero projections");
        }
        out.standardizers(l) = s;
        out.scores.col(l) = raw.col(l) / std::sqrt(s);
    }
    for (Eigen::Index r = 0; r < pairs; ++r)
        if (out.retained.row(r).all()) out.usable.push_back(r);
    if (out.usable.empty()) throw DegenerateSampleError("pair_scores: no pair survives trimming in all components");
    return out;
}

/// Eigenratios implied by a spectrum taken at face value: lambda_j / lambda_1.
inline Vector classical_ratios(const Vector& eigenvalues) {
    if (eigenvalues.size() == 0 || !(eigenvalues(0) > 0.0)) throw DomainError("classical_ratios: leading eigenvalue must be positive");
    return eigenvalues / eigenvalues(0);
}

namespace detail {

inline Vector pass_ratios(const Vector& pass_eigenvalues) {
    if (pass_eigenvalues.size() < 1) throw DimensionError("eigenratio: empty PASS spectrum");
    for (Eigen::Index j = 0; j < pass_eigenvalues.size(); ++j) {
        if (!(pass_eigenvalues(j) > 0.0)) throw DomainError("eigenratio: PASS eigenvalues must be positive");
        if (j > 0 && pass_eigenvalues(j) > pass_eigenvalues(j - 1) * (1.0 + 1e-12)) {
            throw DomainError("eigenratio: PASS eigenvalues must be nonincreasing");
        }
    }
    return pass_eigenvalues / pass_eigenvalues(0);
}

/// Runs r <- kappa .* f_1(r) ./ f(r) until the max-norm step is <= tol.
template <typename Expectations>
EigenratioEstimate fixed_point(const Vector& kappa, const Vector& init, double tol, int max_iter,
                               RatioMethod method, Expectations&& expectations) {
    if (init.size() != kappa.size()) throw DimensionError("eigenratio: init has wrong length");
    if ((init.array() <= 0.0).any() || !init.allFinite()) throw DomainError("eigenratio: init must be positive");

    EigenratioEstimate est;
    est.method = method;
    Vector current = init;
    current(0) = 1.0;
    for (int iter = 1; iter <= max_iter; ++iter) {
        const Vector f = expectations(current);
        Vector next(current.size());
        next(0) = 1.0;
        for (Eigen::Index k = 1; k < current.size(); ++k) next(k) = kappa(k) * f(0) / f(k);
        est.iterations = iter;
        if (!next.allFinite() || (next.array() <= 0.0).any()) {
            // Ran off to a non-positive or infinite iterate; report the last good one.
            est.final_delta = std::numeric_limits<double>::infinity();
            break;
        }
        est.final_delta = (next - current).cwiseAbs().maxCoeff();
        current = std::move(next);
        if (est.final_delta <= tol) {
            est.converged = true;
            break;
        }
    }
    est.ratios = std::move(current);
    return est;
}

}  // namespace detail

/// Empirical f_k: pair average of V_k^2 / (V_1^2 + sum_{l>=2} r_l V_l^2).
inline Vector monte_carlo_expectations(const PairScores& ps, const Vector& ratios) {
    const auto q = static_cast<Eigen::Index>(ps.q);
    Vector acc = Vector::Zero(q);
    double count = 0.0;
    for (const Eigen::Index p : ps.usable) {
        double denom = 0.0;
        for (Eigen::Index l = 0; l < q; ++l) denom += ratios(l) * ps.scores(p, l) * ps.scores(p, l);
        if (!(denom > 0.0)) continue;
        for (Eigen::Index k = 0; k < q; ++k) acc(k) += ps.scores(p, k) * ps.scores(p, k) / denom;
        count += 1.0;
    }
    if (count == 0.0) throw DegenerateSampleError("eigenratio: every usable pair has zero projection");
    return acc / count;
}

inline constexpr double kDefaultRatioTol = 1e-8;
inline constexpr int kDefaultRatioMaxIter = 500;
inline constexpr double kDefaultTrimFraction = 0.01;

/// Pair-score (distribution-free) eigenratio solver.  Non-convergence is
/// reported through the estimate, never thrown.
inline EigenratioEstimate eigenratio_mc(const PairScores& ps, const Vector& pass_eigenvalues, const Vector& init,
                                        double tol = kDefaultRatioTol, int max_iter = kDefaultRatioMaxIter) {
    if (static_cast<std::size_t>(pass_eigenvalues.size()) != ps.q) {
        throw DimensionError("eigenratio_mc: spectrum length differs from pair-score components");
    }
    const Vector kappa = detail::pass_ratios(pass_eigenvalues);
    return detail::fixed_point(kappa, init, tol, max_iter, RatioMethod::monte_carlo,
                               [&](const Vector& r) { return monte_carlo_expectations(ps, r); });
}

enum class QuadratureRule { adaptive, fixed };

/// E[ U_j^2 / sum_k r_k U_k^2 ] for i.i.d. standard normal U (0-based j),
/// via  (1/2) int_0^inf (1 + r_j v)^{-1} prod_k (1 + r_k v)^{-1/2} dv
/// after the substitution v = (t / (1 - t))^2.
inline double elliptical_expectation(const Vector& ratios, Eigen::Index j,
                                     QuadratureRule rule = QuadratureRule::adaptive) {
    if (ratios.size() < 1 || j < 0 || j >= ratios.size()) throw DimensionError("elliptical_expectation: bad index");
    if ((ratios.array() <= 0.0).any() || !ratios.allFinite()) {
        throw DomainError("elliptical_expectation: ratios must be positive and finite");
    }
    const Eigen::Index q = ratios.size();
    const double rj = ratios(j);
    auto integrand = [&](double t) {
        if (t >= 1.0) return 0.0;
        const double one_minus = 1.0 - t;
        const double s = t / one_minus;
        const double v = s * s;
        double log_prod = 0.0;
        for (Eigen::Index k = 0; k < q; ++k) log_prod += std::log1p(ratios(k) * v);
        // dv = 2 s dt / (1 - t)^2
        return s * std::exp(-0.5 * log_prod) / ((1.0 + rj * v) * one_minus * one_minus);
    };
    if (rule == QuadratureRule::fixed) return quadrature::integrate_fixed(integrand, 0.0, 1.0, 256);
    return quadrature::integrate_adaptive(integrand, 0.0, 1.0, 1e-11, 1e-11).value;
}

inline Vector elliptical_expectations(const Vector& ratios, QuadratureRule rule = QuadratureRule::adaptive) {
    Vector f(ratios.size());
    for (Eigen::Index k = 0; k < ratios.size(); ++k) f(k) = elliptical_expectation(ratios, k, rule);
    return f;
}

/// Eigenratio solver assuming Gaussian (elliptical) pairwise differences.
inline EigenratioEstimate eigenratio_elliptical(const Vector& pass_eigenvalues, const Vector& init,
                                                double tol = kDefaultRatioTol, int max_iter = kDefaultRatioMaxIter,
                                                QuadratureRule rule = QuadratureRule::adaptive) {
    const Vector kappa = detail::pass_ratios(pass_eigenvalues);
    return detail::fixed_point(kappa, init, tol, max_iter, RatioMethod::elliptical,
                               [&](const Vector& r) { return elliptical_expectations(r, rule); });
}

/// Local contraction check of the fixed-point map at x* (ratios 2..Q).
///
/// lhs(k) estimates  sum_l | -E[U_1^2 U_l^2 / D^2] / E[U_1^2 / D] + E[U_k^2 U_l^2 / D^2] / E[U_k^2 / D] |
/// with D = U_1^2 + sum_i x*_i U_{i+1}^2 and the sums over l = 2..Q; the
/// map contracts near x* when lhs(k) < 1 / x*_k for every k.
struct ConvergenceMargins {
    Vector lhs;
    Vector inverse_ratio;  ///< 1 / x*_k, capped at kInverseRatioCap
    Vector margin;         ///< inverse_ratio - lhs

    bool all_positive() const { return (margin.array() > 0.0).all(); }
};

inline constexpr double kInverseRatioCap = 1e12;

inline ConvergenceMargins convergence_condition(const PairScores& ps, const Vector& x_star) {
    const auto q = static_cast<Eigen::Index>(ps.q);
    if (x_star.size() != q - 1) throw DimensionError("convergence_condition: x* must have Q - 1 entries");
    if ((x_star.array() <= 0.0).any()) throw DomainError("convergence_condition: x* must be positive");

    Vector first_moment = Vector::Zero(q);    // E[U_k^2 / D]
    Matrix second_moment = Matrix::Zero(q, q);  // E[U_k^2 U_l^2 / D^2]
    double count = 0.0;
    for (const Eigen::Index p : ps.usable) {
        double d = ps.scores(p, 0) * ps.scores(p, 0);
        for (Eigen::Index l = 1; l < q; ++l) d += x_star(l - 1) * ps.scores(p, l) * ps.scores(p, l);
        if (!(d > 0.0)) continue;
        for (Eigen::Index k = 0; k < q; ++k) {
            const double uk = ps.scores(p, k) * ps.scores(p, k);
            first_moment(k) += uk / d;
            for (Eigen::Index l = 0; l < q; ++l) second_moment(k, l) += uk * ps.scores(p, l) * ps.scores(p, l) / (d * d);
        }
        count += 1.0;
    }
    if (count == 0.0) throw DegenerateSampleError("convergence_condition: no usable pairs");
    first_moment /= count;
    second_moment /= count;

    ConvergenceMargins out;
    out.lhs.resize(q - 1);
    out.inverse_ratio.resize(q - 1);
    for (Eigen::Index k = 1; k < q; ++k) {
        double lhs = 0.0;
        for (Eigen::Index l = 1; l < q; ++l) {
            lhs += std::abs(-second_moment(0, l) / first_moment(0) + second_moment(k, l) / first_moment(k));
        }
        out.lhs(k - 1) = lhs;
        out.inverse_ratio(k - 1) = std::min(1.0 / x_star(k - 1), kInverseRatioCap);
    }
    out.margin = out.inverse_ratio - out.lhs;
    return out;
}

/// Cumulative share of the first big_q eigenvalues in the total of all given.
inline double cpve(const Vector& eigenvalues, std::size_t big_q) {
    if (big_q < 1 || big_q > static_cast<std::size_t>(eigenvalues.size())) {
        throw DimensionError("cpve: Q must lie in [1, " + std::to_string(eigenvalues.size()) + "]");
    }
    const double total = eigenvalues.sum();
    if (!(total > 0.0)) throw DomainError("cpve: eigenvalues sum to zero");
    return eigenvalues.head(static_cast<Eigen::Index>(big_q)).sum() / total;
}

/// Smallest Q whose leading eigenvalues explain at least `threshold` of
/// `total_variance`.  The default total of 1 is the PASS trace, so a
/// truncated PASS spectrum can be passed as-is.
inline std::size_t rank_select(const Vector& eigenvalues, double threshold, double total_variance = 1.0) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("rank_select: threshold must lie in (0, 1)");
    if (!(total_variance > 0.0)) throw DomainError("rank_select: total variance must be positive");
    double acc = 0.0;
    for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
        acc += eigenvalues(j);
        if (acc / total_variance >= threshold - 1e-12) return static_cast<std::size_t>(j + 1);
    }
    throw UnreachableThresholdError("rank_select: retained eigenvalues explain only " +
                                    std::to_string(acc / total_variance) + " < " + std::to_string(threshold));
}

}  // namespace passfpca
