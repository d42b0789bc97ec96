#pragma once

// Covariance-type surfaces of a functional sample and their spectral
// decomposition: the classical sample covariance, the pairwise spatial sign
// (PASS) U-statistic, and the median spherical comparator.

#include "passfpca/errors.hpp"
#include "passfpca/grid.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

namespace passfpca {

enum class SurfaceKind { classical, pass, spherical };

inline const char* to_string(SurfaceKind k) {
    switch (k) {
        case SurfaceKind::classical: return "classical";
        case SurfaceKind::pass: return "pass";
        case SurfaceKind::spherical: return "spherical";
    }
    return "?";
}

/// Discretized N x N covariance-type surface.
///
/// When `diagonal_removed` is set the diagonal no longer carries an estimate:
/// straight after `remove_diagonal` it holds NaN, after `smooth_surface` it
/// holds the smooth extension of the off-diagonal fit.
struct CovarianceSurface {
    Grid grid;
    Matrix matrix;
    SurfaceKind kind = SurfaceKind::classical;
    bool diagonal_removed = false;
};

/// Leading eigenpairs on operator scale.  Columns of `eigenfunctions` have
/// unit quadrature norm and their largest-magnitude entry is positive.
struct EigenSystem {
    Grid grid;
    Vector eigenvalues;
    Matrix eigenfunctions;
    std::size_t q = 0;
};

namespace detail {

inline void require_curves(const FunctionalSample& sample, std::size_t min_n, const char* who) {
    if (sample.size() < min_n) {
        throw InsufficientSampleError(std::string(who) + ": need at least " + std::to_string(min_n) +
                                      " curves, got " + std::to_string(sample.size()));
    }
}

/// Copies the upper triangle onto the lower one after averaging the two.
inline void symmetrize(Matrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < j; ++i) {
            const double v = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = v;
            m(j, i) = v;
        }
    }
}

inline Vector column_means(const Matrix& x) {
    Vector mean(x.cols());
    const auto n = static_cast<double>(x.rows());
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) acc += x(i, t);
        mean(t) = acc / n;
    }
    return mean;
}

/// Flip each column so that its first largest-magnitude entry is positive.
inline void apply_sign_convention(Matrix& vectors) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
            if (std::abs(vectors(r, c)) > best) {
                best = std::abs(vectors(r, c));
                arg = r;
            }
        }
        if (vectors(arg, c) < 0.0) vectors.col(c) = -vectors.col(c);
    }
}

}  // namespace detail

inline Vector mean_function(const FunctionalSample& sample) {
    detail::require_curves(sample, 1, "mean_function");
    return detail::column_means(sample.values());
}

/// Unbiased sample covariance surface.  Summation runs over curves in index
/// order for every cell, so the result matches the textbook double loop.
inline CovarianceSurface sample_covariance(const FunctionalSample& sample) {
    detail::require_curves(sample, 2, "sample_covariance");
    const Matrix& x = sample.values();
    const Eigen::Index n = x.rows();
    const Eigen::Index N = x.cols();
    const Vector mean = detail::column_means(x);
    Matrix centred(n, N);
    for (Eigen::Index t = 0; t < N; ++t)
        for (Eigen::Index i = 0; i < n; ++i) centred(i, t) = x(i, t) - mean(t);

    const double denom = static_cast<double>(n - 1);
    Matrix cov(N, N);
    for (Eigen::Index s = 0; s < N; ++s) {
        for (Eigen::Index t = s; t < N; ++t) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) acc += centred(i, s) * centred(i, t);
            cov(s, t) = acc / denom;
            cov(t, s) = cov(s, t);
        }
    }
    return {sample.grid(), std::move(cov), SurfaceKind::classical, false};
}

/// Relative threshold below which a pair difference counts as zero.
inline constexpr double kDegeneratePairTolerance = 1e-12;

/// Sample PASS covariance: the average over unordered pairs of the outer
/// product of the normalized difference (x_j - x_k) / ||x_j - x_k||.
///
/// Pairs with squared norm <= 1e-12 * (largest pair squared norm) are
/// dropped and the average runs over the remaining pairs, so
/// spacing * trace == 1 whenever at least one pair remains.
///
/// The pair sum is evaluated as X^T L X, L being the Laplacian of the pair
/// weight matrix w_jk = 1 / ||x_j - x_k||^2.
inline CovarianceSurface pass_covariance(const FunctionalSample& sample) {
    detail::require_curves(sample, 2, "pass_covariance");
    const Matrix& x = sample.values();
    const Eigen::Index n = x.rows();
    const Eigen::Index N = x.cols();
    const double dt = sample.grid().spacing();

    Matrix sq_dist = Matrix::Zero(n, n);
    double max_sq = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = j + 1; k < n; ++k) {
            double acc = 0.0;
            for (Eigen::Index t = 0; t < N; ++t) {
                const double d = x(j, t) - x(k, t);
                acc += d * d;
            }
            sq_dist(j, k) = dt * acc;
            max_sq = std::max(max_sq, sq_dist(j, k));
        }
    }
    if (!(max_sq > 0.0)) throw DegenerateSampleError("pass_covariance: all curves coincide");

    const double cutoff = kDegeneratePairTolerance * max_sq;
    Matrix laplacian = Matrix::Zero(n, n);
    double retained = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = j + 1; k < n; ++k) {
            if (sq_dist(j, k) <= cutoff) continue;
            const double w = 1.0 / sq_dist(j, k);
            laplacian(j, k) -= w;
            laplacian(k, j) -= w;
            laplacian(j, j) += w;
            laplacian(k, k) += w;
            retained += 1.0;
        }
    }

    const Vector mean = detail::column_means(x);
    Matrix centred = x.rowwise() - mean.transpose();
    Matrix k = centred.transpose() * (laplacian * centred);
    k /= retained;
    detail::symmetrize(k);
    return {sample.grid(), std::move(k), SurfaceKind::pass, false};
}

inline constexpr double kSymmetryTolerance = 1e-10;

/// Top-q eigenpairs of a surface, rescaled to operator eigenvalues and
/// unit-norm eigenfunctions under the grid quadrature.
inline EigenSystem eigendecompose(const CovarianceSurface& surface, std::size_t q) {
    const auto N = static_cast<Eigen::Index>(surface.grid.n_points());
    if (surface.matrix.rows() != N || surface.matrix.cols() != N) {
        throw DimensionError("eigendecompose: surface is not N x N for its grid");
    }
    if (q < 1 || q > static_cast<std::size_t>(N)) {
        throw DimensionError("eigendecompose: q must lie in [1, " + std::to_string(N) + "], got " + std::to_string(q));
    }
    if (!surface.matrix.allFinite()) {
        throw DomainError("eigendecompose: surface has missing or non-finite entries (smooth it first)");
    }
    const double asym = (surface.matrix - surface.matrix.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTolerance) {
        throw SymmetryError("eigendecompose: surface asymmetric by " + std::to_string(asym));
    }

    Eigen::SelfAdjointEigenSolver<Matrix> solver(surface.matrix);
    if (solver.info() != Eigen::Success) throw DomainError("eigendecompose: eigensolver failed");

    const double dt = surface.grid.spacing();
    const auto qi = static_cast<Eigen::Index>(q);
    EigenSystem out;
    out.grid = surface.grid;
    out.q = q;
    out.eigenvalues.resize(qi);
    out.eigenfunctions.resize(N, qi);
    const double scale = 1.0 / std::sqrt(dt);
    for (Eigen::Index c = 0; c < qi; ++c) {
        const Eigen::Index src = N - 1 - c;  // solver sorts ascending
        out.eigenvalues(c) = solver.eigenvalues()(src) * dt;
        out.eigenfunctions.col(c) = solver.eigenvectors().col(src) * scale;
    }
    detail::apply_sign_convention(out.eigenfunctions);
    return out;
}

/// Geometric (spatial) median by the Vardi-Zhang modified Weiszfeld
/// iteration.  Stops once the step is below tol * max(1, ||m||).
inline Vector spatial_median(const FunctionalSample& sample, double tol = 1e-10, int max_iter = 1000) {
    detail::require_curves(sample, 1, "spatial_median");
    const Matrix& x = sample.values();
    const Grid& grid = sample.grid();
    const Eigen::Index n = x.rows();
    Vector m = detail::column_means(x);
    if (n == 1) return x.row(0).transpose();

    double scale = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) scale = std::max(scale, l2_norm((x.row(i).transpose() - m).eval(), grid));
    const double coincide = 1e-14 * std::max(scale, 1e-300);

    for (int iter = 0; iter < max_iter; ++iter) {
        Vector weighted = Vector::Zero(m.size());
        Vector pull = Vector::Zero(m.size());
        double weight_sum = 0.0;
        int at_point = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector diff = x.row(i).transpose() - m;
            const double d = l2_norm(diff, grid);
            if (d <= coincide) {
                ++at_point;
                continue;
            }
            weighted += x.row(i).transpose() / d;
            pull += diff / d;
            weight_sum += 1.0 / d;
        }
        if (weight_sum == 0.0) return m;  // every curve sits on m

        const Vector t = weighted / weight_sum;
        Vector next;
        if (at_point == 0) {
            next = t;
        } else {
            const double r = l2_norm(pull, grid);
            if (r <= static_cast<double>(at_point)) return m;  // m is a data point and the optimum
            const double a = static_cast<double>(at_point) / r;
            next = (1.0 - a) * t + a * m;
        }
        const double step = l2_norm((next - m).eval(), grid);
        m = std::move(next);
        if (step <= tol * std::max(1.0, l2_norm(m, grid))) return m;
    }
    throw ConvergenceError("spatial_median: no convergence after " + std::to_string(max_iter) + " iterations", m);
}

/// Spherical surface: the second moment of the unit-norm deviations about
/// a centre.  Curves lying on the centre are skipped.
inline CovarianceSurface spherical_surface(const FunctionalSample& sample, const Vector& centre) {
    const Matrix& x = sample.values();
    const Grid& grid = sample.grid();
    const Eigen::Index n = x.rows();
    Matrix signs(n, x.cols());
    Vector norms(n);
    double max_norm = 0.0;
    double data_scale = l2_norm(centre, grid);
    for (Eigen::Index i = 0; i < n; ++i) {
        signs.row(i) = x.row(i) - centre.transpose();
        norms(i) = l2_norm(signs.row(i), grid);
        max_norm = std::max(max_norm, norms(i));
        data_scale = std::max(data_scale, l2_norm(x.row(i), grid));
    }
    if (!(max_norm > 1e-12 * data_scale)) throw DegenerateSampleError("mspc: every curve equals the spatial median");
    Eigen::Index kept = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (norms(i) <= 1e-12 * max_norm) continue;
        signs.row(kept++) = signs.row(i) / norms(i);
    }
    Matrix s = signs.topRows(kept).transpose() * signs.topRows(kept);
    s /= static_cast<double>(kept);
    detail::symmetrize(s);
    return {grid, std::move(s), SurfaceKind::spherical, false};
}

/// Median spherical principal components (simplest spherical form).
inline EigenSystem mspc(const FunctionalSample& sample, std::size_t q) {
    detail::require_curves(sample, 2, "mspc");
    const Vector centre = spatial_median(sample, 1e-10, 2000);
    return eigendecompose(spherical_surface(sample, centre), q);
}

}  // namespace passfpca
