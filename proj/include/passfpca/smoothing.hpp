#pragma once

// Noise handling: penalized smoothing of individual curves (pre-smooth) and
// of a covariance surface whose diagonal has been removed (smooth-CF).
//
// Both smoothers use second-difference roughness penalties; when no penalty
// is given it is chosen by generalized cross-validation (GCV) over a fixed
// log grid followed by golden-section refinement, so results are
// deterministic.

#include "passfpca/errors.hpp"
#include "passfpca/estimators.hpp"
#include "passfpca/grid.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>

namespace passfpca {

enum class SmoothingScheme { pre_smooth, smooth_cf };

inline const char* to_string(SmoothingScheme s) { return s == SmoothingScheme::pre_smooth ? "pre_smooth" : "smooth_cf"; }

struct SmoothingSpec {
    SmoothingScheme scheme = SmoothingScheme::smooth_cf;
    std::optional<double> penalty;  ///< nullopt: choose by GCV
    std::size_t basis_size = 15;    ///< marginal B-spline count for surfaces
};

namespace detail {

/// Second-difference operator, (m - 2) x m.
inline Matrix second_difference(Eigen::Index m) {
    Matrix d = Matrix::Zero(m - 2, m);
    for (Eigen::Index i = 0; i + 2 < m; ++i) {
        d(i, i) = 1.0;
        d(i, i + 1) = -2.0;
        d(i, i + 2) = 1.0;
    }
    return d;
}

/// Minimizes a GCV criterion over log10(penalty) in [lo, hi].
template <typename Criterion>
double minimize_log_penalty(Criterion&& gcv, double lo = -6.0, double hi = 10.0, int grid = 97) {
    const double step = (hi - lo) / (grid - 1);
    int best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid; ++i) {
        const double v = gcv(std::pow(10.0, lo + i * step));
        if (v < best_value) {
            best_value = v;
            best = i;
        }
    }
    double a = lo + std::max(0, best - 1) * step;
    double b = lo + std::min(grid - 1, best + 1) * step;
    const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - golden * (b - a);
    double d = a + golden * (b - a);
    double fc = gcv(std::pow(10.0, c));
    double fd = gcv(std::pow(10.0, d));
    for (int it = 0; it < 40; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - golden * (b - a);
            fc = gcv(std::pow(10.0, c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + golden * (b - a);
            fd = gcv(std::pow(10.0, d));
        }
    }
    const double refined = 0.5 * (a + b);
    return gcv(std::pow(10.0, refined)) <= best_value ? std::pow(10.0, refined) : std::pow(10.0, lo + best * step);
}

}  // namespace detail

/// Whittaker-type curve smoother on a fixed grid:
/// argmin_f ||y - f||^2 + penalty * ||D2 f||^2.
class CurveSmoother {
public:
    explicit CurveSmoother(std::size_t n_points) {
        if (n_points < 4) throw InsufficientSampleError("presmooth: need at least 4 grid points");
        const auto m = static_cast<Eigen::Index>(n_points);
        const Matrix d = detail::second_difference(m);
        Eigen::SelfAdjointEigenSolver<Matrix> es(d.transpose() * d);
        basis_ = es.eigenvectors();
        roughness_ = es.eigenvalues();
        const double cut = 1e-10 * roughness_.maxCoeff();
        for (Eigen::Index i = 0; i < m; ++i)
            if (roughness_(i) < cut) roughness_(i) = 0.0;  // linear functions are unpenalized
    }

    std::size_t n_points() const noexcept { return static_cast<std::size_t>(basis_.rows()); }

    double gcv(const Vector& coeffs, double penalty) const {
        const double n = static_cast<double>(coeffs.size());
        double rss = 0.0;
        double trace = 0.0;
        for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
            const double shrink = 1.0 / (1.0 + penalty * roughness_(i));
            const double resid = (1.0 - shrink) * coeffs(i);
            rss += resid * resid;
            trace += shrink;
        }
        const double dof = n - trace;
        return n * rss / (dof * dof);
    }

    double select_penalty(const Vector& y) const {
        const Vector coeffs = basis_.transpose() * y;
        return detail::minimize_log_penalty([&](double lambda) { return gcv(coeffs, lambda); });
    }

    Vector smooth(const Vector& y, std::optional<double> penalty) const {
        if (y.size() != basis_.rows()) throw DimensionError("presmooth: curve length differs from smoother grid");
        const double lambda = penalty ? *penalty : select_penalty(y);
        if (!(lambda >= 0.0)) throw DomainError("presmooth: penalty must be nonnegative");
        if (lambda == 0.0) return y;
        Vector coeffs = basis_.transpose() * y;
        for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
            coeffs(i) = std::isinf(lambda) ? (roughness_(i) == 0.0 ? coeffs(i) : 0.0)
                                           : coeffs(i) / (1.0 + lambda * roughness_(i));
        }
        return basis_ * coeffs;
    }

private:
    Matrix basis_;
    Vector roughness_;
};

/// Replaces every curve by its penalized smooth; penalty per curve by GCV
/// unless `spec.penalty` is set.
inline FunctionalSample presmooth(const FunctionalSample& sample, const SmoothingSpec& spec,
                                  const CurveSmoother* smoother = nullptr) {
    if (spec.scheme != SmoothingScheme::pre_smooth) throw DomainError("presmooth: spec scheme must be pre_smooth");
    std::optional<CurveSmoother> local;
    if (smoother == nullptr || smoother->n_points() != sample.grid().n_points()) {
        local.emplace(sample.grid().n_points());
        smoother = &*local;
    }
    Matrix out(sample.values().rows(), sample.values().cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        out.row(i) = smoother->smooth(sample.values().row(i).transpose(), spec.penalty).transpose();
    }
    return FunctionalSample(sample.grid(), std::move(out));
}

/// Marks the diagonal as missing (NaN).  Idempotent.
inline CovarianceSurface remove_diagonal(CovarianceSurface surface) {
    surface.matrix.diagonal().setConstant(std::numeric_limits<double>::quiet_NaN());
    surface.diagonal_removed = true;
    return surface;
}

/// Uniform cubic B-spline basis with `basis_size` functions spanning the
/// grid's range; rows are grid points.
inline Matrix cubic_bspline_basis(const Grid& grid, std::size_t basis_size) {
    const auto k = static_cast<Eigen::Index>(basis_size);
    const auto n = static_cast<Eigen::Index>(grid.n_points());
    const double lo = grid.points()(0);
    const double hi = grid.points()(n - 1);
    const double h = (hi - lo) / static_cast<double>(k - 3);
    Matrix b = Matrix::Zero(n, k);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double x = (grid.points()(j) - lo) / h;
        const Eigen::Index seg = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(x)), k - 4);
        const double u = x - static_cast<double>(seg);
        b(j, seg) = (1.0 - u) * (1.0 - u) * (1.0 - u) / 6.0;
        b(j, seg + 1) = (3.0 * u * u * u - 6.0 * u * u + 4.0) / 6.0;
        b(j, seg + 2) = (-3.0 * u * u * u + 3.0 * u * u + 3.0 * u + 1.0) / 6.0;
        b(j, seg + 3) = u * u * u / 6.0;
    }
    return b;
}

/// Tensor-product P-spline fit to the off-diagonal cells of an N x N
/// surface.  Everything that depends only on the grid and basis size is
/// factored once at construction, so one instance can smooth many surfaces.
class SurfaceSmoother {
public:
    SurfaceSmoother(const Grid& grid, std::size_t basis_size) : grid_(grid) {
        if (basis_size < 4 || basis_size > grid.n_points()) {
            throw BasisError("smooth_surface: basis_size must lie in [4, " + std::to_string(grid.n_points()) + "], got " +
                             std::to_string(basis_size));
        }
        const auto k = static_cast<Eigen::Index>(basis_size);
        const auto n = static_cast<Eigen::Index>(grid.n_points());
        basis_ = cubic_bspline_basis(grid, basis_size);

        const Matrix gram = basis_.transpose() * basis_;
        const Eigen::Index m = k * k;
        Matrix normal(m, m);
        for (Eigen::Index a = 0; a < k; ++a)
            for (Eigen::Index b = 0; b < k; ++b)
                for (Eigen::Index a2 = 0; a2 < k; ++a2)
                    for (Eigen::Index b2 = 0; b2 < k; ++b2) normal(a * k + b, a2 * k + b2) = gram(a, a2) * gram(b, b2);
        // Drop the diagonal cells (j, j) from the normal equations.
        for (Eigen::Index j = 0; j < n; ++j) {
            Vector row(m);
            for (Eigen::Index a = 0; a < k; ++a)
                for (Eigen::Index b = 0; b < k; ++b) row(a * k + b) = basis_(j, a) * basis_(j, b);
            normal.noalias() -= row * row.transpose();
        }

        const Matrix d = detail::second_difference(k);
        const Matrix dtd = d.transpose() * d;
        Matrix penalty = Matrix::Zero(m, m);
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index b = 0; b < k; ++b) {
                for (Eigen::Index c = 0; c < k; ++c) {
                    penalty(a * k + b, c * k + b) += dtd(a, c);
                    penalty(a * k + b, a * k + c) += dtd(b, c);
                }
            }
        }

        // penalty v = mu * normal v with v^T normal v = 1.
        Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(penalty, normal);
        if (es.info() != Eigen::Success) throw BasisError("smooth_surface: normal equations are not positive definite");
        eigvecs_ = es.eigenvectors();
        mu_ = es.eigenvalues().cwiseMax(0.0);
        const double cut = 1e-10 * mu_.maxCoeff();
        for (Eigen::Index i = 0; i < m; ++i)
            if (mu_(i) < cut) mu_(i) = 0.0;
    }

    std::size_t basis_size() const noexcept { return static_cast<std::size_t>(basis_.cols()); }
    const Grid& grid() const noexcept { return grid_; }

    /// Smoothed full surface (diagonal included) from the off-diagonal cells
    /// of `z`; the diagonal of `z` is ignored.
    Matrix fit(const Matrix& z, std::optional<double> penalty, double* chosen_penalty = nullptr) const {
        const Eigen::Index k = basis_.cols();
        const Eigen::Index n = basis_.rows();
        if (z.rows() != n || z.cols() != n) throw DimensionError("smooth_surface: surface size differs from smoother grid");
        Matrix off = z;
        off.diagonal().setZero();
        if (!off.allFinite()) throw DomainError("smooth_surface: off-diagonal cells must be finite");
        const Matrix moment = basis_.transpose() * off * basis_;
        Vector rhs(k * k);
        for (Eigen::Index a = 0; a < k; ++a)
            for (Eigen::Index b = 0; b < k; ++b) rhs(a * k + b) = moment(a, b);
        const Vector projected = eigvecs_.transpose() * rhs;
        const double obs = static_cast<double>(n * (n - 1));
        // Residual of the unpenalized fit; the penalized residual adds a
        // nonnegative shrinkage term to it.
        const double base_rss = std::max(0.0, off.squaredNorm() - projected.squaredNorm());

        auto gcv = [&](double lambda) {
            double rss = base_rss;
            double trace = 0.0;
            for (Eigen::Index i = 0; i < projected.size(); ++i) {
                const double shrink = 1.0 / (1.0 + lambda * mu_(i));
                const double lost = (1.0 - shrink) * projected(i);
                rss += lost * lost;
                trace += shrink;
            }
            const double dof = obs - trace;
            return obs * rss / (dof * dof);
        };
        const double lambda = penalty ? *penalty : detail::minimize_log_penalty(gcv);
        if (!(lambda >= 0.0)) throw DomainError("smooth_surface: penalty must be nonnegative");
        if (chosen_penalty) *chosen_penalty = lambda;

        Vector shrunk = projected;
        for (Eigen::Index i = 0; i < shrunk.size(); ++i) {
            shrunk(i) = std::isinf(lambda) ? (mu_(i) == 0.0 ? shrunk(i) : 0.0) : shrunk(i) / (1.0 + lambda * mu_(i));
        }
        const Vector coef = eigvecs_ * shrunk;
        Matrix c(k, k);
        for (Eigen::Index a = 0; a < k; ++a)
            for (Eigen::Index b = 0; b < k; ++b) c(a, b) = coef(a * k + b);
        Matrix s = basis_ * c * basis_.transpose();
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < j; ++i) {
                const double v = 0.5 * (s(i, j) + s(j, i));
                s(i, j) = v;
                s(j, i) = v;
            }
        }
        return s;
    }

private:
    Grid grid_;
    Matrix basis_;
    Matrix eigvecs_;
    Vector mu_;
};

inline CovarianceSurface smooth_surface(const CovarianceSurface& surface, const SmoothingSpec& spec,
                                        const SurfaceSmoother* smoother = nullptr) {
    if (spec.scheme != SmoothingScheme::smooth_cf) throw DomainError("smooth_surface: spec scheme must be smooth_cf");
    if (!surface.diagonal_removed) throw DomainError("smooth_surface: remove the diagonal first");
    std::optional<SurfaceSmoother> local;
    if (smoother == nullptr || smoother->basis_size() != spec.basis_size || !(smoother->grid() == surface.grid)) {
        local.emplace(surface.grid, spec.basis_size);
        smoother = &*local;
    }
    CovarianceSurface out{surface.grid, smoother->fit(surface.matrix, spec.penalty), surface.kind, true};
    return out;
}

}  // namespace passfpca
