#pragma once

// Regular grids on [0,1] and the quadrature behind every inner product.
//
// Grid points are the right endpoints t_j = j/N, j = 1..N, and every point
// carries weight 1/N.  This is the piecewise-constant norm of the noisy-data
// model, so noisy and noise-free estimators share one inner product.

#include "passfpca/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

namespace passfpca {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class Grid {
public:
    Grid() = default;

    std::size_t n_points() const noexcept { return n_points_; }
    double spacing() const noexcept { return spacing_; }
    const Vector& points() const noexcept { return points_; }
    double operator[](std::size_t j) const { return points_(static_cast<Eigen::Index>(j)); }

    friend bool operator==(const Grid& a, const Grid& b) noexcept { return a.n_points_ == b.n_points_; }

private:
    friend Grid make_grid(std::size_t n_points);

    std::size_t n_points_ = 0;
    double spacing_ = 0.0;
    Vector points_;
};

inline Grid make_grid(std::size_t n_points) {
    if (n_points < 2) {
        throw InvalidGridError("grid needs at least 2 points, got " + std::to_string(n_points));
    }
    Grid g;
    g.n_points_ = n_points;
    g.spacing_ = 1.0 / static_cast<double>(n_points);
    g.points_.resize(static_cast<Eigen::Index>(n_points));
    for (std::size_t j = 0; j < n_points; ++j) {
        g.points_(static_cast<Eigen::Index>(j)) = static_cast<double>(j + 1) / static_cast<double>(n_points);
    }
    return g;
}

template <typename DerivedF, typename DerivedG>
double inner_product(const Eigen::MatrixBase<DerivedF>& f, const Eigen::MatrixBase<DerivedG>& g, const Grid& grid) {
    const auto n = static_cast<Eigen::Index>(grid.n_points());
    if (f.size() != n || g.size() != n) {
        throw DimensionError("inner_product: expected " + std::to_string(n) + " grid values, got " +
                             std::to_string(f.size()) + " and " + std::to_string(g.size()));
    }
    // Plain left-to-right sum keeps <f,g> == <g,f> bit for bit.
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += f(j) * g(j);
    return grid.spacing() * acc;
}

template <typename Derived>
double l2_norm(const Eigen::MatrixBase<Derived>& f, const Grid& grid) {
    return std::sqrt(inner_product(f, f, grid));
}

/// n curves on one shared grid; row i holds curve i.
class FunctionalSample {
public:
    FunctionalSample() = default;

    FunctionalSample(Grid grid, Matrix values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (values_.rows() < 1) throw InsufficientSampleError("functional sample needs at least one curve");
        if (static_cast<std::size_t>(values_.cols()) != grid_.n_points()) {
            throw DimensionError("curves have " + std::to_string(values_.cols()) + " values, grid has " +
                                 std::to_string(grid_.n_points()) + " points");
        }
        if (!values_.allFinite()) throw DomainError("functional sample contains non-finite values");
    }

    const Grid& grid() const noexcept { return grid_; }
    const Matrix& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    auto curve(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)); }

private:
    Grid grid_;
    Matrix values_;
};

}  // namespace passfpca
