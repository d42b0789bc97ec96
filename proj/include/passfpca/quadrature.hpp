#pragma once

// One-dimensional quadrature on finite intervals: adaptive Gauss-Kronrod
// (7/15) with global bisection, and a fixed composite Gauss-Legendre rule.

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <vector>

namespace passfpca::quadrature {

struct Result {
    double value = 0.0;
    double error = 0.0;
    int intervals = 0;
};

namespace detail {

// QUADPACK qk15 abscissae and weights.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a, b, value, error;
    bool operator<(const Panel& o) const { return error < o.error; }
};

template <typename F>
Panel kronrod15(F& f, double a, double b) {
    const double centre = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(centre);
    double kronrod = fc * kKronrodWeights[7];
    double gauss = fc * kGaussWeights[3];
    for (int i = 0; i < 7; ++i) {
        const double dx = half * kKronrodNodes[i];
        const double pair = f(centre - dx) + f(centre + dx);
        kronrod += kKronrodWeights[i] * pair;
        if (i % 2 == 1) gauss += kGaussWeights[i / 2] * pair;
    }
    return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Adaptive integration of f over [a, b].  The panel with the largest error
/// estimate is bisected until the summed estimate drops below
/// max(abs_tol, rel_tol * |value|) or max_intervals panels exist.
template <typename F>
Result integrate_adaptive(F f, double a, double b, double abs_tol = 1e-12, double rel_tol = 1e-12,
                          int max_intervals = 4000) {
    std::priority_queue<detail::Panel> panels;
    detail::Panel first = detail::kronrod15(f, a, b);
    double value = first.value;
    double error = first.error;
    panels.push(first);
    while (error > std::max(abs_tol, rel_tol * std::abs(value)) &&
           static_cast<int>(panels.size()) < max_intervals) {
        const detail::Panel worst = panels.top();
        panels.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        const detail::Panel left = detail::kronrod15(f, worst.a, mid);
        const detail::Panel right = detail::kronrod15(f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        panels.push(left);
        panels.push(right);
    }
    // Re-sum from scratch so the reported value carries no drift from the
    // running updates.
    Result r;
    r.intervals = static_cast<int>(panels.size());
    std::vector<detail::Panel> all;
    all.reserve(panels.size());
    while (!panels.empty()) {
        all.push_back(panels.top());
        panels.pop();
    }
    std::sort(all.begin(), all.end(), [](const detail::Panel& l, const detail::Panel& r2) { return l.a < r2.a; });
    for (const auto& p : all) {
        r.value += p.value;
        r.error += p.error;
    }
    return r;
}

/// Composite 8-point Gauss-Legendre with `panels` equal panels
/// (256 panels = 2048 nodes by default).
template <typename F>
double integrate_fixed(F f, double a, double b, int panels = 256) {
    static constexpr std::array<double, 4> nodes = {0.183434642495649804939476142360184, 0.525532409916328985817739049189246,
                                                    0.796666477413626739591553936475830, 0.960289856497536231683560868569473};
    static constexpr std::array<double, 4> weights = {0.362683783378361982965150449277196, 0.313706645877887287337962201986601,
                                                      0.222381034453374470544355994426241, 0.101228536290376259152531354309962};
    const double width = (b - a) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double centre = a + (p + 0.5) * width;
        const double half = 0.5 * width;
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) acc += weights[i] * (f(centre - half * nodes[i]) + f(centre + half * nodes[i]));
        total += acc * half;
    }
    return total;
}

}  // namespace passfpca::quadrature
