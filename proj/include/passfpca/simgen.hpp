#pragma once

// Synthetic functional data: four-term Karhunen-Loeve curves on a Fourier
// basis with mean 2t(1-t) and eigenvalues (2, 1, 1/2, 1/4), five score
// laws, two outlier schemes and additive Gaussian measurement noise.

#include "passfpca/errors.hpp"
#include "passfpca/grid.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace passfpca {

enum class ScoreLaw { gaussian, frechet, lognormal, chisquare, multivariate_t };
enum class OutlierScheme { none, ol1, ol2 };

inline constexpr std::array<ScoreLaw, 5> kAllScoreLaws = {ScoreLaw::gaussian, ScoreLaw::multivariate_t, ScoreLaw::frechet,
                                                          ScoreLaw::lognormal, ScoreLaw::chisquare};

inline const char* to_string(ScoreLaw law) {
    switch (law) {
        case ScoreLaw::gaussian: return "gaussian";
        case ScoreLaw::frechet: return "frechet";
        case ScoreLaw::lognormal: return "lognormal";
        case ScoreLaw::chisquare: return "chisquare";
        case ScoreLaw::multivariate_t: return "multivariate_t";
    }
    return "?";
}

inline const char* to_string(OutlierScheme s) {
    switch (s) {
        case OutlierScheme::none: return "none";
        case OutlierScheme::ol1: return "ol1";
        case OutlierScheme::ol2: return "ol2";
    }
    return "?";
}

inline std::optional<ScoreLaw> parse_score_law(std::string_view s) {
    for (ScoreLaw law : kAllScoreLaws)
        if (s == to_string(law)) return law;
    return std::nullopt;
}

inline std::optional<OutlierScheme> parse_outlier_scheme(std::string_view s) {
    for (OutlierScheme o : {OutlierScheme::none, OutlierScheme::ol1, OutlierScheme::ol2})
        if (s == to_string(o)) return o;
    return std::nullopt;
}

struct SimulationConfig {
    std::size_t n = 200;
    std::size_t n_points = 101;
    ScoreLaw score_law = ScoreLaw::gaussian;
    OutlierScheme outlier_scheme = OutlierScheme::none;
    double outlier_fraction = 0.05;
    double noise_sd = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (n < 1) throw DomainError("simulation: n must be at least 1");
        if (!(outlier_fraction >= 0.0 && outlier_fraction < 0.5)) throw DomainError("simulation: outlier_fraction must lie in [0, 0.5)");
        if (!(noise_sd >= 0.0)) throw DomainError("simulation: noise_sd must be nonnegative");
        (void)make_grid(n_points);
    }
};

struct GroundTruth {
    Vector mean;
    Matrix eigenfunctions;  ///< N x 4
    Vector eigenvalues;     ///< (2, 1, 0.5, 0.25)
    std::vector<bool> outlier_mask;
};

/// Generator for one named stream of one replicate.  Streams are keyed by
/// (seed, replicate, stream id) through std::seed_seq, so replicates can be
/// produced in any order or in parallel with identical results.
class StreamRng {
public:
    enum Stream : std::uint32_t { scores = 1, outliers = 2, noise = 3 };

    StreamRng(std::uint64_t seed, std::uint64_t replicate, std::uint32_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32), stream};
        engine_.seed(seq);
    }

    std::mt19937_64& engine() noexcept { return engine_; }

    /// Uniform on the open interval (0, 1).
    double open_uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

inline Vector fourier_eigenvalues() { return (Vector(4) << 2.0, 1.0, 0.5, 0.25).finished(); }

inline GroundTruth fourier_truth(const Grid& grid) {
    const auto n = static_cast<Eigen::Index>(grid.n_points());
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double root2 = std::numbers::sqrt2;
    GroundTruth truth;
    truth.mean.resize(n);
    truth.eigenfunctions.resize(n, 4);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double t = grid.points()(j);
        truth.mean(j) = 2.0 * t * (1.0 - t);
        truth.eigenfunctions(j, 0) = root2 * std::sin(two_pi * t);
        truth.eigenfunctions(j, 1) = root2 * std::cos(two_pi * t);
        truth.eigenfunctions(j, 2) = root2 * std::sin(2.0 * two_pi * t);
        truth.eigenfunctions(j, 3) = root2 * std::cos(2.0 * two_pi * t);
    }
    truth.eigenvalues = fourier_eigenvalues();
    return truth;
}

/// Mean and variance of the raw draws each standardized law starts from.
struct RawMoments {
    double mean;
    double variance;
};

inline constexpr double kFrechetScale = 2.0;
inline constexpr double kFrechetShape = 3.0;
inline constexpr double kLognormalSigma = 1.0;
inline constexpr double kStudentDf = 5.0;

inline RawMoments frechet_moments(double scale = kFrechetScale, double shape = kFrechetShape) {
    const double g1 = std::tgamma(1.0 - 1.0 / shape);
    const double g2 = std::tgamma(1.0 - 2.0 / shape);
    return {scale * g1, scale * scale * (g2 - g1 * g1)};
}

inline RawMoments lognormal_moments(double sigma = kLognormalSigma) {
    const double s2 = sigma * sigma;
    return {std::exp(0.5 * s2), (std::exp(s2) - 1.0) * std::exp(s2)};
}

inline RawMoments chisquare_moments(double df = 1.0) { return {df, 2.0 * df}; }

/// Frechet(location 0, scale, shape) by inversion.
inline double draw_frechet(StreamRng& rng, double scale = kFrechetScale, double shape = kFrechetShape) {
    return scale * std::pow(-std::log(rng.open_uniform()), -1.0 / shape);
}

/// n x 4 score matrix with column variances equal to `eigenvalues`.
inline Matrix draw_scores(ScoreLaw law, std::size_t n, StreamRng& rng, const Vector& eigenvalues = fourier_eigenvalues()) {
    const auto rows = static_cast<Eigen::Index>(n);
    const Eigen::Index q = eigenvalues.size();
    Matrix scores(rows, q);
    auto& eng = rng.engine();
    std::normal_distribution<double> normal(0.0, 1.0);

    auto fill_standardized = [&](auto&& draw, RawMoments m) {
        const double sd = std::sqrt(m.variance);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < q; ++j) scores(i, j) = std::sqrt(eigenvalues(j)) * (draw() - m.mean) / sd;
    };

    switch (law) {
        case ScoreLaw::gaussian:
            fill_standardized([&] { return normal(eng); }, {0.0, 1.0});
            break;
        case ScoreLaw::frechet:
            fill_standardized([&] { return draw_frechet(rng); }, frechet_moments());
            break;
        case ScoreLaw::lognormal: {
            std::lognormal_distribution<double> logn(0.0, kLognormalSigma);
            fill_standardized([&] { return logn(eng); }, lognormal_moments());
            break;
        }
        case ScoreLaw::chisquare: {
            std::chi_squared_distribution<double> chi(1.0);
            fill_standardized([&] { return chi(eng); }, chisquare_moments());
            break;
        }
        case ScoreLaw::multivariate_t: {
            // Covariance diag(lambda) => scale matrix ((df - 2) / df) diag(lambda).
            std::chi_squared_distribution<double> chi(kStudentDf);
            const double shrink = std::sqrt((kStudentDf - 2.0) / kStudentDf);
            for (Eigen::Index i = 0; i < rows; ++i) {
                Vector z(q);
                for (Eigen::Index j = 0; j < q; ++j) z(j) = normal(eng);
                const double mix = std::sqrt(chi(eng) / kStudentDf);
                for (Eigen::Index j = 0; j < q; ++j) scores(i, j) = shrink * std::sqrt(eigenvalues(j)) * z(j) / mix;
            }
            break;
        }
    }
    return scores;
}

inline constexpr double kMeanShiftOutlier = 5.0;

inline std::size_t outlier_count(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

/// Contaminates ceil(fraction * n) curves chosen without replacement.
///
/// ol1 adds 5 to the whole curve.  ol2 rebuilds the first Karhunen-Loeve
/// term: the first score gains 3 sqrt(lambda_1) and phi_1 is replaced by
/// the unnormalized line f(t) = t.
inline std::pair<FunctionalSample, std::vector<bool>> inject_outliers(const FunctionalSample& sample, const GroundTruth& truth,
                                                                       OutlierScheme scheme, double fraction, StreamRng& rng) {
    const std::size_t n = sample.size();
    std::vector<bool> mask(n, false);
    if (scheme == OutlierScheme::none) return {sample, mask};
    const std::size_t count = outlier_count(fraction, n);

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng.engine())]);
        mask[idx[i]] = true;
    }

    Matrix values = sample.values();
    const Grid& grid = sample.grid();
    const double boost = 3.0 * std::sqrt(truth.eigenvalues(0));
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        auto row = values.row(static_cast<Eigen::Index>(i));
        if (scheme == OutlierScheme::ol1) {
            row.array() += kMeanShiftOutlier;
        } else {
            const Vector centred = row.transpose() - truth.mean;
            const double xi1 = inner_product(centred, truth.eigenfunctions.col(0), grid);
            row += ((xi1 + boost) * grid.points() - xi1 * truth.eigenfunctions.col(0)).transpose();
        }
    }
    return {FunctionalSample(grid, std::move(values)), std::move(mask)};
}

/// Replicate `replicate` of a configuration: KL synthesis, then outliers,
/// then pointwise N(0, noise_sd^2) noise.
inline std::pair<FunctionalSample, GroundTruth> generate(const SimulationConfig& config, std::uint64_t replicate = 0) {
    config.validate();
    const Grid grid = make_grid(config.n_points);
    GroundTruth truth = fourier_truth(grid);

    StreamRng score_rng(config.seed, replicate, StreamRng::scores);
    const Matrix scores = draw_scores(config.score_law, config.n, score_rng, truth.eigenvalues);
    Matrix values = scores * truth.eigenfunctions.transpose();
    values.rowwise() += truth.mean.transpose();
    FunctionalSample sample(grid, std::move(values));

    StreamRng outlier_rng(config.seed, replicate, StreamRng::outliers);
    auto [contaminated, mask] = inject_outliers(sample, truth, config.outlier_scheme, config.outlier_fraction, outlier_rng);
    truth.outlier_mask = std::move(mask);

    if (config.noise_sd > 0.0) {
        StreamRng noise_rng(config.seed, replicate, StreamRng::noise);
        std::normal_distribution<double> noise(0.0, config.noise_sd);
        Matrix noisy = contaminated.values();
        for (Eigen::Index i = 0; i < noisy.rows(); ++i)
            for (Eigen::Index j = 0; j < noisy.cols(); ++j) noisy(i, j) += noise(noise_rng.engine());
        contaminated = FunctionalSample(grid, std::move(noisy));
    }
    return {std::move(contaminated), std::move(truth)};
}

}  // namespace passfpca
