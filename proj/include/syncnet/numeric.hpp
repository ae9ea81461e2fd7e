#pragma once

// Small numeric utilities shared across the library: the regularized
// incomplete gamma function (for chi CDF evaluation), ordinary least
// squares line fits, and seeded per-stream RNG construction.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace syncnet {

namespace detail {

inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 1000; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_continued_fraction(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 1000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized lower incomplete gamma function P(a, x).
inline double regularized_gamma_p(double a, double x) {
    if (a <= 0.0) throw std::invalid_argument("regularized_gamma_p: a must be positive");
    if (x < 0.0) throw std::invalid_argument("regularized_gamma_p: x must be nonnegative");
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_continued_fraction(a, x);
}

/// CDF of a chi random variable with `dof` degrees of freedom.
inline double chi_cdf(double x, int dof) {
    if (dof < 1) throw std::invalid_argument("chi_cdf: dof must be >= 1");
    if (x <= 0.0) return 0.0;
    return regularized_gamma_p(0.5 * dof, 0.5 * x * x);
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = std::numeric_limits<double>::quiet_NaN();
};

/// Ordinary least squares fit y = intercept + slope * x with the usual
/// standard error of the slope (NaN when fewer than three points).
inline LinearFit fit_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: need two equally sized samples");
    const double n = static_cast<double>(x.size());
    const double xm = x.mean();
    const double ym = y.mean();
    const Eigen::VectorXd dx = x.array() - xm;
    const Eigen::VectorXd dy = y.array() - ym;
    const double sxx = dx.squaredNorm();
    if (sxx <= 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LinearFit fit;
    fit.slope = dx.dot(dy) / sxx;
    fit.intercept = ym - fit.slope * xm;
    if (x.size() > 2) {
        const double ssr = (dy - fit.slope * dx).squaredNorm();
        fit.slope_stderr = std::sqrt(ssr / ((n - 2.0) * sxx));
    }
    return fit;
}

/// Deterministic substream construction: one engine per (seed, tag, indices).
/// Streams with distinct tags or indices are independent for all practical
/// purposes, and adding nodes does not reshuffle existing streams.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint32_t tag,
                                 std::uint32_t a = 0, std::uint32_t b = 0,
                                 std::uint32_t c = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffull),
                      static_cast<std::uint32_t>(seed >> 32), tag, a, b, c};
    return std::mt19937_64(seq);
}

namespace stream_tag {
inline constexpr std::uint32_t observation = 1;
inline constexpr std::uint32_t coupling_noise = 2;
inline constexpr std::uint32_t initial_state = 3;
inline constexpr std::uint32_t mixing_matrix = 4;
inline constexpr std::uint32_t graph = 5;
inline constexpr std::uint32_t consensus_noise = 6;
inline constexpr std::uint32_t field = 7;
}  // namespace stream_tag

}  // namespace syncnet
