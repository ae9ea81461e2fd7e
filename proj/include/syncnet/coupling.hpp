#pragma once

// Coupling nonlinearities applied to state differences. The catalog covers
// everything the experiments need: linear, tanh, sin, and an amplitude-scaled
// tanh. All functions are normalized so f'(0) = 1.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace syncnet {

class CouplingFunction {
  public:
    enum class Kind { Linear, Tanh, Sine, ScaledTanh };

    static CouplingFunction linear() {
        return CouplingFunction(Kind::Linear, std::numeric_limits<double>::infinity(),
                                true, true);
    }
    static CouplingFunction hyperbolic_tangent() {
        return CouplingFunction(Kind::Tanh, 1.0, true, true);
    }
    /// sin is shipped as a non-certified coupling: it is odd but not
    /// increasing, so results derived from it are not covered by the
    /// synchronization guarantees.
    static CouplingFunction sine() {
        return CouplingFunction(Kind::Sine, 1.0, false, false);
    }
    /// s * tanh(x / s): bounded with declared limit s, still f'(0) = 1.
    static CouplingFunction scaled_tanh(double limit) {
        if (!(limit > 0.0))
            throw std::invalid_argument("scaled_tanh: limit must be positive");
        CouplingFunction f(Kind::ScaledTanh, limit, true, true);
        return f;
    }

    static CouplingFunction from_name(std::string_view name) {
        if (name == "linear") return linear();
        if (name == "tanh") return hyperbolic_tangent();
        if (name == "sin") return sine();
        throw std::invalid_argument("unknown coupling function: " + std::string(name));
    }

    double operator()(double x) const {
        switch (kind_) {
            case Kind::Linear: return x;
            case Kind::Tanh: return std::tanh(x);
            case Kind::Sine: return std::sin(x);
            case Kind::ScaledTanh: return f_max_ * std::tanh(x / f_max_);
        }
        return x;
    }

    Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
        Eigen::VectorXd out(x.size());
        for (Eigen::Index k = 0; k < x.size(); ++k) out[k] = (*this)(x[k]);
        return out;
    }

    /// f(x)/x with the limit value f'(0) = 1 at x = 0.
    double slope_ratio(double x) const {
        if (std::abs(x) < 1e-12) return 1.0;
        return (*this)(x) / x;
    }

    Kind kind() const { return kind_; }
    double f_max() const { return f_max_; }
    bool bounded() const { return std::isfinite(f_max_); }
    bool satisfies_a2() const { return satisfies_a2_; }
    bool monotone_curvature() const { return monotone_curvature_; }

    std::string name() const {
        switch (kind_) {
            case Kind::Linear: return "linear";
            case Kind::Tanh: return "tanh";
            case Kind::Sine: return "sin";
            case Kind::ScaledTanh: return "scaled_tanh";
        }
        return "?";
    }

  private:
    CouplingFunction(Kind kind, double f_max, bool a2, bool a4)
        : kind_(kind), f_max_(f_max), satisfies_a2_(a2), monotone_curvature_(a4) {}

    Kind kind_;
    double f_max_;
    bool satisfies_a2_;
    bool monotone_curvature_;
};

inline double evaluate(const CouplingFunction& f, double x) { return f(x); }

struct A2Report {
    bool pass = false;
    std::optional<double> first_violation;
    std::string reason;
};

/// Samples a symmetric grid and checks the coupling assumptions numerically:
/// f(0) = 0, oddness, strict monotonicity, and f'(0) = 1 by central
/// difference. Reports the first violating sample.
inline A2Report validate_a2(const CouplingFunction& f) {
    A2Report report;
    if (std::abs(f(0.0)) > 1e-12) {
        report.first_violation = 0.0;
        report.reason = "f(0) != 0";
        return report;
    }
    const double h = 1e-6;
    const double d0 = (f(h) - f(-h)) / (2.0 * h);
    if (std::abs(d0 - 1.0) > 1e-6) {
        report.first_violation = 0.0;
        report.reason = "f'(0) != 1";
        return report;
    }
    const int half = 800;
    const double span = 8.0;
    double prev = f(-span);
    for (int k = -half + 1; k <= half; ++k) {
        const double x = span * k / half;
        const double fx = f(x);
        if (std::abs(fx + f(-x)) > 1e-12 * std::max(1.0, std::abs(fx))) {
            report.first_violation = x;
            report.reason = "not odd";
            return report;
        }
        if (!(fx > prev)) {
            report.first_violation = x;
            report.reason = "not increasing";
            return report;
        }
        prev = fx;
    }
    report.pass = true;
    return report;
}

struct GFunctional {
    double value = 0.0;    // may be +inf for unbounded couplings
    bool closed_form = false;
    bool certified = false;  // false when the coupling fails a2
};

namespace detail {

inline double g_inner_min(const CouplingFunction& f, double a) {
    // min of f(x)/x over [0, 2a], including the limit value 1 at x = 0.
    const int samples = 2048;
    double m = 1.0;
    for (int k = 1; k <= samples; ++k) {
        const double x = 2.0 * a * k / samples;
        m = std::min(m, f.slope_ratio(x));
    }
    return m;
}

inline double g_objective(const CouplingFunction& f, double a) {
    return a * g_inner_min(f, a);
}

}  // namespace detail

/// The coupling functional g = sup_a { a * min_{x in [0,2a]} f(x)/x }.
/// Closed form f_max/2 (or +inf when unbounded) for couplings with declared
/// a2 + a4; otherwise a grid search with golden-section refinement. The
/// numeric value is a certified-from-below estimate only when a2 holds.
inline GFunctional compute_g(const CouplingFunction& f) {
    GFunctional g;
    g.certified = f.satisfies_a2();
    if (f.satisfies_a2() && f.monotone_curvature()) {
        g.closed_form = true;
        g.value = f.bounded() ? 0.5 * f.f_max()
                              : std::numeric_limits<double>::infinity();
        return g;
    }

    // Outer maximization on a log-spaced grid, then refine around the best
    // cell with golden-section search.
    const int grid = 400;
    const double lo = 1e-3, hi = 1e3;
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    std::vector<double> avals(grid);
    for (int k = 0; k < grid; ++k) {
        avals[k] = lo * std::pow(hi / lo, static_cast<double>(k) / (grid - 1));
        const double v = detail::g_objective(f, avals[k]);
        if (v > best_val) {
            best_val = v;
            best = k;
        }
    }
    double a_lo = avals[std::max(0, best - 1)];
    double a_hi = avals[std::min(grid - 1, best + 1)];
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = a_hi - phi * (a_hi - a_lo);
    double x2 = a_lo + phi * (a_hi - a_lo);
    double f1 = detail::g_objective(f, x1);
    double f2 = detail::g_objective(f, x2);
    for (int it = 0; it < 200 && (a_hi - a_lo) > 1e-12 * a_hi; ++it) {
        if (f1 < f2) {
            a_lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = a_lo + phi * (a_hi - a_lo);
            f2 = detail::g_objective(f, x2);
        } else {
            a_hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = a_hi - phi * (a_hi - a_lo);
            f1 = detail::g_objective(f, x1);
        }
    }
    g.value = std::max(best_val, std::max(f1, f2));
    return g;
}

}  // namespace syncnet
