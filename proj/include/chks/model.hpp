// model.hpp - model parameters, the logarithmic double-well potential, and
// the proliferation source gamma with its structural bounds.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "chks/grid.hpp"

namespace chks {

struct ModelParams {
    double tau = 0.1;       // viscosity coefficient, > 0
    double m = 1.0;         // mass coefficient, > 0
    double c0 = 1.5;        // potential concavity constant, > 1
    double T = 1.0;         // final time, > 0
    int nt = 200;           // time steps; 0 means no stepping (initial state only)
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    double cg_tol = 1e-12;
    int cg_max_iter = 20000;
    double u_cap = 100.0;   // L-inf cap M on admissible control data

    double dt() const { return T / nt; }

    void validate() const {
        if (!(tau > 0.0)) throw std::invalid_argument("ModelParams: tau must be > 0");
        if (!(m > 0.0)) throw std::invalid_argument("ModelParams: m must be > 0");
        if (!(c0 > 1.0)) throw std::invalid_argument("ModelParams: c0 must be > 1");
        if (!(T > 0.0)) throw std::invalid_argument("ModelParams: T must be > 0");
        if (nt < 0) throw std::invalid_argument("ModelParams: nt must be >= 0");
        if (!(newton_tol > 0.0) || !(cg_tol > 0.0))
            throw std::invalid_argument("ModelParams: tolerances must be > 0");
        if (newton_max_iter < 1 || cg_max_iter < 1)
            throw std::invalid_argument("ModelParams: iteration caps must be >= 1");
        if (!(u_cap > 0.0)) throw std::invalid_argument("ModelParams: u_cap must be > 0");
        // the implicit logistic diagonal 1/dt - 1 + sigma must stay positive
        if (nt >= 1 && !(dt() < 1.0))
            throw std::invalid_argument("ModelParams: dt = T/nt must be < 1");
    }
};

// F(s) = (1+s)ln(1+s) + (1-s)ln(1-s) - c0 s^2 on (-1,1), extended by
// continuity at the endpoints. Inputs are clamped to |s| <= 1 - s_guard
// unless strict mode is on, and clamp events are counted.
class LogPotential {
public:
    explicit LogPotential(double c0, bool strict = false) : c0_(c0), strict_(strict) {
        if (!(c0 > 1.0)) throw std::invalid_argument("LogPotential: c0 must be > 1");
    }
    LogPotential(const LogPotential& o)
        : c0_(o.c0_), strict_(o.strict_), clamp_events_(o.clamp_events_.load()) {}
    LogPotential& operator=(const LogPotential& o) {
        c0_ = o.c0_;
        strict_ = o.strict_;
        clamp_events_.store(o.clamp_events_.load());
        return *this;
    }

    double c0() const { return c0_; }
    uint64_t clamp_events() const { return clamp_events_.load(); }
    void reset_clamp_events() { clamp_events_.store(0); }

    // order 0..3: F, F', F'', F'''
    double eval(double s, int order) const {
        s = guard(s);
        switch (order) {
            case 0: return (1.0 + s) * std::log1p(s) + (1.0 - s) * std::log1p(-s) - c0_ * s * s;
            case 1: return std::log1p(s) - std::log1p(-s) - 2.0 * c0_ * s;
            case 2: return 2.0 / ((1.0 - s) * (1.0 + s)) - 2.0 * c0_;
            case 3: {
                const double d = (1.0 - s) * (1.0 + s);
                return 4.0 * s / (d * d);
            }
            default: throw std::invalid_argument("LogPotential: order must be in {0,1,2,3}");
        }
    }

    // implicit convex part ln((1+s)/(1-s)) and its derivative 2/(1-s^2);
    // the concave remainder -2 c0 s is treated explicitly by the scheme
    double dconvex(double s) const {
        s = guard(s);
        return std::log1p(s) - std::log1p(-s);
    }
    double d2convex(double s) const {
        s = guard(s);
        return 2.0 / ((1.0 - s) * (1.0 + s));
    }

private:
    double guard(double s) const {
        const double lim = 1.0 - s_guard;
        if (s > lim || s < -lim) {
            if (strict_ && (s >= 1.0 || s <= -1.0))
                throw std::domain_error("LogPotential: |s| >= 1 in strict mode");
            clamp_events_.fetch_add(1, std::memory_order_relaxed);
            return s > lim ? lim : -lim;
        }
        return s;
    }

    double c0_;
    bool strict_;
    mutable std::atomic<uint64_t> clamp_events_{0};
};

inline double potential_eval(const LogPotential& pot, double s, int order) {
    return pot.eval(s, order);
}

enum class GammaDeriv { value, d_phi, d_sigma };

// Proliferation source gamma(phi, sigma) = a * tanh(b_sigma*sigma - b_phi*phi + shift).
// Globally bounded with bounded derivatives; sup|gamma| = a must stay below m.
struct GammaSource {
    enum class Kind { tanh_default, custom };
    Kind kind = Kind::tanh_default;
    double a = 0.5;
    double b_phi = 1.0;   // custom coefficients; tanh_default keeps all at 1,0
    double b_sigma = 1.0;
    double shift = 0.0;

    static GammaSource tanh_default(double amplitude) {
        GammaSource g;
        g.kind = Kind::tanh_default;
        g.a = amplitude;
        if (!(g.a >= 0.0)) throw std::invalid_argument("GammaSource: a must be >= 0");
        return g;
    }
    static GammaSource custom(double amplitude, double b_phi, double b_sigma, double shift) {
        GammaSource g;
        g.kind = Kind::custom;
        g.a = amplitude;
        g.b_phi = b_phi;
        g.b_sigma = b_sigma;
        g.shift = shift;
        if (!(g.a >= 0.0)) throw std::invalid_argument("GammaSource: a must be >= 0");
        return g;
    }

    // sup|gamma| = a < m
    void validate_against(double m) const {
        if (!(a < m))
            throw std::invalid_argument("GammaSource: amplitude must satisfy a < m");
    }

    double eval(double phi, double sigma, GammaDeriv d = GammaDeriv::value) const {
        const double arg = b_sigma * sigma - b_phi * phi + shift;
        switch (d) {
            case GammaDeriv::value: return a * std::tanh(arg);
            case GammaDeriv::d_phi: {
                const double c = std::cosh(arg);
                return -a * b_phi / (c * c);
            }
            case GammaDeriv::d_sigma: {
                const double c = std::cosh(arg);
                return a * b_sigma / (c * c);
            }
        }
        return 0.0;
    }
};

inline double gamma_eval(const GammaSource& g, double phi, double sigma,
                         GammaDeriv d = GammaDeriv::value) {
    return g.eval(phi, sigma, d);
}

} // namespace chks
