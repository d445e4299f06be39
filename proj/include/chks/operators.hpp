// operators.hpp - discrete spatial operators on the Neumann grid and the
// matrix-free solvers (preconditioned CG, BiCGStab, safeguarded Newton).
//
// All stencils are finite-volume forms on trapezoid cells; with the mirror
// ghost convention they are self-adjoint in the weighted inner product
// field_inner and annihilate constants exactly, which is what makes the
// discrete transposes in the sensitivity module exact.
#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "chks/grid.hpp"

namespace chks {

// ---------------------------------------------------------------------------
// stencils
// ---------------------------------------------------------------------------

// 5-point Laplacian with mirror ghosts (f_{-1,j} = f_{1,j} etc.).
inline void apply_laplacian(const Field& f, Field& out) {
    const Grid2D& g = f.grid();
    const double ax = 1.0 / (g.hx * g.hx), ay = 1.0 / (g.hy * g.hy);
    for (int j = 0; j < g.ny; ++j) {
        const int jm = (j == 0) ? 1 : j - 1;
        const int jp = (j == g.ny - 1) ? g.ny - 2 : j + 1;
        for (int i = 0; i < g.nx; ++i) {
            const int im = (i == 0) ? 1 : i - 1;
            const int ip = (i == g.nx - 1) ? g.nx - 2 : i + 1;
            out(i, j) = ax * (f(ip, j) + f(im, j) - 2.0 * f(i, j)) +
                        ay * (f(i, jp) + f(i, jm) - 2.0 * f(i, j));
        }
    }
}

inline Field laplacian_neumann(const Field& f) {
    Field out(f.grid());
    apply_laplacian(f, out);
    return out;
}

// out = -lap f  (the positive-semidefinite side used by the implicit operators)
inline void apply_neg_laplacian(const Field& f, Field& out) {
    apply_laplacian(f, out);
    scale(out, -1.0);
}

// Conservative flux divergence div(sigma grad phi): arithmetic face averages
// of sigma, zero flux through boundary faces, half face lengths along the
// boundary and trapezoid cell measures. With sigma == 1 this collapses to
// the 5-point mirror stencil exactly.
inline void apply_chemotaxis_div(const Field& sigma, const Field& phi, Field& out) {
    require_same_grid(sigma, phi);
    const Grid2D& g = sigma.grid();
    out.fill(0.0);
    // x-faces
    for (int j = 0; j < g.ny; ++j) {
        const double len = ((j == 0 || j == g.ny - 1) ? 0.5 : 1.0) * g.hy;
        for (int i = 0; i + 1 < g.nx; ++i) {
            const double grad = (phi(i + 1, j) - phi(i, j)) / g.hx;
            const double s = 0.5 * (sigma(i, j) + sigma(i + 1, j));
            const double flux = s * grad * len;
            out(i, j) += flux;
            out(i + 1, j) -= flux;
        }
    }
    // y-faces
    for (int j = 0; j + 1 < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const double len = ((i == 0 || i == g.nx - 1) ? 0.5 : 1.0) * g.hx;
            const double grad = (phi(i, j + 1) - phi(i, j)) / g.hy;
            const double s = 0.5 * (sigma(i, j) + sigma(i, j + 1));
            const double flux = s * grad * len;
            out(i, j) += flux;
            out(i, j + 1) -= flux;
        }
    }
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            out(i, j) /= g.cell_area(i, j);
}

inline Field chemotaxis_div(const Field& sigma, const Field& phi) {
    Field out(sigma.grid());
    apply_chemotaxis_div(sigma, phi, out);
    return out;
}

// Weighted-inner-product transpose of sigma -> div(sigma grad phi) at fixed phi:
// out_c = (1/|cell_c|) * sum over faces at c of (1/2) len_f grad_f (r_left - r_right).
// Discrete analogue of r -> -grad(phi) . grad(r).
inline void apply_chemotaxis_div_transpose(const Field& phi, const Field& r, Field& out) {
    require_same_grid(phi, r);
    const Grid2D& g = phi.grid();
    out.fill(0.0);
    for (int j = 0; j < g.ny; ++j) {
        const double len = ((j == 0 || j == g.ny - 1) ? 0.5 : 1.0) * g.hy;
        for (int i = 0; i + 1 < g.nx; ++i) {
            const double grad = (phi(i + 1, j) - phi(i, j)) / g.hx;
            const double val = 0.5 * len * grad * (r(i, j) - r(i + 1, j));
            out(i, j) += val;
            out(i + 1, j) += val;
        }
    }
    for (int j = 0; j + 1 < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const double len = ((i == 0 || i == g.nx - 1) ? 0.5 : 1.0) * g.hx;
            const double grad = (phi(i, j + 1) - phi(i, j)) / g.hy;
            const double val = 0.5 * len * grad * (r(i, j) - r(i, j + 1));
            out(i, j) += val;
            out(i, j + 1) += val;
        }
    }
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            out(i, j) /= g.cell_area(i, j);
}

inline Field chemotaxis_div_transpose(const Field& phi, const Field& r) {
    Field out(phi.grid());
    apply_chemotaxis_div_transpose(phi, r, out);
    return out;
}

// ---------------------------------------------------------------------------
// affine operator descriptor  c0*I + c1*(-lap) + c2*diag(w)
// ---------------------------------------------------------------------------

struct LinOpSpec {
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    std::optional<Field> w;

    void apply(const Field& x, Field& out) const {
        if (c1 != 0.0) {
            apply_laplacian(x, out);
            scale(out, -c1);
        } else {
            out.fill(0.0);
        }
        const int n = x.size();
        if (c2 != 0.0 && w) {
            const Field& ww = *w;
            for (int k = 0; k < n; ++k) out[k] += (c0 + c2 * ww[k]) * x[k];
        } else {
            for (int k = 0; k < n; ++k) out[k] += c0 * x[k];
        }
    }

    // sufficient condition for positive definiteness
    bool is_spd() const {
        if (c1 < 0.0) return false;
        double shift = c0;
        if (c2 != 0.0 && w) shift = c0 + c2 * min_value(*w);
        else if (c2 != 0.0) return false;
        return shift > 0.0;
    }

    double mean_shift() const {
        if (c2 != 0.0 && w) return c0 + c2 * field_mean(*w);
        return c0;
    }
};

struct SolveReport {
    int iterations = 0;
    double final_residual = 0.0;   // weighted L2 norm of the residual
    bool converged = false;
};

// ---------------------------------------------------------------------------
// cosine (DCT-I) diagonalization of the mirror-ghost Laplacian
// ---------------------------------------------------------------------------
//
// The mirror stencil has the exact eigenbasis e_k(i) = cos(pi k i/(N-1)) with
// -lap eigenvalues (2 - 2cos(pi k/(N-1)))/h^2, orthogonal in the trapezoid
// weights. This gives a direct solve for any polynomial in -lap with constant
// coefficients; it is used as the preconditioner for the variable-coefficient
// implicit operators and as an exact solver when the coefficients are constant.
class CosBasis1D {
public:
    CosBasis1D() = default;
    CosBasis1D(int n, double h) : n_(n) {
        c_.resize(static_cast<size_t>(n) * n);
        lambda_.resize(n);
        inv_norm_.resize(n);
        const double pi = 3.14159265358979323846;
        for (int k = 0; k < n; ++k) {
            lambda_[k] = (2.0 - 2.0 * std::cos(pi * k / (n - 1))) / (h * h);
            double nk = 0.0;
            for (int i = 0; i < n; ++i) {
                const double v = std::cos(pi * k * i / (n - 1));
                c_[static_cast<size_t>(k) * n + i] = v;
                const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
                nk += w * v * v;
            }
            inv_norm_[k] = 1.0 / nk;
        }
    }
    int n() const { return n_; }
    double lambda(int k) const { return lambda_[k]; }
    // analysis: coef_k = (1/n_k) sum_i w_i f_i cos(k,i); synthesis: f_i = sum_k coef_k cos(k,i)
    void analyze(const double* f, double* coef) const {
        for (int k = 0; k < n_; ++k) {
            const double* row = &c_[static_cast<size_t>(k) * n_];
            double s = 0.5 * row[0] * f[0] + 0.5 * row[n_ - 1] * f[n_ - 1];
            for (int i = 1; i < n_ - 1; ++i) s += row[i] * f[i];
            coef[k] = s * inv_norm_[k];
        }
    }
    void synthesize(const double* coef, double* f) const {
        for (int i = 0; i < n_; ++i) f[i] = 0.0;
        for (int k = 0; k < n_; ++k) {
            const double* row = &c_[static_cast<size_t>(k) * n_];
            const double a = coef[k];
            if (a == 0.0) continue;
            for (int i = 0; i < n_; ++i) f[i] += a * row[i];
        }
    }

private:
    int n_ = 0;
    std::vector<double> c_;
    std::vector<double> lambda_;
    std::vector<double> inv_norm_;
};

class SpectralSolver {
public:
    SpectralSolver() = default;
    explicit SpectralSolver(const Grid2D& g)
        : grid_(g), bx_(g.nx, g.hx), by_(g.ny, g.hy),
          work_(static_cast<size_t>(g.n())), col_in_(g.ny), col_out_(g.ny) {}

    const Grid2D& grid() const { return grid_; }

    // out = (alpha I + beta (-lap) + delta (-lap)^2)^{-1} rhs,  exact
    void solve_poly(double alpha, double beta, double delta, const Field& rhs, Field& out) {
        if (!(grid_ == rhs.grid()))
            throw std::invalid_argument("SpectralSolver: grid mismatch");
        const int nx = grid_.nx, ny = grid_.ny;
        // analyze rows
        for (int j = 0; j < ny; ++j)
            bx_.analyze(rhs.data() + static_cast<size_t>(j) * nx, work_.data() + static_cast<size_t>(j) * nx);
        // analyze columns
        for (int i = 0; i < nx; ++i) {
            for (int j = 0; j < ny; ++j) col_in_[j] = work_[static_cast<size_t>(j) * nx + i];
            by_.analyze(col_in_.data(), col_out_.data());
            for (int j = 0; j < ny; ++j) work_[static_cast<size_t>(j) * nx + i] = col_out_[j];
        }
        // divide by the symbol and transform back
        for (int ky = 0; ky < ny; ++ky) {
            for (int kx = 0; kx < nx; ++kx) {
                const double lam = bx_.lambda(kx) + by_.lambda(ky);
                const double denom = alpha + beta * lam + delta * lam * lam;
                work_[static_cast<size_t>(ky) * nx + kx] /= denom;
            }
        }
        for (int i = 0; i < nx; ++i) {
            for (int j = 0; j < ny; ++j) col_in_[j] = work_[static_cast<size_t>(j) * nx + i];
            by_.synthesize(col_in_.data(), col_out_.data());
            for (int j = 0; j < ny; ++j) work_[static_cast<size_t>(j) * nx + i] = col_out_[j];
        }
        for (int j = 0; j < ny; ++j)
            bx_.synthesize(work_.data() + static_cast<size_t>(j) * nx, out.data() + static_cast<size_t>(j) * nx);
    }

private:
    Grid2D grid_;
    CosBasis1D bx_, by_;
    std::vector<double> work_;
    std::vector<double> col_in_, col_out_;
};

// ---------------------------------------------------------------------------
// preconditioned conjugate gradient for LinOpSpec systems
// ---------------------------------------------------------------------------

// Relative residual contract: ||op x - rhs|| <= tol * ||rhs|| in the weighted
// L2 norm. The preconditioner is the spectral inverse of the constant
// coefficient surrogate c0 + c2*mean(w) + c1*(-lap); for c2 == 0 it is exact
// and the iteration terminates immediately.
inline std::pair<Field, SolveReport> cg_solve(const LinOpSpec& op, const Field& rhs,
                                              const Field& x0, double tol, int max_iter,
                                              SpectralSolver* spectral = nullptr) {
    require_same_grid(rhs, x0);
    if (!op.is_spd())
        throw std::invalid_argument("cg_solve: operator spec is not positive definite");

    const double rhs_norm = field_norm(rhs);
    Field x = x0;
    SolveReport rep;
    if (rhs_norm == 0.0) {
        x.fill(0.0);
        rep.converged = true;
        return {x, rep};
    }

    SpectralSolver local;
    SpectralSolver* sp = spectral;
    const bool use_spectral = op.c1 > 0.0;
    if (use_spectral && sp == nullptr) {
        local = SpectralSolver(rhs.grid());
        sp = &local;
    }
    const double shift = op.mean_shift();

    Field r(rhs.grid()), z(rhs.grid()), p(rhs.grid()), ap(rhs.grid());
    op.apply(x, ap);
    for (int k = 0; k < r.size(); ++k) r[k] = rhs[k] - ap[k];

    auto precondition = [&](const Field& in, Field& out) {
        if (use_spectral) {
            sp->solve_poly(shift, op.c1, 0.0, in, out);
        } else if (op.c2 != 0.0 && op.w) {
            const Field& w = *op.w;
            for (int k = 0; k < in.size(); ++k) out[k] = in[k] / (op.c0 + op.c2 * w[k]);
        } else {
            for (int k = 0; k < in.size(); ++k) out[k] = in[k] / op.c0;
        }
    };

    precondition(r, z);
    p = z;
    double rz = field_inner(r, z);
    double res = field_norm(r);
    const double target = tol * rhs_norm;

    int it = 0;
    while (res > target && it < max_iter) {
        op.apply(p, ap);
        const double pap = field_inner(p, ap);
        if (!(pap > 0.0))
            throw std::runtime_error("cg_solve: operator lost positive definiteness");
        const double alpha = rz / pap;
        axpy(alpha, p, x);
        axpy(-alpha, ap, r);
        res = field_norm(r);
        ++it;
        if (res <= target) break;
        precondition(r, z);
        const double rz_new = field_inner(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (int k = 0; k < p.size(); ++k) p[k] = z[k] + beta * p[k];
    }
    rep.iterations = it;
    rep.final_residual = res;
    rep.converged = res <= target;
    return {x, rep};
}

// ---------------------------------------------------------------------------
// BiCGStab for the nonsymmetric Schur operators (right preconditioned)
// ---------------------------------------------------------------------------

using ApplyFn = std::function<void(const Field&, Field&)>;

inline SolveReport bicgstab_solve(const ApplyFn& apply, const ApplyFn& precondition,
                                  const Field& rhs, Field& x, double tol, int max_iter) {
    const double rhs_norm = field_norm(rhs);
    SolveReport rep;
    if (rhs_norm == 0.0) {
        x.fill(0.0);
        rep.converged = true;
        return rep;
    }
    const Grid2D& g = rhs.grid();
    Field r(g), r0(g), p(g), v(g), s(g), t(g), ph(g), sh(g);
    apply(x, v);
    for (int k = 0; k < r.size(); ++k) r[k] = rhs[k] - v[k];
    r0 = r;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    p.fill(0.0);
    v.fill(0.0);
    const double target = tol * rhs_norm;
    double res = field_norm(r);

    int it = 0;
    while (res > target && it < max_iter) {
        const double rho_new = field_inner(r0, r);
        if (rho_new == 0.0) break; // breakdown; restart would be needed
        if (it == 0) {
            p = r;
        } else {
            const double beta = (rho_new / rho) * (alpha / omega);
            for (int k = 0; k < p.size(); ++k) p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        rho = rho_new;
        precondition(p, ph);
        apply(ph, v);
        const double r0v = field_inner(r0, v);
        if (r0v == 0.0) break;
        alpha = rho / r0v;
        for (int k = 0; k < s.size(); ++k) s[k] = r[k] - alpha * v[k];
        if (field_norm(s) <= target) {
            axpy(alpha, ph, x);
            res = field_norm(s);
            ++it;
            break;
        }
        precondition(s, sh);
        apply(sh, t);
        const double tt = field_inner(t, t);
        if (tt == 0.0) break;
        omega = field_inner(t, s) / tt;
        axpy(alpha, ph, x);
        axpy(omega, sh, x);
        for (int k = 0; k < r.size(); ++k) r[k] = s[k] - omega * t[k];
        res = field_norm(r);
        ++it;
        if (omega == 0.0) break;
    }
    rep.iterations = it;
    rep.final_residual = res;
    rep.converged = res <= target;
    return rep;
}

// ---------------------------------------------------------------------------
// damped Newton with the separation safeguard
// ---------------------------------------------------------------------------

struct NewtonOptions {
    // accept when ||R|| <= tol * (1 + rhs_scale + ||R0||); the initial-defect
    // term keeps the target above the evaluation noise floor of stiff residuals
    double tol = 1e-12;
    double rhs_scale = 0.0;
    int max_iter = 50;
    double bound = 1.0 - s_guard; // iterates kept with ||x||_inf <= bound
    double min_damping = 1e-8;
    double lin_tol = 1e-10;
    int lin_max_iter = 2000;
};

struct NewtonReport {
    int iterations = 0;
    long linear_iterations = 0;
    double final_residual = 0.0;
    bool converged = false;
};

// residual(x, R_out); jacobian_apply(x, v, Jv_out) evaluated at the current
// iterate; jacobian_precondition may be empty. The step is halved until the
// trial iterate stays strictly inside (-1,1) by the safeguard margin and the
// residual norm decreases.
inline NewtonReport newton_safeguarded(
    const std::function<void(const Field&, Field&)>& residual,
    const std::function<void(const Field&, const Field&, Field&)>& jacobian_apply,
    const ApplyFn& jacobian_precondition,
    Field& x, const NewtonOptions& opt) {

    const Grid2D& g = x.grid();
    Field res(g), step(g), trial(g), trial_res(g);
    NewtonReport rep;

    if (linf_norm(x) > opt.bound)
        throw std::invalid_argument("newton_safeguarded: initial iterate violates the bound");

    residual(x, res);
    double rnorm = field_norm(res);
    const double target = opt.tol * (1.0 + opt.rhs_scale + rnorm);

    while (rnorm > target && rep.iterations < opt.max_iter) {
        // solve J step = -res at the current iterate
        Field neg_res = res;
        scale(neg_res, -1.0);
        step.fill(0.0);
        auto apply = [&](const Field& v, Field& out) { jacobian_apply(x, v, out); };
        ApplyFn precond = jacobian_precondition
                              ? jacobian_precondition
                              : ApplyFn([](const Field& in, Field& out) { out = in; });
        SolveReport lin = bicgstab_solve(apply, precond, neg_res, step, opt.lin_tol, opt.lin_max_iter);
        rep.linear_iterations += lin.iterations;
        if (!lin.converged && lin.final_residual > 0.1 * rnorm)
            throw std::runtime_error("newton_safeguarded: inner linear solve stalled");

        double damping = 1.0;
        bool accepted = false;
        while (damping >= opt.min_damping) {
            trial = x;
            axpy(damping, step, trial);
            if (linf_norm(trial) <= opt.bound) {
                residual(trial, trial_res);
                const double tnorm = field_norm(trial_res);
                if (tnorm < rnorm || tnorm <= target) {
                    x = trial;
                    res = trial_res;
                    rnorm = tnorm;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if (!accepted)
            throw std::runtime_error("newton_safeguarded: step collapse (damping below 1e-8)");
        ++rep.iterations;
    }

    rep.final_residual = rnorm;
    rep.converged = rnorm <= target;
    if (!rep.converged)
        throw std::runtime_error("newton_safeguarded: no convergence within max_iter");
    return rep;
}

} // namespace chks
