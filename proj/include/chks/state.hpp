// state.hpp - forward-in-time solver for the coupled phase-field/nutrient
// system, with invariant monitors (separation, positivity, mass balances,
// free energy) and the trajectory container + on-disk layout.
//
// One step, from (phi^n, sigma^n) with control u_n:
//   (a) Cahn-Hilliard substep, coupled nonlinear solve for (phi, mu) at n+1:
//         (phi' - phi^n)/dt - lap mu' + m phi' = gamma(phi^n, sigma^n)
//         tau (phi' - phi^n)/dt - lap phi' + Fc'(phi') - 2 c0 phi^n - sigma^n = mu'
//       with Fc'(s) = ln((1+s)/(1-s)) implicit (convex) and -2 c0 s explicit
//       (convex-concave splitting); damped safeguarded Newton on the coupled
//       (phi, mu) pair, stepping through the Schur-reduced Jacobian.
//   (b) nutrient substep, one SPD solve for sigma at n+1:
//         (sig' - sig^n)/dt - lap sig' + div(sig^n grad phi') = sig' - sig^n sig' + u_n
//       i.e. [(1/dt - 1) I + (-lap) + diag(sig^n)] sig' = sig^n/dt - div(sig^n grad phi') + u_n.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "chks/grid.hpp"
#include "chks/model.hpp"
#include "chks/operators.hpp"

namespace chks {

inline constexpr double sigma_pos_tol = 1e-8;

struct StateTriple {
    Field phi, mu, sigma;
    double t = 0.0;
};

struct InitialData {
    Field phi0, sigma0;
    double delta_init = 1e-3;

    void validate() const {
        require_same_grid(phi0, sigma0);
        phi0.require_finite("phi0");
        sigma0.require_finite("sigma0");
        if (linf_norm(phi0) > 1.0 - delta_init)
            throw std::invalid_argument("InitialData: ||phi0||_inf must be <= 1 - delta_init");
        if (min_value(sigma0) < 0.0)
            throw std::invalid_argument("InitialData: sigma0 must be nonnegative");
    }
};

struct MonitorRow {
    int step = 0;
    double time = 0.0;
    double phi_min = 0.0, phi_max = 0.0;
    double sigma_min = 0.0, sigma_max = 0.0;
    double mass_phi = 0.0, mass_sigma = 0.0;
    double energy_total = 0.0, energy_gl = 0.0, energy_m = 0.0;
    int newton_iters = 0;
    long cg_iters = 0;
};

struct EnergyReport {
    double total = 0.0;
    double ginzburg_landau = 0.0;
    double chemo_mass = 0.0;
};

// E(phi) = 1/2 <|grad phi|^2, 1> + <F(phi), 1>
// M(phi, sigma) = <sigma (ln sigma - 1) + sigma (1 - phi), 1>, with the ln
// argument floored at s_guard so that sigma == 0 contributes exactly zero.
inline EnergyReport free_energy(const StateTriple& s, const LogPotential& pot) {
    const Grid2D& g = s.phi.grid();
    EnergyReport e;
    double fsum = 0.0, msum = 0.0;
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const double w = g.cell_area(i, j);
            const double phi = s.phi(i, j);
            const double sig = s.sigma(i, j);
            fsum += w * pot.eval(phi, 0);
            const double lnarg = sig > s_guard ? sig : s_guard;
            msum += w * (sig * (std::log(lnarg) - 1.0) + sig * (1.0 - phi));
        }
    }
    e.ginzburg_landau = 0.5 * grad_energy(s.phi) + fsum;
    e.chemo_mass = msum;
    e.total = e.ginzburg_landau + e.chemo_mass;
    return e;
}

struct StepStats {
    int newton_iters = 0;
    long newton_lin_iters = 0;
    int sigma_cg_iters = 0;
};

// ---------------------------------------------------------------------------
// trajectory container
// ---------------------------------------------------------------------------

struct StateTrajectory {
    Grid2D grid;
    ModelParams params;
    GammaSource gamma;
    std::vector<double> times;            // nt+1 entries
    std::vector<Field> phi, sigma;        // nt+1 entries each
    uint64_t control_hash = 0;
    std::vector<MonitorRow> monitors;

    int nt() const { return static_cast<int>(times.size()) - 1; }

    // mu is not stored; it is recovered exactly from the scheme's algebra.
    Field mu_at(int n, const LogPotential& pot) const {
        const double dt = params.dt();
        Field mu(grid);
        if (n == 0) {
            apply_neg_laplacian(phi[0], mu);
            for (int k = 0; k < mu.size(); ++k)
                mu[k] += pot.eval(phi[0][k], 1) - sigma[0][k];
            return mu;
        }
        apply_neg_laplacian(phi[n], mu);
        const double c0 = pot.c0();
        for (int k = 0; k < mu.size(); ++k) {
            mu[k] += (params.tau / dt) * (phi[n][k] - phi[n - 1][k]) +
                     pot.dconvex(phi[n][k]) - 2.0 * c0 * phi[n - 1][k] - sigma[n - 1][k];
        }
        return mu;
    }

    StateTriple triple_at(int n, const LogPotential& pot) const {
        return StateTriple{phi[n], mu_at(n, pot), sigma[n], times[n]};
    }

    // max-over-time separation margin 1 - max_n ||phi^n||_inf and min sigma
    double separation_margin() const {
        double m = 1.0;
        for (const auto& f : phi) m = std::min(m, 1.0 - linf_norm(f));
        return m;
    }
    double min_sigma() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& f : sigma) m = std::min(m, min_value(f));
        return m;
    }
};

// Discrete shadows of the a-priori stability bound: these are reported by
// the tooling; no quantitative constant is asserted.
struct StabilityNorms {
    double phi_h1_max = 0.0;      // max_n ||phi^n||_H1
    double phi_dt_l2 = 0.0;       // (sum_n dt ||(phi^{n+1}-phi^n)/dt||^2)^{1/2}
    double sigma_l2_max = 0.0;    // max_n ||sigma^n||
    double sigma_h1_l2 = 0.0;     // (sum_n dt ||sigma^n||_H1^2)^{1/2}
};

inline StabilityNorms stability_norms(const StateTrajectory& traj) {
    StabilityNorms s;
    const int nt = traj.nt();
    const double dt = traj.params.dt();
    for (int n = 0; n <= nt; ++n) {
        s.phi_h1_max = std::max(s.phi_h1_max, h1_norm(traj.phi[n]));
        s.sigma_l2_max = std::max(s.sigma_l2_max, field_norm(traj.sigma[n]));
        if (n < nt) {
            Field d = traj.phi[n + 1];
            axpy(-1.0, traj.phi[n], d);
            scale(d, 1.0 / dt);
            s.phi_dt_l2 += dt * field_inner(d, d);
            const double sh = h1_norm(traj.sigma[n]);
            s.sigma_h1_l2 += dt * sh * sh;
        }
    }
    s.phi_dt_l2 = std::sqrt(s.phi_dt_l2);
    s.sigma_h1_l2 = std::sqrt(s.sigma_h1_l2);
    return s;
}

inline uint64_t control_hash(const std::vector<Field>& u, const Grid2D& g, const ModelParams& p) {
    uint64_t h = fnv1a(&g.nx, sizeof g.nx);
    h = fnv1a(&g.ny, sizeof g.ny, h);
    h = fnv1a(&p.T, sizeof p.T, h);
    h = fnv1a(&p.nt, sizeof p.nt, h);
    for (const auto& f : u) h = hash_field(f, h);
    return h;
}

// ---------------------------------------------------------------------------
// forward solver
// ---------------------------------------------------------------------------

struct StateSolverOptions {
    bool strict_positivity = false;  // promote sigma-negativity beyond tol to an error
};

// worst observed nutrient negativity beyond tolerance, with its location
struct PositivityReport {
    long events = 0;
    double worst = 0.0;
    int i = -1, j = -1, step = -1;
};

class StateSolver {
public:
    StateSolver(const Grid2D& grid, const ModelParams& params, const LogPotential& pot,
                const GammaSource& gamma, StateSolverOptions opt = {})
        : grid_(grid), params_(params), pot_(pot), gamma_(gamma), opt_(opt), spectral_(grid) {
        params_.validate();
        gamma_.validate_against(params_.m);
    }

    const Grid2D& grid() const { return grid_; }
    const ModelParams& params() const { return params_; }
    const LogPotential& potential() const { return pot_; }
    const GammaSource& gamma() const { return gamma_; }

    // one step; prev must satisfy the triple invariants
    StateTriple step_state(const StateTriple& prev, const Field& u_n, StepStats* stats = nullptr) {
        require_same_grid(prev.phi, u_n);
        const double dt = params_.dt();
        const double a = 1.0 / dt + params_.m;
        const double tau_dt = params_.tau / dt;
        const double c0 = pot_.c0();
        const int n = grid_.n();

        // b1 = gamma^n + phi^n/dt,  b2 = (tau/dt + 2 c0) phi^n + sigma^n
        Field b1(grid_), b2(grid_);
        for (int k = 0; k < n; ++k) {
            b1[k] = gamma_.eval(prev.phi[k], prev.sigma[k]) + prev.phi[k] / dt;
            b2[k] = (tau_dt + 2.0 * c0) * prev.phi[k] + prev.sigma[k];
        }

        // Damped Newton on the coupled pair (phi, mu):
        //   R1 = a phi + (-lap) mu - b1
        //   R2 = N(phi) - mu - b2,  N(x) = tau/dt x + (-lap) x + Fc'(x)
        // step from the Schur-reduced Jacobian (a I + (-lap) B) dphi = -(R1 + (-lap) R2),
        // dmu = B dphi + R2. Keeping mu as an iterate keeps each residual one
        // Laplacian deep, so the attainable floor stays near machine precision.
        StateTriple next;
        next.t = prev.t + dt;
        next.phi = prev.phi;
        next.mu = Field(grid_);
        Field work1(grid_);
        auto eval_n = [&](const Field& x, Field& out) {
            apply_neg_laplacian(x, out);
            for (int k = 0; k < n; ++k) out[k] += tau_dt * x[k] + pot_.dconvex(x[k]);
        };
        eval_n(next.phi, next.mu);
        for (int k = 0; k < n; ++k) next.mu[k] -= b2[k];

        Field r1(grid_), r2(grid_);
        auto eval_residuals = [&](const Field& phi, const Field& mu) {
            apply_neg_laplacian(mu, r1);
            for (int k = 0; k < n; ++k) r1[k] += a * phi[k] - b1[k];
            eval_n(phi, r2);
            for (int k = 0; k < n; ++k) r2[k] -= mu[k] + b2[k];
            return std::sqrt(field_inner(r1, r1) + field_inner(r2, r2));
        };
        double rnorm = eval_residuals(next.phi, next.mu);
        const double target =
            params_.newton_tol * (1.0 + field_norm(b1) + field_norm(b2) + rnorm);

        double fbar = 0.0;
        for (int k = 0; k < n; ++k) fbar += pot_.d2convex(prev.phi[k]);
        fbar /= n;
        auto precond = [&](const Field& in, Field& out) {
            spectral_.solve_poly(a, tau_dt + fbar, 1.0, in, out);
        };

        NewtonReport nrep;
        Field rhs_lin(grid_), dphi(grid_), dmu(grid_), phi_t(grid_), mu_t(grid_);
        while (rnorm > target) {
            if (nrep.iterations >= params_.newton_max_iter)
                throw std::runtime_error("step_state: Newton did not converge within max_iter");
            auto jacobian_apply = [&](const Field& v, Field& out) {
                apply_neg_laplacian(v, work1);
                for (int k = 0; k < n; ++k)
                    work1[k] += (tau_dt + pot_.d2convex(next.phi[k])) * v[k];
                apply_neg_laplacian(work1, out);
                for (int k = 0; k < n; ++k) out[k] += a * v[k];
            };
            apply_neg_laplacian(r2, rhs_lin);
            for (int k = 0; k < n; ++k) rhs_lin[k] = -r1[k] - rhs_lin[k];
            dphi.fill(0.0);
            SolveReport lin = bicgstab_solve(jacobian_apply, precond, rhs_lin, dphi,
                                             std::max(params_.cg_tol, 1e-13), params_.cg_max_iter);
            nrep.linear_iterations += lin.iterations;
            if (!lin.converged && lin.final_residual > 0.1 * rnorm)
                throw std::runtime_error("step_state: Newton linear solve stalled");
            // dmu = B dphi + R2
            apply_neg_laplacian(dphi, dmu);
            for (int k = 0; k < n; ++k)
                dmu[k] += (tau_dt + pot_.d2convex(next.phi[k])) * dphi[k] + r2[k];

            double damping = 1.0;
            bool accepted = false;
            while (damping >= 1e-8) {
                phi_t = next.phi;
                axpy(damping, dphi, phi_t);
                if (linf_norm(phi_t) <= 1.0 - s_guard) {
                    mu_t = next.mu;
                    axpy(damping, dmu, mu_t);
                    const double tnorm = eval_residuals(phi_t, mu_t);
                    if (tnorm < rnorm || tnorm <= target) {
                        next.phi = phi_t;
                        next.mu = mu_t;
                        rnorm = tnorm;
                        accepted = true;
                        break;
                    }
                }
                damping *= 0.5;
            }
            if (!accepted)
                throw std::runtime_error("step_state: Newton step collapse (damping below 1e-8)");
            ++nrep.iterations;
        }

        if (linf_norm(next.phi) > 1.0 - s_guard)
            throw std::runtime_error("step_state: separation violated after Newton solve");

        // nutrient substep
        LinOpSpec A;
        A.c0 = 1.0 / dt - 1.0;
        A.c1 = 1.0;
        A.c2 = 1.0;
        A.w = prev.sigma;
        if (!A.is_spd())
            throw std::runtime_error("step_state: nutrient operator not positive definite (decrease dt)");
        Field rhs_sigma(grid_);
        apply_chemotaxis_div(prev.sigma, next.phi, rhs_sigma);
        for (int k = 0; k < n; ++k)
            rhs_sigma[k] = prev.sigma[k] / dt - rhs_sigma[k] + u_n[k];
        auto [sig, srep] = cg_solve(A, rhs_sigma, prev.sigma, params_.cg_tol, params_.cg_max_iter, &spectral_);
        if (!srep.converged)
            throw std::runtime_error("step_state: nutrient CG did not converge");
        next.sigma = std::move(sig);

        const double smin = min_value(next.sigma);
        if (smin < -sigma_pos_tol) {
            int wi = 0, wj = 0;
            for (int j = 0; j < grid_.ny; ++j)
                for (int i = 0; i < grid_.nx; ++i)
                    if (next.sigma(i, j) == smin) {
                        wi = i;
                        wj = j;
                    }
            if (opt_.strict_positivity)
                throw std::runtime_error(
                    "step_state: sigma = " + std::to_string(smin) + " at node (" +
                    std::to_string(wi) + "," + std::to_string(wj) + ") below -1e-8 (strict positivity)");
            ++positivity_.events;
            if (smin < positivity_.worst) {
                positivity_.worst = smin;
                positivity_.i = wi;
                positivity_.j = wj;
            }
        }
        next.phi.require_finite("phi");
        next.sigma.require_finite("sigma");

        if (stats) {
            stats->newton_iters = nrep.iterations;
            stats->newton_lin_iters = nrep.linear_iterations;
            stats->sigma_cg_iters = srep.iterations;
        }
        return next;
    }

    StateTrajectory solve_state(const InitialData& init, const std::vector<Field>& u) {
        init.validate();
        if (!(init.phi0.grid() == grid_))
            throw std::invalid_argument("solve_state: initial data grid mismatch");
        if (static_cast<int>(u.size()) != params_.nt)
            throw std::invalid_argument("solve_state: control must have nt entries");
        const double bytes = 2.0 * 8.0 * grid_.nx * grid_.ny * (params_.nt + 1.0);
        if (bytes > 4.0 * 1024.0 * 1024.0 * 1024.0)
            throw std::invalid_argument("solve_state: trajectory storage would exceed 4 GiB");
        for (const auto& f : u) {
            require_same_grid(f, init.phi0);
            if (linf_norm(f) > params_.u_cap)
                throw std::invalid_argument("solve_state: control exceeds the L-inf cap");
        }

        StateTrajectory traj;
        traj.grid = grid_;
        traj.params = params_;
        traj.gamma = gamma_;
        traj.control_hash = control_hash(u, grid_, params_);
        traj.times.reserve(params_.nt + 1);
        traj.phi.reserve(params_.nt + 1);
        traj.sigma.reserve(params_.nt + 1);

        StateTriple cur;
        cur.phi = init.phi0;
        cur.sigma = init.sigma0;
        cur.mu = Field(grid_);
        cur.t = 0.0;
        traj.times.push_back(0.0);
        traj.phi.push_back(cur.phi);
        traj.sigma.push_back(cur.sigma);
        traj.monitors.push_back(make_monitor(traj, 0, StepStats{}));

        const double dt = params_.dt();
        for (int nstep = 0; nstep < params_.nt; ++nstep) {
            StepStats stats;
            StateTriple next;
            const long events_before = positivity_.events;
            try {
                next = step_state(cur, u[nstep], &stats);
            } catch (const std::exception& e) {
                throw std::runtime_error("solve_state: step " + std::to_string(nstep + 1) +
                                         " failed: " + e.what());
            }
            if (positivity_.events > events_before) positivity_.step = nstep + 1;
            next.t = (nstep + 1) * dt;
            traj.times.push_back(next.t);
            traj.phi.push_back(next.phi);
            traj.sigma.push_back(next.sigma);
            cur = std::move(next);
            traj.monitors.push_back(make_monitor(traj, nstep + 1, stats));
        }
        return traj;
    }

    const PositivityReport& positivity() const { return positivity_; }

private:
    MonitorRow make_monitor(const StateTrajectory& traj, int n, const StepStats& st) const {
        MonitorRow r;
        r.step = n;
        r.time = traj.times[n];
        r.phi_min = min_value(traj.phi[n]);
        r.phi_max = max_value(traj.phi[n]);
        r.sigma_min = min_value(traj.sigma[n]);
        r.sigma_max = max_value(traj.sigma[n]);
        Field one(grid_, 1.0);
        r.mass_phi = field_inner(traj.phi[n], one);
        r.mass_sigma = field_inner(traj.sigma[n], one);
        StateTriple s{traj.phi[n], Field(), traj.sigma[n], traj.times[n]};
        EnergyReport e = free_energy(s, pot_);
        r.energy_total = e.total;
        r.energy_gl = e.ginzburg_landau;
        r.energy_m = e.chemo_mass;
        r.newton_iters = st.newton_iters;
        r.cg_iters = st.newton_lin_iters + st.sigma_cg_iters;
        return r;
    }

    Grid2D grid_;
    ModelParams params_;
    LogPotential pot_;
    GammaSource gamma_;
    StateSolverOptions opt_;
    SpectralSolver spectral_;
    PositivityReport positivity_;
};

// ---------------------------------------------------------------------------
// mass-balance residuals of the v = 1 identities (exact telescoping)
// ---------------------------------------------------------------------------

struct MassBalanceEntry {
    double r_phi = 0.0;    // |residual| / (1 + magnitude)
    double r_sigma = 0.0;
};

inline std::vector<MassBalanceEntry> mass_balance_report(const StateTrajectory& traj,
                                                         const std::vector<Field>& u,
                                                         const GammaSource& gamma) {
    const int nt = traj.nt();
    if (static_cast<int>(u.size()) != nt)
        throw std::invalid_argument("mass_balance_report: control length mismatch");
    const double dt = traj.params.dt();
    const double m = traj.params.m;
    Field one(traj.grid, 1.0);
    Field tmp(traj.grid);
    std::vector<MassBalanceEntry> out(nt);
    for (int n = 0; n < nt; ++n) {
        const double mass_new = field_inner(traj.phi[n + 1], one);
        const double mass_old = field_inner(traj.phi[n], one);
        for (int k = 0; k < tmp.size(); ++k)
            tmp[k] = gamma.eval(traj.phi[n][k], traj.sigma[n][k]);
        const double gsum = field_inner(tmp, one);
        const double lhs = (mass_new - mass_old) / dt + m * mass_new - gsum;
        const double mag = std::abs(mass_new - mass_old) / dt + m * std::abs(mass_new) + std::abs(gsum);
        out[n].r_phi = std::abs(lhs) / (1.0 + mag);

        const double smass_new = field_inner(traj.sigma[n + 1], one);
        const double smass_old = field_inner(traj.sigma[n], one);
        for (int k = 0; k < tmp.size(); ++k)
            tmp[k] = traj.sigma[n + 1][k] - traj.sigma[n][k] * traj.sigma[n + 1][k] + u[n][k];
        const double rsum = field_inner(tmp, one);
        const double slhs = (smass_new - smass_old) / dt - rsum;
        const double smag = std::abs(smass_new - smass_old) / dt + std::abs(rsum);
        out[n].r_sigma = std::abs(slhs) / (1.0 + smag);
    }
    return out;
}

// ---------------------------------------------------------------------------
// on-disk trajectory layout:
//   <dir>/meta.txt        key=value model/grid metadata
//   <dir>/phi_<n>.chks1, <dir>/sigma_<n>.chks1 at the save stride (and nt)
//   <dir>/monitors.csv
// ---------------------------------------------------------------------------

inline const char* monitors_csv_header() {
    return "step,time,phi_min,phi_max,sigma_min,sigma_max,mass_phi,mass_sigma,"
           "energy_total,energy_GL,energy_M,newton_iters,cg_iters";
}

inline void write_monitors_csv(const std::vector<MonitorRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << monitors_csv_header() << "\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf,
                      "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%ld",
                      r.step, r.time, r.phi_min, r.phi_max, r.sigma_min, r.sigma_max,
                      r.mass_phi, r.mass_sigma, r.energy_total, r.energy_gl, r.energy_m,
                      r.newton_iters, r.cg_iters);
        os << buf << "\n";
    }
}

inline std::vector<int> saved_steps(int nt, int stride) {
    std::vector<int> steps;
    if (stride < 1) stride = 1;
    for (int n = 0; n <= nt; n += stride) steps.push_back(n);
    if (steps.back() != nt) steps.push_back(nt);
    return steps;
}

inline void save_trajectory(const StateTrajectory& traj, const std::string& dir, int stride = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream os(dir + "/meta.txt");
        if (!os) throw std::runtime_error("cannot open for write: " + dir + "/meta.txt");
        os << "nx=" << traj.grid.nx << "\n";
        os << "ny=" << traj.grid.ny << "\n";
        os << "lx=" << detail::format_double(traj.grid.lx) << "\n";
        os << "ly=" << detail::format_double(traj.grid.ly) << "\n";
        os << "T=" << detail::format_double(traj.params.T) << "\n";
        os << "nt=" << traj.params.nt << "\n";
        os << "tau=" << detail::format_double(traj.params.tau) << "\n";
        os << "m=" << detail::format_double(traj.params.m) << "\n";
        os << "c0=" << detail::format_double(traj.params.c0) << "\n";
        os << "gamma.kind=" << (traj.gamma.kind == GammaSource::Kind::tanh_default ? "tanh" : "custom") << "\n";
        os << "gamma.a=" << detail::format_double(traj.gamma.a) << "\n";
        os << "gamma.b_phi=" << detail::format_double(traj.gamma.b_phi) << "\n";
        os << "gamma.b_sigma=" << detail::format_double(traj.gamma.b_sigma) << "\n";
        os << "gamma.shift=" << detail::format_double(traj.gamma.shift) << "\n";
        os << "stride=" << stride << "\n";
    }
    for (int n : saved_steps(traj.nt(), stride)) {
        write_chks1(traj.phi[n], dir + "/phi_" + std::to_string(n) + ".chks1");
        write_chks1(traj.sigma[n], dir + "/sigma_" + std::to_string(n) + ".chks1");
    }
    write_monitors_csv(traj.monitors, dir + "/monitors.csv");
}

inline std::map<std::string, std::string> read_meta(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed meta line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

} // namespace chks
