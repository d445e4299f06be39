// control.hpp - tracking cost, admissible-set projection, reduced gradient
// r + alpha5 u, projected gradient descent with Armijo backtracking on the
// projected path, and the stationarity diagnostic
//   ||u - P(u - g)||_Q  (zero iff the discrete variational inequality holds).
#pragma once

#include <array>
#include <string>
#include <vector>

#include "chks/grid.hpp"
#include "chks/sensitivity.hpp"
#include "chks/state.hpp"

namespace chks {

// Controls are piecewise constant in time: one field per step n = 0..nt-1,
// matching the rectangle-rule quadrature of the running cost terms.
using ControlSeq = std::vector<Field>;

inline double q_inner(const ControlSeq& a, const ControlSeq& b, double dt) {
    if (a.size() != b.size())
        throw std::invalid_argument("q_inner: length mismatch");
    double s = 0.0;
    for (size_t n = 0; n < a.size(); ++n) s += dt * field_inner(a[n], b[n]);
    return s;
}

inline double q_norm(const ControlSeq& a, double dt) {
    return std::sqrt(q_inner(a, a, dt));
}

struct ControlProblem {
    // alpha[0..4] = weights of phi-running, phi-terminal, sigma-running,
    // sigma-terminal, and control cost
    std::array<double, 5> alpha{1.0, 1.0, 1.0, 1.0, 1e-4};
    ControlSeq phi_target_q, sigma_target_q;   // nt entries, sampled at t_n
    Field phi_target_omega, sigma_target_omega;
    ControlSeq u_min, u_max;                   // nt entries each

    void validate(const Grid2D& g, int nt) const {
        double sum = 0.0;
        for (double a : alpha) {
            if (a < 0.0) throw std::invalid_argument("ControlProblem: alphas must be >= 0");
            sum += a;
        }
        if (!(sum > 0.0)) throw std::invalid_argument("ControlProblem: alphas must not all be zero");
        auto check_seq = [&](const ControlSeq& s, const char* what) {
            if (static_cast<int>(s.size()) != nt)
                throw std::invalid_argument(std::string("ControlProblem: ") + what + " must have nt entries");
            for (const auto& f : s)
                if (!(f.grid() == g))
                    throw std::invalid_argument(std::string("ControlProblem: grid mismatch in ") + what);
        };
        check_seq(phi_target_q, "phi_target_q");
        check_seq(sigma_target_q, "sigma_target_q");
        check_seq(u_min, "u_min");
        check_seq(u_max, "u_max");
        if (!(phi_target_omega.grid() == g) || !(sigma_target_omega.grid() == g))
            throw std::invalid_argument("ControlProblem: terminal target grid mismatch");
        for (int n = 0; n < nt; ++n)
            for (int k = 0; k < u_min[n].size(); ++k)
                if (u_min[n][k] > u_max[n][k])
                    throw std::invalid_argument("ControlProblem: u_min must be <= u_max pointwise");
    }
};

inline ControlSeq constant_control(const Grid2D& g, int nt, double value) {
    return ControlSeq(static_cast<size_t>(nt), Field(g, value));
}

struct CostBreakdown {
    double total = 0.0;
    double phi_running = 0.0;
    double phi_terminal = 0.0;
    double sigma_running = 0.0;
    double sigma_terminal = 0.0;
    double control = 0.0;
};

// J = a1/2 sum_{n<nt} dt ||phi^n - phiQ^n||^2 + a2/2 ||phi^nt - phiOmega||^2
//   + a3/2 sum_{n<nt} dt ||sigma^n - sigmaQ^n||^2 + a4/2 ||sigma^nt - sigmaOmega||^2
//   + a5/2 sum_{n<nt} dt ||u^n||^2
inline CostBreakdown cost_eval(const StateTrajectory& traj, const ControlSeq& u,
                               const ControlProblem& prob) {
    const int nt = traj.nt();
    prob.validate(traj.grid, nt);
    if (static_cast<int>(u.size()) != nt)
        throw std::invalid_argument("cost_eval: control must have nt entries");
    const double dt = traj.params.dt();
    CostBreakdown c;
    Field diff(traj.grid);
    for (int n = 0; n < nt; ++n) {
        for (int k = 0; k < diff.size(); ++k) diff[k] = traj.phi[n][k] - prob.phi_target_q[n][k];
        c.phi_running += dt * field_inner(diff, diff);
        for (int k = 0; k < diff.size(); ++k) diff[k] = traj.sigma[n][k] - prob.sigma_target_q[n][k];
        c.sigma_running += dt * field_inner(diff, diff);
        c.control += dt * field_inner(u[n], u[n]);
    }
    c.phi_running *= 0.5 * prob.alpha[0];
    c.sigma_running *= 0.5 * prob.alpha[2];
    c.control *= 0.5 * prob.alpha[4];
    for (int k = 0; k < diff.size(); ++k) diff[k] = traj.phi[nt][k] - prob.phi_target_omega[k];
    c.phi_terminal = 0.5 * prob.alpha[1] * field_inner(diff, diff);
    for (int k = 0; k < diff.size(); ++k) diff[k] = traj.sigma[nt][k] - prob.sigma_target_omega[k];
    c.sigma_terminal = 0.5 * prob.alpha[3] * field_inner(diff, diff);
    c.total = c.phi_running + c.phi_terminal + c.sigma_running + c.sigma_terminal + c.control;
    return c;
}

inline ControlSeq project_admissible(const ControlSeq& u, const ControlProblem& prob) {
    ControlSeq out = u;
    for (size_t n = 0; n < u.size(); ++n) {
        const Field& lo = prob.u_min[n];
        const Field& hi = prob.u_max[n];
        for (int k = 0; k < out[n].size(); ++k)
            out[n][k] = std::min(std::max(out[n][k], lo[k]), hi[k]);
    }
    return out;
}

// adjoint sources per the cost functional's own alpha pairing
inline TrackingSources make_tracking_sources(const StateTrajectory& traj, const ControlProblem& prob) {
    const int nt = traj.nt();
    TrackingSources src;
    src.g1.reserve(nt);
    src.g2.reserve(nt);
    for (int n = 0; n < nt; ++n) {
        Field g1(traj.grid), g2(traj.grid);
        for (int k = 0; k < g1.size(); ++k) {
            g1[k] = prob.alpha[0] * (traj.phi[n][k] - prob.phi_target_q[n][k]);
            g2[k] = prob.alpha[2] * (traj.sigma[n][k] - prob.sigma_target_q[n][k]);
        }
        src.g1.push_back(std::move(g1));
        src.g2.push_back(std::move(g2));
    }
    src.g3 = Field(traj.grid);
    src.g4 = Field(traj.grid);
    for (int k = 0; k < src.g3.size(); ++k) {
        src.g3[k] = prob.alpha[1] * (traj.phi[nt][k] - prob.phi_target_omega[k]);
        src.g4[k] = prob.alpha[3] * (traj.sigma[nt][k] - prob.sigma_target_omega[k]);
    }
    return src;
}

// g^n = r^n + alpha5 u^n
inline ControlSeq reduced_gradient(const ControlSeq& u, const std::vector<AdjointTriple>& adj,
                                   double alpha5) {
    const size_t nt = u.size();
    if (adj.size() != nt + 1)
        throw std::invalid_argument("reduced_gradient: adjoint length mismatch");
    ControlSeq g;
    g.reserve(nt);
    for (size_t n = 0; n < nt; ++n) {
        Field gn = adj[n].r;
        axpy(alpha5, u[n], gn);
        g.push_back(std::move(gn));
    }
    return g;
}

inline double stationarity_residual(const ControlSeq& u, const ControlSeq& grad,
                                    const ControlProblem& prob, double dt) {
    ControlSeq stepped = u;
    for (size_t n = 0; n < u.size(); ++n) axpy(-1.0, grad[n], stepped[n]);
    ControlSeq proj = project_admissible(stepped, prob);
    double s = 0.0;
    for (size_t n = 0; n < u.size(); ++n) {
        Field d = u[n];
        axpy(-1.0, proj[n], d);
        s += dt * field_inner(d, d);
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// projected gradient with Armijo backtracking on the projected path
// ---------------------------------------------------------------------------

struct OptimizerConfig {
    int max_outer_iters = 200;
    double armijo_c1 = 1e-4;
    double armijo_shrink = 0.5;
    double initial_step = -1.0;   // < 0 means auto: 1/(1 + alpha5)
    double step_growth = 2.0;     // warm-start expansion after a clean accept
    bool bb_step = true;          // spectral (Barzilai-Borwein) warm start when available
    double stationarity_tol = 1e-4;
    double min_step = 1e-12;

    void validate() const {
        if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0))
            throw std::invalid_argument("OptimizerConfig: armijo_c1 must be in (0,1)");
        if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0))
            throw std::invalid_argument("OptimizerConfig: armijo_shrink must be in (0,1)");
        if (!(step_growth >= 1.0))
            throw std::invalid_argument("OptimizerConfig: step_growth must be >= 1");
        if (max_outer_iters < 0)
            throw std::invalid_argument("OptimizerConfig: max_outer_iters must be >= 0");
        if (!(min_step > 0.0))
            throw std::invalid_argument("OptimizerConfig: min_step must be > 0");
    }
};

struct OptRow {
    int iter = 0;
    CostBreakdown cost;
    double stationarity = 0.0;
    double step = 0.0;
    int armijo_rejects = 0;
};

struct OptimizationReport {
    std::vector<OptRow> rows;
    ControlSeq final_u;
    StateTrajectory final_traj;
    bool converged = false;
    std::string stop_reason;
    double final_stationarity = 0.0;
    int forward_solves = 0;
};

inline void write_opt_log(const OptimizationReport& rep, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << "iter,J,J_phiQ,J_phiT,J_sigmaQ,J_sigmaT,J_u,stationarity,step,armijo_rejects\n";
    char buf[512];
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d",
                      r.iter, r.cost.total, r.cost.phi_running, r.cost.phi_terminal,
                      r.cost.sigma_running, r.cost.sigma_terminal, r.cost.control,
                      r.stationarity, r.step, r.armijo_rejects);
        os << buf << "\n";
    }
}

inline OptimizationReport optimize(StateSolver& solver, const InitialData& init,
                                   const ControlProblem& prob, const ControlSeq& init_u,
                                   const OptimizerConfig& cfg) {
    cfg.validate();
    const int nt = solver.params().nt;
    prob.validate(solver.grid(), nt);
    const double dt = solver.params().dt();
    const double alpha5 = prob.alpha[4];

    OptimizationReport rep;
    ControlSeq u = project_admissible(init_u, prob);
    StateTrajectory traj = solver.solve_state(init, u);
    ++rep.forward_solves;
    CostBreakdown J = cost_eval(traj, u, prob);

    auto gradient_at = [&](const StateTrajectory& t, const ControlSeq& uu) {
        AdjointSolver adj_solver(t, solver.potential(), solver.gamma());
        auto adj = adj_solver.solve_adjoint(make_tracking_sources(t, prob));
        return reduced_gradient(uu, adj, alpha5);
    };
    ControlSeq g = gradient_at(traj, u);
    double stat = stationarity_residual(u, g, prob, dt);

    double step = cfg.initial_step > 0.0 ? cfg.initial_step : 1.0 / (1.0 + alpha5);
    rep.rows.push_back(OptRow{0, J, stat, step, 0});

    for (int it = 1; it <= cfg.max_outer_iters; ++it) {
        if (stat <= cfg.stationarity_tol) {
            rep.converged = true;
            rep.stop_reason = "stationarity tolerance reached";
            break;
        }
        int rejects = 0;
        bool accepted = false;
        ControlSeq u_trial;
        StateTrajectory traj_trial;
        CostBreakdown J_trial;
        while (step >= cfg.min_step) {
            ControlSeq stepped = u;
            for (int n = 0; n < nt; ++n) axpy(-step, g[n], stepped[n]);
            u_trial = project_admissible(stepped, prob);
            ControlSeq delta = u;
            for (int n = 0; n < nt; ++n) axpy(-1.0, u_trial[n], delta[n]);
            const double decrease = q_inner(g, delta, dt);
            if (!(decrease > 0.0)) {
                // projection absorbed the whole step: stationary on the bounds
                break;
            }
            try {
                traj_trial = solver.solve_state(init, u_trial);
                ++rep.forward_solves;
            } catch (const std::exception& e) {
                rep.stop_reason = std::string("forward solve failed: ") + e.what();
                rep.final_u = u;
                rep.final_traj = std::move(traj);
                rep.final_stationarity = stat;
                return rep;
            }
            J_trial = cost_eval(traj_trial, u_trial, prob);
            if (J_trial.total <= J.total - cfg.armijo_c1 * decrease) {
                accepted = true;
                break;
            }
            step *= cfg.armijo_shrink;
            ++rejects;
        }
        if (!accepted) {
            rep.stop_reason = step < cfg.min_step ? "step collapse" : "no feasible descent";
            rep.converged = stat <= cfg.stationarity_tol;
            break;
        }
        if (J_trial.total > J.total)
            throw std::logic_error("optimize: accepted step increased the cost");
        if (rejects == 0) step = std::min(step * cfg.step_growth, 1e8);
        ControlSeq g_new = gradient_at(traj_trial, u_trial);
        if (cfg.bb_step) {
            // spectral step from the last displacement/gradient-change pair
            double num = 0.0, den = 0.0;
            for (int n = 0; n < nt; ++n) {
                Field du = u_trial[n];
                axpy(-1.0, u[n], du);
                Field dg = g_new[n];
                axpy(-1.0, g[n], dg);
                num += dt * field_inner(du, du);
                den += dt * field_inner(du, dg);
            }
            if (den > 0.0 && num > 0.0)
                step = std::min(std::max(num / den, 1e-8), 1e8);
        }
        u = std::move(u_trial);
        traj = std::move(traj_trial);
        J = J_trial;
        g = std::move(g_new);
        stat = stationarity_residual(u, g, prob, dt);
        rep.rows.push_back(OptRow{it, J, stat, step, rejects});
        if (it == cfg.max_outer_iters && rep.stop_reason.empty()) {
            rep.converged = stat <= cfg.stationarity_tol;
            rep.stop_reason = "iteration budget exhausted";
        }
    }
    if (rep.stop_reason.empty()) {
        rep.converged = stat <= cfg.stationarity_tol;
        rep.stop_reason = rep.converged ? "stationarity tolerance reached" : "iteration budget exhausted";
    }
    rep.final_u = std::move(u);
    rep.final_traj = std::move(traj);
    rep.final_stationarity = stat;
    return rep;
}

// Targets synthesized from the trajectory of a known control; alpha5 kept
// small so the reference control is near-optimal by construction.
inline ControlProblem make_tracking_problem(const StateTrajectory& ref,
                                            const std::array<double, 5>& alpha,
                                            const ControlSeq& u_min, const ControlSeq& u_max) {
    const int nt = ref.nt();
    ControlProblem prob;
    prob.alpha = alpha;
    prob.phi_target_q.assign(ref.phi.begin(), ref.phi.begin() + nt);
    prob.sigma_target_q.assign(ref.sigma.begin(), ref.sigma.begin() + nt);
    prob.phi_target_omega = ref.phi[nt];
    prob.sigma_target_omega = ref.sigma[nt];
    prob.u_min = u_min;
    prob.u_max = u_max;
    return prob;
}

} // namespace chks
