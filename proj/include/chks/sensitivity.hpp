// sensitivity.hpp - the linearized (tangent) solver realizing the derivative
// of the control-to-state map, and the backward-in-time adjoint built as the
// exact weighted-inner-product transpose of the tangent step maps.
//
// Tangent step n (exact derivative of the forward step around the stored
// states), unknowns (psi', eta', zeta') at n+1 from (psi, zeta) at n and h_n:
//   (1/dt + m) psi' + (-lap) eta' = lam1 psi + lam2 zeta + psi/dt
//   eta' = B psi' - (tau/dt + 2 c0) psi - zeta,
//       B = (tau/dt) I + (-lap) + diag(Fc''(phi^{n+1}))
//   A zeta' = zeta/dt - div(zeta grad phi^{n+1}) - div(sigma^n grad psi')
//             - sigma^{n+1} zeta + h_n,
//       A = (1/dt - 1) I + (-lap) + diag(sigma^n)
// The psi' system reduces to M psi' = rhs with M = (1/dt+m) I + (-lap) B.
//
// Adjoint: backward costate recurrence v^n = dt (g1^n, g2^n) + T_n^T v^{n+1}
// with terminal v^{nt} = (g3, g4); the stored triple at stage n is
//   r^n = A^{-1} v_zeta^{n+1} / dt,   p^n = M^T{}^{-1}(v_psi^{n+1} - D2 w)/dt,
//   q^n = (-lap) p^n,   z^n = p^n + tau q^n,
// so that z = p + tau q and (-lap + 1/tau) p = z/tau hold by construction and
// sum_n dt <r^n, h^n> equals the derivative of the tracking cost exactly.
#pragma once

#include <vector>

#include "chks/grid.hpp"
#include "chks/model.hpp"
#include "chks/operators.hpp"
#include "chks/state.hpp"

namespace chks {

struct TangentTriple {
    Field psi, eta, zeta;
    double t = 0.0;
};

struct AdjointTriple {
    Field p, q, r, z;
    double t = 0.0;
};

// Per-step linearization coefficients frozen from a converged trajectory:
// lam1 = gamma_phi(phi^n, sigma^n), lam2 = gamma_sigma(phi^n, sigma^n),
// and the implicit-part curvature Fc''(phi^{n+1}).
class FrozenCoefficients {
public:
    FrozenCoefficients(const StateTrajectory& traj, const LogPotential& pot,
                       const GammaSource& gamma)
        : traj_(&traj), pot_(&pot), gamma_(&gamma) {}

    const StateTrajectory& traj() const { return *traj_; }
    int nt() const { return traj_->nt(); }

    void lam1(int n, Field& out) const {
        const Field& phi = traj_->phi[n];
        const Field& sig = traj_->sigma[n];
        for (int k = 0; k < out.size(); ++k)
            out[k] = gamma_->eval(phi[k], sig[k], GammaDeriv::d_phi);
    }
    void lam2(int n, Field& out) const {
        const Field& phi = traj_->phi[n];
        const Field& sig = traj_->sigma[n];
        for (int k = 0; k < out.size(); ++k)
            out[k] = gamma_->eval(phi[k], sig[k], GammaDeriv::d_sigma);
    }
    // Fc'' at the new phase field of step n; finite because of separation
    void fpp_convex_new(int n, Field& out) const {
        const Field& phi = traj_->phi[n + 1];
        for (int k = 0; k < out.size(); ++k) out[k] = pot_->d2convex(phi[k]);
        out.require_finite("Fc''(phi)");
    }
    const Field& phi_new(int n) const { return traj_->phi[n + 1]; }
    const Field& sigma_old(int n) const { return traj_->sigma[n]; }
    const Field& sigma_new(int n) const { return traj_->sigma[n + 1]; }

private:
    const StateTrajectory* traj_;
    const LogPotential* pot_;
    const GammaSource* gamma_;
};

namespace detail {

// shared machinery for the CH-block solves M = a I + (-lap) B and its
// transpose M^T = a I + B (-lap)
struct ChBlock {
    double a = 0.0, tau_dt = 0.0;
    const Field* fppc = nullptr;   // diag of B
    Field tmp;

    void apply(const Field& v, Field& out) {
        apply_neg_laplacian(v, tmp);
        const Field& d = *fppc;
        for (int k = 0; k < tmp.size(); ++k) tmp[k] += (tau_dt + d[k]) * v[k];
        apply_neg_laplacian(tmp, out);
        for (int k = 0; k < out.size(); ++k) out[k] += a * v[k];
    }
    void apply_transpose(const Field& v, Field& out) {
        apply_neg_laplacian(v, tmp);
        apply_neg_laplacian(tmp, out);
        const Field& d = *fppc;
        for (int k = 0; k < out.size(); ++k)
            out[k] += (tau_dt + d[k]) * tmp[k] + a * v[k];
    }
};

} // namespace detail

// ---------------------------------------------------------------------------
// tangent solver
// ---------------------------------------------------------------------------

struct TangentBoundReport {
    double state_norm = 0.0;   // composite norm of (psi, eta, zeta)
    double control_norm = 0.0; // L2(Q) norm of h
    double ratio = 0.0;
};

class TangentSolver {
public:
    TangentSolver(const StateTrajectory& traj, const LogPotential& pot, const GammaSource& gamma)
        : traj_(&traj), pot_(pot), gamma_(gamma), coeffs_(traj, pot_, gamma_),
          grid_(traj.grid), params_(traj.params), spectral_(grid_) {}

    const FrozenCoefficients& coeffs() const { return coeffs_; }

    // one tangent step around stored step n
    TangentTriple step_tangent(const TangentTriple& prev, const Field& h_n, int n) {
        const double dt = params_.dt();
        const double a = 1.0 / dt + params_.m;
        const double tau_dt = params_.tau / dt;
        const double c0 = pot_.c0();
        const int nn = grid_.n();

        Field fppc(grid_), lam1(grid_), lam2(grid_);
        coeffs_.fpp_convex_new(n, fppc);
        coeffs_.lam1(n, lam1);
        coeffs_.lam2(n, lam2);

        // rhs = psi/dt + lam1 psi + lam2 zeta + (-lap)[(tau/dt + 2c0) psi + zeta]
        Field tmp(grid_), rhs(grid_);
        for (int k = 0; k < nn; ++k)
            tmp[k] = (tau_dt + 2.0 * c0) * prev.psi[k] + prev.zeta[k];
        apply_neg_laplacian(tmp, rhs);
        for (int k = 0; k < nn; ++k)
            rhs[k] += prev.psi[k] / dt + lam1[k] * prev.psi[k] + lam2[k] * prev.zeta[k];

        detail::ChBlock blk;
        blk.a = a;
        blk.tau_dt = tau_dt;
        blk.fppc = &fppc;
        blk.tmp = Field(grid_);
        double fbar = field_mean(fppc);

        TangentTriple next;
        next.t = prev.t + dt;
        next.psi = prev.psi; // warm start
        auto apply = [&](const Field& v, Field& out) { blk.apply(v, out); };
        auto precond = [&](const Field& in, Field& out) {
            spectral_.solve_poly(a, tau_dt + fbar, 1.0, in, out);
        };
        SolveReport rep = bicgstab_solve(apply, precond, rhs, next.psi,
                                         params_.cg_tol, params_.cg_max_iter);
        if (!rep.converged)
            throw std::runtime_error("step_tangent: CH-block solve did not converge");

        // eta' = B psi' - (tau/dt + 2c0) psi - zeta
        next.eta = Field(grid_);
        apply_neg_laplacian(next.psi, next.eta);
        for (int k = 0; k < nn; ++k)
            next.eta[k] += (tau_dt + fppc[k]) * next.psi[k]
                           - (tau_dt + 2.0 * c0) * prev.psi[k] - prev.zeta[k];

        // nutrient tangent
        LinOpSpec A;
        A.c0 = 1.0 / dt - 1.0;
        A.c1 = 1.0;
        A.c2 = 1.0;
        A.w = coeffs_.sigma_old(n);
        Field rhs_z(grid_), tmp2(grid_);
        apply_chemotaxis_div(prev.zeta, coeffs_.phi_new(n), rhs_z);   // div(zeta grad phi')
        apply_chemotaxis_div(coeffs_.sigma_old(n), next.psi, tmp2);   // div(sigma^n grad psi')
        const Field& sig_new = coeffs_.sigma_new(n);
        for (int k = 0; k < nn; ++k)
            rhs_z[k] = prev.zeta[k] / dt - rhs_z[k] - tmp2[k]
                       - sig_new[k] * prev.zeta[k] + h_n[k];
        auto [zeta, zrep] = cg_solve(A, rhs_z, prev.zeta, params_.cg_tol, params_.cg_max_iter, &spectral_);
        if (!zrep.converged)
            throw std::runtime_error("step_tangent: nutrient solve did not converge");
        next.zeta = std::move(zeta);
        return next;
    }

    // full tangent sweep with zero initial data; verifies the trajectory
    // was produced by the control u (stale-trajectory guard)
    std::vector<TangentTriple> solve_tangent(const std::vector<Field>& u,
                                             const std::vector<Field>& h,
                                             TangentBoundReport* report = nullptr) {
        const int nt = traj_->nt();
        if (static_cast<int>(h.size()) != nt)
            throw std::invalid_argument("solve_tangent: direction must have nt entries");
        if (control_hash(u, grid_, params_) != traj_->control_hash)
            throw std::invalid_argument("solve_tangent: stale trajectory (control hash mismatch)");

        std::vector<TangentTriple> out;
        out.reserve(nt + 1);
        TangentTriple cur;
        cur.psi = Field(grid_);
        cur.eta = Field(grid_);
        cur.zeta = Field(grid_);
        cur.t = 0.0;
        out.push_back(cur);
        for (int n = 0; n < nt; ++n) {
            cur = step_tangent(cur, h[n], n);
            out.push_back(cur);
        }
        if (report) *report = bound_report(out, h);
        return out;
    }

    // discrete shadow of the a-priori bound ||(psi,eta,zeta)||_Y <= C ||h||
    TangentBoundReport bound_report(const std::vector<TangentTriple>& tan,
                                    const std::vector<Field>& h) const {
        const double dt = params_.dt();
        double psi_max_h1 = 0.0, zeta_max_l2 = 0.0, eta_l2q = 0.0, zeta_h1q = 0.0;
        for (size_t n = 0; n < tan.size(); ++n) {
            psi_max_h1 = std::max(psi_max_h1, h1_norm(tan[n].psi));
            zeta_max_l2 = std::max(zeta_max_l2, field_norm(tan[n].zeta));
            if (n + 1 < tan.size()) {
                const double eh = h1_norm(tan[n].eta);
                const double zh = h1_norm(tan[n].zeta);
                eta_l2q += dt * eh * eh;
                zeta_h1q += dt * zh * zh;
            }
        }
        TangentBoundReport r;
        r.state_norm = psi_max_h1 + std::sqrt(eta_l2q) + zeta_max_l2 + std::sqrt(zeta_h1q);
        double hq = 0.0;
        for (const auto& f : h) hq += dt * field_inner(f, f);
        r.control_norm = std::sqrt(hq);
        r.ratio = r.control_norm > 0.0 ? r.state_norm / r.control_norm
                                       : (r.state_norm > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        return r;
    }

private:
    const StateTrajectory* traj_;
    LogPotential pot_;
    GammaSource gamma_;
    FrozenCoefficients coeffs_;
    Grid2D grid_;
    ModelParams params_;
    SpectralSolver spectral_;
};

// ---------------------------------------------------------------------------
// adjoint solver
// ---------------------------------------------------------------------------

// Running sources g1^n = alpha1 (phi^n - phiQ^n), g2^n = alpha3 (sigma^n - sigmaQ^n)
// for n = 0..nt-1, and terminal data g3 = alpha2 (phi^nt - phiOmega),
// g4 = alpha4 (sigma^nt - sigmaOmega).
struct TrackingSources {
    std::vector<Field> g1, g2;  // nt entries each (entry 0 is never consumed)
    Field g3, g4;
};

// costate carried between backward stages
struct AdjointCostate {
    Field v_psi, v_zeta;
};

class AdjointSolver {
public:
    AdjointSolver(const StateTrajectory& traj, const LogPotential& pot, const GammaSource& gamma)
        : traj_(&traj), pot_(pot), gamma_(gamma), coeffs_(traj, pot_, gamma_),
          grid_(traj.grid), params_(traj.params), spectral_(grid_) {}

    // terminal entry of the adjoint trajectory: z(T) = g3, r(T) = g4,
    // p from the SPD solve (I + tau (-lap)) p = z, q = (z - p)/tau
    AdjointTriple terminal_triple(const Field& g3, const Field& g4) {
        AdjointTriple end;
        end.t = traj_->times.back();
        end.z = g3;
        end.r = g4;
        end.p = Field(grid_);
        spectral_.solve_poly(1.0, params_.tau, 0.0, g3, end.p);
        end.q = Field(grid_);
        for (int k = 0; k < end.q.size(); ++k)
            end.q[k] = (end.z[k] - end.p[k]) / params_.tau;
        return end;
    }

    // One backward stage n: consume the costate v^{n+1}, emit the stage-n
    // triple, and (for n > 0) refresh the costate with the stage-n sources.
    // Null sources mean zero (pure transpose step).
    AdjointTriple step_adjoint(AdjointCostate& v, int n, const Field* g1_n, const Field* g2_n) {
        const double dt = params_.dt();
        const double a = 1.0 / dt + params_.m;
        const double tau_dt = params_.tau / dt;
        const double c0 = pot_.c0();
        const int nn = grid_.n();

        Field fppc(grid_), lam1(grid_), lam2(grid_);
        coeffs_.fpp_convex_new(n, fppc);
        coeffs_.lam1(n, lam1);
        coeffs_.lam2(n, lam2);

        // w = A^{-1} v_zeta (same SPD operator as the forward nutrient substep)
        LinOpSpec A;
        A.c0 = 1.0 / dt - 1.0;
        A.c1 = 1.0;
        A.c2 = 1.0;
        A.w = coeffs_.sigma_old(n);
        auto [w, wrep] = cg_solve(A, v.v_zeta, Field(grid_), params_.cg_tol, params_.cg_max_iter, &spectral_);
        if (!wrep.converged)
            throw std::runtime_error("step_adjoint: nutrient-transpose solve did not converge");

        // m = M^T{}^{-1} (v_psi - D2[sigma^n] w)
        Field rhs_m(grid_);
        apply_chemotaxis_div(coeffs_.sigma_old(n), w, rhs_m);
        for (int k = 0; k < nn; ++k) rhs_m[k] = v.v_psi[k] - rhs_m[k];

        detail::ChBlock blk;
        blk.a = a;
        blk.tau_dt = tau_dt;
        blk.fppc = &fppc;
        blk.tmp = Field(grid_);
        const double fbar = field_mean(fppc);
        Field mvec(grid_);
        auto apply = [&](const Field& x, Field& out) { blk.apply_transpose(x, out); };
        auto precond = [&](const Field& in, Field& out) {
            spectral_.solve_poly(a, tau_dt + fbar, 1.0, in, out);
        };
        SolveReport mrep = bicgstab_solve(apply, precond, rhs_m, mvec, params_.cg_tol, params_.cg_max_iter);
        if (!mrep.converged)
            throw std::runtime_error("step_adjoint: CH-transpose solve did not converge");

        AdjointTriple trip;
        trip.t = traj_->times[n];
        trip.p = mvec;
        scale(trip.p, 1.0 / dt);
        trip.q = Field(grid_);
        apply_neg_laplacian(trip.p, trip.q);
        trip.z = trip.p;
        axpy(params_.tau, trip.q, trip.z);
        trip.r = w;
        scale(trip.r, 1.0 / dt);

        // refresh the costate for stage n-1:
        //   v_psi  = dt g1^n + [(1/dt) I + diag(lam1) + (tau/dt + 2c0)(-lap)] m
        //   v_zeta = dt g2^n + [diag(lam2) + (-lap)] m
        //            + [(1/dt) I - diag(sigma^{n+1}) - G[phi^{n+1}]] w
        Field lap_m(grid_);
        apply_neg_laplacian(mvec, lap_m);
        Field gw(grid_);
        apply_chemotaxis_div_transpose(coeffs_.phi_new(n), w, gw);
        const Field& sig_new = coeffs_.sigma_new(n);
        for (int k = 0; k < nn; ++k) {
            v.v_psi[k] = mvec[k] / dt + lam1[k] * mvec[k] + (tau_dt + 2.0 * c0) * lap_m[k];
            v.v_zeta[k] = lam2[k] * mvec[k] + lap_m[k]
                          + w[k] / dt - sig_new[k] * w[k] - gw[k];
        }
        if (g1_n) axpy(dt, *g1_n, v.v_psi);
        if (g2_n) axpy(dt, *g2_n, v.v_zeta);
        return trip;
    }

    // full backward sweep; returns nt+1 triples, index nt being the terminal
    // data entry and index n < nt the stage-n triple whose r pairs with u^n
    std::vector<AdjointTriple> solve_adjoint(const TrackingSources& src) {
        const int nt = traj_->nt();
        if (static_cast<int>(src.g1.size()) != nt || static_cast<int>(src.g2.size()) != nt)
            throw std::invalid_argument("solve_adjoint: running sources must have nt entries");
        std::vector<AdjointTriple> out(nt + 1);
        out[nt] = terminal_triple(src.g3, src.g4);
        AdjointCostate v{src.g3, src.g4};
        for (int n = nt - 1; n >= 0; --n) {
            const Field* g1 = n > 0 ? &src.g1[n] : nullptr;
            const Field* g2 = n > 0 ? &src.g2[n] : nullptr;
            out[n] = step_adjoint(v, n, g1, g2);
        }
        return out;
    }

private:
    const StateTrajectory* traj_;
    LogPotential pot_;
    GammaSource gamma_;
    FrozenCoefficients coeffs_;
    Grid2D grid_;
    ModelParams params_;
    SpectralSolver spectral_;
};

// Adjoint counterpart of the trajectory layout: p/q/r/z snapshots per stage.
inline void save_adjoint_trajectory(const std::vector<AdjointTriple>& adj,
                                    const StateTrajectory& traj,
                                    const std::string& dir, int stride = 1) {
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
        os << "stride=" << stride << "\n";
    }
    const int nt = static_cast<int>(adj.size()) - 1;
    for (int n : saved_steps(nt, stride)) {
        write_chks1(adj[n].p, dir + "/p_" + std::to_string(n) + ".chks1");
        write_chks1(adj[n].q, dir + "/q_" + std::to_string(n) + ".chks1");
        write_chks1(adj[n].r, dir + "/r_" + std::to_string(n) + ".chks1");
        write_chks1(adj[n].z, dir + "/z_" + std::to_string(n) + ".chks1");
    }
}

} // namespace chks
