#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "chks/control.hpp"
#include "chks/sensitivity.hpp"
#include "chks/state.hpp"

using namespace chks;

namespace {
constexpr double pi = 3.14159265358979323846;

struct Setup {
    Grid2D grid;
    ModelParams params;
    LogPotential pot;
    GammaSource gamma;
    InitialData init;
    std::vector<Field> u;

    Setup(int n, int nt, double T, unsigned seed = 0)
        : grid(n, n), params(), pot(1.5), gamma(GammaSource::tanh_default(0.5)) {
        params.T = T;
        params.nt = nt;
        init.phi0 = Field(grid);
        init.sigma0 = Field(grid);
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i) {
                init.phi0(i, j) = 0.4 * std::cos(pi * grid.x(i)) * std::cos(pi * grid.y(j));
                init.sigma0(i, j) = 0.5 + 0.2 * std::cos(pi * grid.x(i));
            }
        std::mt19937_64 rng(seed + 1234);
        std::uniform_real_distribution<double> d(-0.2, 0.2);
        u.assign(nt, Field(grid));
        for (auto& f : u)
            for (int k = 0; k < f.size(); ++k) f[k] = d(rng);
    }

    StateTrajectory solve() {
        StateSolver solver(grid, params, pot, gamma);
        return solver.solve_state(init, u);
    }
};

std::vector<Field> random_direction(const Grid2D& g, int nt, unsigned seed, double amp = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-amp, amp);
    std::vector<Field> h(nt, Field(g));
    for (auto& f : h)
        for (int k = 0; k < f.size(); ++k) f[k] = d(rng);
    return h;
}

double traj_scale(const std::vector<TangentTriple>& t, double dt) {
    double s = 0.0;
    for (const auto& trip : t)
        s += dt * (field_inner(trip.psi, trip.psi) + field_inner(trip.zeta, trip.zeta));
    return std::sqrt(s);
}
} // namespace

TEST_CASE("zero direction gives the zero tangent trajectory") {
    Setup s(10, 8, 0.04);
    StateTrajectory traj = s.solve();
    TangentSolver tls(traj, s.pot, s.gamma);
    std::vector<Field> h(s.params.nt, Field(s.grid, 0.0));
    auto tan = tls.solve_tangent(s.u, h);
    for (const auto& t : tan) {
        CHECK(linf_norm(t.psi) == 0.0);
        CHECK(linf_norm(t.eta) == 0.0);
        CHECK(linf_norm(t.zeta) == 0.0);
    }
}

TEST_CASE("tangent map is linear") {
    Setup s(10, 6, 0.03);
    StateTrajectory traj = s.solve();
    TangentSolver tls(traj, s.pot, s.gamma);
    auto h1 = random_direction(s.grid, s.params.nt, 5);
    auto h2 = random_direction(s.grid, s.params.nt, 6);

    auto t1 = tls.solve_tangent(s.u, h1);
    auto t2 = tls.solve_tangent(s.u, h2);

    // 2 h1
    auto h2x = h1;
    for (auto& f : h2x) scale(f, 2.0);
    auto tdouble = tls.solve_tangent(s.u, h2x);
    const double scale_ref = traj_scale(t1, s.params.dt());
    for (size_t n = 0; n < t1.size(); ++n) {
        Field d = tdouble[n].psi;
        axpy(-2.0, t1[n].psi, d);
        CHECK(field_norm(d) <= 1e-11 * (1.0 + 2.0 * scale_ref));
        d = tdouble[n].zeta;
        axpy(-2.0, t1[n].zeta, d);
        CHECK(field_norm(d) <= 1e-11 * (1.0 + 2.0 * scale_ref));
    }

    // superposition
    auto hsum = h1;
    for (size_t n = 0; n < hsum.size(); ++n) axpy(1.0, h2[n], hsum[n]);
    auto tsum = tls.solve_tangent(s.u, hsum);
    for (size_t n = 0; n < t1.size(); ++n) {
        Field d = tsum[n].psi;
        axpy(-1.0, t1[n].psi, d);
        axpy(-1.0, t2[n].psi, d);
        CHECK(field_norm(d) <= 1e-10 * (1.0 + scale_ref));
        d = tsum[n].zeta;
        axpy(-1.0, t1[n].zeta, d);
        axpy(-1.0, t2[n].zeta, d);
        CHECK(field_norm(d) <= 1e-10 * (1.0 + scale_ref));
    }
}

TEST_CASE("stale trajectory is rejected by the control hash") {
    Setup s(8, 4, 0.02);
    StateTrajectory traj = s.solve();
    TangentSolver tls(traj, s.pot, s.gamma);
    auto u_other = s.u;
    u_other[0][0] += 1e-3;
    auto h = random_direction(s.grid, s.params.nt, 7);
    CHECK_THROWS_AS(tls.solve_tangent(u_other, h), std::invalid_argument);
}

TEST_CASE("tangent matches central differences through the nonlinear solver") {
    Setup s(12, 10, 0.05);
    s.params.newton_tol = 1e-12;
    s.params.cg_tol = 1e-13;
    StateTrajectory traj = s.solve();
    TangentSolver tls(traj, s.pot, s.gamma);
    auto h = random_direction(s.grid, s.params.nt, 8, 0.5);
    auto tan = tls.solve_tangent(s.u, h);

    StateSolver solver(s.grid, s.params, s.pot, s.gamma);
    const double dt = s.params.dt();
    auto fd_error = [&](double eps) {
        auto up = s.u, um = s.u;
        for (int n = 0; n < s.params.nt; ++n) {
            axpy(eps, h[n], up[n]);
            axpy(-eps, h[n], um[n]);
        }
        StateTrajectory tp = solver.solve_state(s.init, up);
        StateTrajectory tm = solver.solve_state(s.init, um);
        double num = 0.0, den = 0.0;
        for (int n = 0; n <= s.params.nt; ++n) {
            Field fd_psi = tp.phi[n];
            axpy(-1.0, tm.phi[n], fd_psi);
            scale(fd_psi, 1.0 / (2.0 * eps));
            Field fd_zeta = tp.sigma[n];
            axpy(-1.0, tm.sigma[n], fd_zeta);
            scale(fd_zeta, 1.0 / (2.0 * eps));
            axpy(-1.0, tan[n].psi, fd_psi);
            axpy(-1.0, tan[n].zeta, fd_zeta);
            num += dt * (field_inner(fd_psi, fd_psi) + field_inner(fd_zeta, fd_zeta));
            den += dt * (field_inner(tan[n].psi, tan[n].psi) + field_inner(tan[n].zeta, tan[n].zeta));
        }
        return std::sqrt(num / den);
    };

    // the central-difference oracle plateaus across three decades of eps
    for (double eps : {1e-4, 1e-5, 1e-6})
        CHECK(fd_error(eps) <= 2e-5);
}

TEST_CASE("tangent-to-control bound is reported and stable") {
    Setup s(10, 8, 0.04);
    StateTrajectory traj = s.solve();
    TangentSolver tls(traj, s.pot, s.gamma);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (unsigned seed = 0; seed < 10; ++seed) {
        auto h = random_direction(s.grid, s.params.nt, 100 + seed);
        TangentBoundReport rep;
        (void)tls.solve_tangent(s.u, h, &rep);
        REQUIRE(std::isfinite(rep.ratio));
        REQUIRE(rep.ratio > 0.0);
        lo = std::min(lo, rep.ratio);
        hi = std::max(hi, rep.ratio);
    }
    CHECK(hi / lo <= 10.0);
}

TEST_CASE("per-step transpose identity holds to near machine precision") {
    Setup s(16, 6, 0.03);
    s.params.cg_tol = 1e-13;
    StateTrajectory traj = s.solve();
    TangentSolver tls(traj, s.pot, s.gamma);
    AdjointSolver als(traj, s.pot, s.gamma);

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int n : {0, 2, 5}) {
        Field xpsi(s.grid), xzeta(s.grid), ypsi(s.grid), yzeta(s.grid);
        for (int k = 0; k < xpsi.size(); ++k) {
            xpsi[k] = d(rng);
            xzeta[k] = d(rng);
            ypsi[k] = d(rng);
            yzeta[k] = d(rng);
        }
        // forward: (psi', zeta') = T_n (xpsi, xzeta) with h = 0
        TangentTriple prev{xpsi, Field(s.grid, 0.0), xzeta, 0.0};
        TangentTriple fwd = tls.step_tangent(prev, Field(s.grid, 0.0), n);
        // transpose: T_n^T (ypsi, yzeta) via one sourceless adjoint stage
        AdjointCostate v{ypsi, yzeta};
        (void)als.step_adjoint(v, n, nullptr, nullptr);
        const double lhs = field_inner(fwd.psi, ypsi) + field_inner(fwd.zeta, yzeta);
        const double rhs = field_inner(xpsi, v.v_psi) + field_inner(xzeta, v.v_zeta);
        const double scale_xy = std::sqrt(field_inner(xpsi, xpsi) + field_inner(xzeta, xzeta)) *
                                std::sqrt(field_inner(ypsi, ypsi) + field_inner(yzeta, yzeta));
        CHECK(std::abs(lhs - rhs) <= 1e-11 * std::max(1.0, scale_xy));
    }
}

TEST_CASE("homogeneous adjoint data gives the zero adjoint") {
    Setup s(10, 5, 0.025);
    StateTrajectory traj = s.solve();
    AdjointSolver als(traj, s.pot, s.gamma);
    TrackingSources src;
    src.g1.assign(s.params.nt, Field(s.grid, 0.0));
    src.g2.assign(s.params.nt, Field(s.grid, 0.0));
    src.g3 = Field(s.grid, 0.0);
    src.g4 = Field(s.grid, 0.0);
    auto adj = als.solve_adjoint(src);
    for (const auto& a : adj) {
        CHECK(linf_norm(a.p) == 0.0);
        CHECK(linf_norm(a.q) == 0.0);
        CHECK(linf_norm(a.r) == 0.0);
        CHECK(linf_norm(a.z) == 0.0);
    }
}

TEST_CASE("constant terminal z with flat coefficients recovers p = z, q = 0") {
    Setup s(10, 4, 0.02);
    StateTrajectory traj = s.solve();
    AdjointSolver als(traj, s.pot, s.gamma);
    const double c = 0.7;
    AdjointTriple end = als.terminal_triple(Field(s.grid, c), Field(s.grid, 0.0));
    CHECK(linf_norm(lincomb(end.p, -c, Field(s.grid, 1.0))) <= 1e-11);
    CHECK(linf_norm(end.q) <= 1e-11);
    // z - (p + tau q) == 0 and the SPD recovery relation hold
    Field recon = end.p;
    axpy(traj.params.tau, end.q, recon);
    axpy(-1.0, end.z, recon);
    CHECK(linf_norm(recon) <= 1e-12);
}

TEST_CASE("adjoint triples satisfy the z and p-recovery invariants") {
    Setup s(12, 6, 0.03);
    StateTrajectory traj = s.solve();
    AdjointSolver als(traj, s.pot, s.gamma);
    TrackingSources src;
    src.g1.assign(s.params.nt, Field(s.grid, 0.1));
    src.g2.assign(s.params.nt, Field(s.grid, -0.2));
    src.g3 = Field(s.grid, 0.3);
    src.g4 = Field(s.grid, 0.5);
    auto adj = als.solve_adjoint(src);
    const double tau = traj.params.tau;
    for (const auto& a : adj) {
        Field recon = a.p;
        axpy(tau, a.q, recon);
        axpy(-1.0, a.z, recon);
        CHECK(linf_norm(recon) <= 1e-12 * std::max(1.0, linf_norm(a.z)));
        // (-lap + 1/tau) p = z / tau
        Field lhs(s.grid);
        apply_neg_laplacian(a.p, lhs);
        for (int k = 0; k < lhs.size(); ++k) lhs[k] += a.p[k] / tau - a.z[k] / tau;
        CHECK(field_norm(lhs) <= 1e-9 * std::max(1.0, field_norm(a.z)));
    }
    // terminal values are the given data
    CHECK(linf_norm(lincomb(adj.back().z, -1.0, src.g3)) == 0.0);
    CHECK(linf_norm(lincomb(adj.back().r, -1.0, src.g4)) == 0.0);
}

TEST_CASE("duality identity is exact for random directions") {
    Setup s(16, 10, 0.05);
    s.params.cg_tol = 1e-13;
    s.params.newton_tol = 1e-12;
    StateTrajectory traj = s.solve();

    // synthetic tracking data around the trajectory
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    ControlProblem prob;
    prob.alpha = {1.0, 0.7, 1.3, 0.4, 0.0};
    prob.phi_target_q.assign(s.params.nt, Field(s.grid));
    prob.sigma_target_q.assign(s.params.nt, Field(s.grid));
    for (int n = 0; n < s.params.nt; ++n)
        for (int k = 0; k < s.grid.n(); ++k) {
            prob.phi_target_q[n][k] = d(rng);
            prob.sigma_target_q[n][k] = d(rng);
        }
    prob.phi_target_omega = Field(s.grid);
    prob.sigma_target_omega = Field(s.grid);
    for (int k = 0; k < s.grid.n(); ++k) {
        prob.phi_target_omega[k] = d(rng);
        prob.sigma_target_omega[k] = d(rng);
    }
    prob.u_min = constant_control(s.grid, s.params.nt, -1.0);
    prob.u_max = constant_control(s.grid, s.params.nt, 1.0);

    AdjointSolver als(traj, s.pot, s.gamma);
    auto adj = als.solve_adjoint(make_tracking_sources(traj, prob));
    TangentSolver tls(traj, s.pot, s.gamma);

    const double dt = s.params.dt();
    for (unsigned seed = 0; seed < 3; ++seed) {
        auto h = random_direction(s.grid, s.params.nt, 300 + seed);
        auto tan = tls.solve_tangent(s.u, h);
        double lhs = 0.0;
        for (int n = 0; n < s.params.nt; ++n) lhs += dt * field_inner(adj[n].r, h[n]);
        double rhs = 0.0;
        Field diff(s.grid);
        for (int n = 0; n < s.params.nt; ++n) {
            for (int k = 0; k < diff.size(); ++k) diff[k] = traj.phi[n][k] - prob.phi_target_q[n][k];
            rhs += dt * prob.alpha[0] * field_inner(diff, tan[n].psi);
            for (int k = 0; k < diff.size(); ++k) diff[k] = traj.sigma[n][k] - prob.sigma_target_q[n][k];
            rhs += dt * prob.alpha[2] * field_inner(diff, tan[n].zeta);
        }
        const int nt = s.params.nt;
        for (int k = 0; k < diff.size(); ++k) diff[k] = traj.phi[nt][k] - prob.phi_target_omega[k];
        rhs += prob.alpha[1] * field_inner(diff, tan[nt].psi);
        for (int k = 0; k < diff.size(); ++k) diff[k] = traj.sigma[nt][k] - prob.sigma_target_omega[k];
        rhs += prob.alpha[3] * field_inner(diff, tan[nt].zeta);

        const double rel = std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-30});
        CHECK(rel <= 1e-10);
    }
}

TEST_CASE("duality identity survives the deep-quench regime") {
    // phi near the well bottoms: the implicit-part curvature spreads over
    // [2, ~40] and the preconditioner is at its weakest
    Grid2D grid(12, 12);
    ModelParams params;
    params.T = 0.05;
    params.nt = 8;
    params.c0 = 2.5;
    params.newton_tol = 1e-12;
    params.cg_tol = 1e-13;
    LogPotential pot(params.c0);
    GammaSource gamma = GammaSource::tanh_default(0.9);
    StateSolver solver(grid, params, pot, gamma);

    InitialData init;
    init.phi0 = Field(grid);
    init.sigma0 = Field(grid);
    for (int j = 0; j < grid.ny; ++j)
        for (int i = 0; i < grid.nx; ++i) {
            init.phi0(i, j) = 0.85 * std::cos(pi * grid.x(i)) * std::cos(pi * grid.y(j));
            init.sigma0(i, j) = 0.5 + 0.25 * std::cos(pi * grid.x(i));
        }
    std::vector<Field> u(params.nt, Field(grid, 0.3));
    StateTrajectory traj = solver.solve_state(init, u);

    ControlProblem prob;
    prob.alpha = {1.0, 1.0, 1.0, 1.0, 0.0};
    prob.phi_target_q.assign(params.nt, Field(grid, 0.1));
    prob.sigma_target_q.assign(params.nt, Field(grid, 0.2));
    prob.phi_target_omega = Field(grid, -0.1);
    prob.sigma_target_omega = Field(grid, 0.4);
    prob.u_min = constant_control(grid, params.nt, -1.0);
    prob.u_max = constant_control(grid, params.nt, 1.0);

    AdjointSolver als(traj, pot, gamma);
    auto adj = als.solve_adjoint(make_tracking_sources(traj, prob));
    TangentSolver tls(traj, pot, gamma);
    const double dt = params.dt();
    auto h = random_direction(grid, params.nt, 31415);
    auto tan = tls.solve_tangent(u, h);

    double lhs = 0.0;
    for (int n = 0; n < params.nt; ++n) lhs += dt * field_inner(adj[n].r, h[n]);
    double rhs = 0.0;
    Field diff(grid);
    for (int n = 0; n < params.nt; ++n) {
        for (int k = 0; k < diff.size(); ++k) diff[k] = traj.phi[n][k] - prob.phi_target_q[n][k];
        rhs += dt * field_inner(diff, tan[n].psi);
        for (int k = 0; k < diff.size(); ++k) diff[k] = traj.sigma[n][k] - prob.sigma_target_q[n][k];
        rhs += dt * field_inner(diff, tan[n].zeta);
    }
    for (int k = 0; k < diff.size(); ++k) diff[k] = traj.phi[params.nt][k] - prob.phi_target_omega[k];
    rhs += field_inner(diff, tan[params.nt].psi);
    for (int k = 0; k < diff.size(); ++k) diff[k] = traj.sigma[params.nt][k] - prob.sigma_target_omega[k];
    rhs += field_inner(diff, tan[params.nt].zeta);

    const double rel = std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-30});
    CHECK(rel <= 1e-10);
}

TEST_CASE("alpha5-only cost produces the zero adjoint r") {
    Setup s(10, 6, 0.03);
    StateTrajectory traj = s.solve();
    ControlProblem prob;
    prob.alpha = {0.0, 0.0, 0.0, 0.0, 1.0};
    prob.phi_target_q.assign(s.params.nt, Field(s.grid, 0.0));
    prob.sigma_target_q.assign(s.params.nt, Field(s.grid, 0.0));
    prob.phi_target_omega = Field(s.grid, 0.0);
    prob.sigma_target_omega = Field(s.grid, 0.0);
    prob.u_min = constant_control(s.grid, s.params.nt, -1.0);
    prob.u_max = constant_control(s.grid, s.params.nt, 1.0);
    AdjointSolver als(traj, s.pot, s.gamma);
    auto adj = als.solve_adjoint(make_tracking_sources(traj, prob));
    for (const auto& a : adj)
        CHECK(linf_norm(a.r) == 0.0);
}
