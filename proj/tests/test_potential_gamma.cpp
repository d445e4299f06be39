#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "chks/model.hpp"

using namespace chks;

TEST_CASE("logarithmic potential values") {
    LogPotential pot(1.5);
    CHECK(pot.eval(0.0, 0) == 0.0);
    CHECK(pot.eval(0.0, 1) == 0.0);
    CHECK(pot.eval(0.0, 2) == Approx(-1.0));           // 2 - 2 c0
    CHECK(pot.eval(0.0, 3) == 0.0);
    // continuity extension at the endpoint: F(1) = 2 ln 2 - c0
    CHECK(pot.eval(1.0, 0) == Approx(2.0 * std::log(2.0) - 1.5).margin(1e-6));
    CHECK_THROWS_AS(pot.eval(0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(LogPotential(1.0), std::invalid_argument);
}

TEST_CASE("potential derivatives agree with central differences") {
    LogPotential pot(1.5);
    const double h = 1e-5;
    for (double s : {-0.9, -0.5, 0.0, 0.5, 0.9}) {
        for (int order = 1; order <= 3; ++order) {
            const double fd = (pot.eval(s + h, order - 1) - pot.eval(s - h, order - 1)) / (2.0 * h);
            const double v = pot.eval(s, order);
            CHECK(std::abs(fd - v) <= 1e-6 * std::max(1.0, std::abs(v)));
        }
    }
}

TEST_CASE("potential guard clamps and counts; strict mode throws") {
    LogPotential pot(1.5);
    CHECK(pot.clamp_events() == 0);
    const double inside = pot.eval(1.0 - s_guard, 0);
    CHECK(pot.clamp_events() == 0);
    const double outside = pot.eval(1.5, 0);
    CHECK(pot.clamp_events() == 1);
    CHECK(outside == inside);
    (void)pot.eval(-2.0, 1);
    CHECK(pot.clamp_events() == 2);
    pot.reset_clamp_events();
    CHECK(pot.clamp_events() == 0);

    LogPotential strict(1.5, true);
    CHECK_THROWS_AS(strict.eval(1.0, 0), std::domain_error);
    CHECK_THROWS_AS(strict.eval(-1.2, 2), std::domain_error);
    CHECK_NOTHROW(strict.eval(0.999, 0));
}

TEST_CASE("gamma source values and derivatives") {
    GammaSource g = GammaSource::tanh_default(0.5);
    CHECK(g.eval(0.0, 0.0) == 0.0);
    CHECK(g.eval(0.0, 0.0, GammaDeriv::d_sigma) == Approx(0.5));
    CHECK(g.eval(1.0, 1.0, GammaDeriv::d_phi) == Approx(-0.5));
    CHECK_NOTHROW(g.validate_against(1.0));
    CHECK_THROWS_AS(g.validate_against(0.5), std::invalid_argument);
    CHECK_THROWS_AS(GammaSource::tanh_default(-0.1), std::invalid_argument);

    // derivative cross-check against finite differences
    GammaSource c = GammaSource::custom(0.3, 2.0, 0.7, 0.1);
    const double h = 1e-6;
    const double fd_phi = (c.eval(0.2 + h, 0.4) - c.eval(0.2 - h, 0.4)) / (2 * h);
    const double fd_sig = (c.eval(0.2, 0.4 + h) - c.eval(0.2, 0.4 - h)) / (2 * h);
    CHECK(c.eval(0.2, 0.4, GammaDeriv::d_phi) == Approx(fd_phi).margin(1e-8));
    CHECK(c.eval(0.2, 0.4, GammaDeriv::d_sigma) == Approx(fd_sig).margin(1e-8));
}

TEST_CASE("gamma stays below its amplitude everywhere") {
    GammaSource g = GammaSource::tanh_default(0.5);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> phi_d(-5.0, 5.0), sig_d(-5.0, 5.0);
    for (int k = 0; k < 10000; ++k) {
        const double phi = phi_d(rng), sig = sig_d(rng);
        CHECK(std::abs(g.eval(phi, sig)) <= 0.5);
        CHECK(std::abs(g.eval(phi, sig, GammaDeriv::d_phi)) <= 0.5);
        CHECK(std::abs(g.eval(phi, sig, GammaDeriv::d_sigma)) <= 0.5);
    }
}

TEST_CASE("model parameter validation") {
    ModelParams p;
    CHECK_NOTHROW(p.validate());
    ModelParams bad = p;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = p;
    bad.c0 = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = p;
    bad.nt = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.nt = 0;   // no stepping: permitted, the trajectory is the initial state
    CHECK_NOTHROW(bad.validate());
    bad = p;
    bad.T = 400.0;   // dt would reach 2 > 1
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK(p.dt() == Approx(p.T / p.nt));
}
