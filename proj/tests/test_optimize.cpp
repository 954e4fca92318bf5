#include "fixtures.hpp"
#include "teamsmp/baselines.hpp"
#include "teamsmp/optimize.hpp"

#include <catch_amalgamated.hpp>

using namespace teamsmp;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

PbpConfig small_config(int K, std::size_t M, int iters = 10) {
    PbpConfig cfg;
    cfg.steps = K;
    cfg.paths = M;
    cfg.max_iters = iters;
    cfg.seed = 17;
    return cfg;
}

}  // namespace

TEST_CASE("zero costs evaluate to exactly zero") {
    const auto p = build_problem(fixtures::scalar_lq(0.3, 1, 1, 0, 0, 0), {fixtures::fis({0})});
    const auto J = evaluate_cost(p, initial_profile(p, 10, StrategyMode::regular), TimeGrid(10, 1.0), 100, 1);
    CHECK(J.mean == 0.0);
    CHECK(J.standard_error == 0.0);
}

TEST_CASE("unit running cost on a deterministic system evaluates to T") {
    const auto p = build_problem(fixtures::scalar_lq(0, 0, 0, 0, 1, 0, 2.0), {fixtures::fis({0})});
    const auto prof = constant_profile(p, 8, {Vector::Constant(1, 1.0)});
    const auto J = evaluate_cost(p, prof, TimeGrid(8, 2.0), 10, 1);
    CHECK_THAT(J.mean, WithinAbs(2.0, 1e-13));
}

TEST_CASE("Riccati feedback cost matches the value function") {
    // a=0, b=1, q=1, r=1, g=0, s=1, x0=1: V = P(0) x0^2 + s^2 int_0^T P dt.
    const auto f = fixtures::scalar_lq(0, 1, 1, 1, 1, 0);
    const auto p = build_problem(f, {fixtures::fis({0})});
    const TimeGrid grid(100, 1.0);
    const auto sol = solve_riccati(f, grid);
    const double oracle = std::tanh(1.0) + std::log(std::cosh(1.0));  // int_0^1 tanh(1 - t) dt = log cosh 1
    CHECK_THAT(sol.value, WithinRel(oracle, 1e-6));
    const auto J = evaluate_cost(p, riccati_profile(p, sol), grid, 100000, 4);
    CHECK_THAT(J.mean, WithinRel(oracle, 0.02));
}

TEST_CASE("zero-cost problems stop at the first check") {
    const auto p = build_problem(fixtures::scalar_lq(0.3, 1, 1, 0, 0, 0), {fixtures::fis({0})});
    const auto res = person_by_person_solve(p, initial_profile(p, 10, StrategyMode::regular), small_config(10, 500));
    CHECK(res.converged);
    CHECK(res.iterations == 1);
    REQUIRE(res.history.size() == 1);
    CHECK(res.history[0].dm == -1);
    CHECK(res.final_gaps.team_gap == 0.0);
}

TEST_CASE("Riccati start is already person-by-person stationary") {
    const auto f = fixtures::scalar_lq(0, 1, 1, 1, 1, 0, 1.0, 1.0, 1.0);
    const auto p = build_problem(f, {fixtures::fis({0})});
    auto cfg = small_config(50, 10000);
    cfg.gap_tol = 1e-2;
    const auto res = person_by_person_solve(p, riccati_profile(p, solve_riccati(f, TimeGrid(50, 1.0))), cfg);
    CHECK(res.converged);
    CHECK(res.iterations == 1);
}

TEST_CASE("person-by-person updates reduce the cost and the gap") {
    const auto p = build_problem(fixtures::scalar_lq(0.2, 1, 1, 1, 1, 1, 1.0, 1.0, 0.5), {fixtures::fis({0})});
    const auto res = person_by_person_solve(p, initial_profile(p, 20, StrategyMode::regular), small_config(20, 3000, 4));
    REQUIRE(res.history.size() >= 2);
    CHECK(res.history.back().cost <= res.history.front().cost);
    CHECK(res.history.back().team_gap < res.history.front().team_gap);
    for (const auto& h : res.history)
        if (h.dm >= 0 && h.accepted) CHECK(h.cost <= res.history.front().cost + 3.0 * h.standard_error);
}

TEST_CASE("identical configurations reproduce identical histories") {
    const auto p = build_problem(fixtures::coupled_lq(), {fixtures::fis({0}), fixtures::fis({1})});
    const auto init = initial_profile(p, 10, StrategyMode::regular);
    auto cfg = small_config(10, 1000, 3);
    const auto a = person_by_person_solve(p, init, cfg);
    cfg.simulation.workers = 3;
    const auto b = person_by_person_solve(p, init, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].cost == b.history[i].cost);
        CHECK(a.history[i].gaps == b.history[i].gaps);
        CHECK(a.history[i].damping == b.history[i].damping);
    }
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < 10; ++k) CHECK(a.profile.dm[i].regular.coef[k] == b.profile.dm[i].regular.coef[k]);
}

TEST_CASE("budget exhaustion is reported, not hidden") {
    const auto p = build_problem(fixtures::coupled_lq(), {fixtures::fis({0}), fixtures::fis({1})});
    auto cfg = small_config(10, 500, 1);
    cfg.gap_tol = 0.0;
    const auto res = person_by_person_solve(p, initial_profile(p, 10, StrategyMode::regular), cfg);
    CHECK_FALSE(res.converged);
    CHECK_THAT(res.status, ContainsSubstring("budget"));
}

TEST_CASE("mismatched initial strategy length is rejected") {
    const auto p = build_problem(fixtures::scalar_lq(0, 1, 1, 1, 1, 0), {fixtures::fis({0})});
    CHECK_THROWS_AS(person_by_person_solve(p, initial_profile(p, 5, StrategyMode::regular), small_config(10, 10)),
                    ModelError);
}

TEST_CASE("sufficiency probes") {
    SECTION("LQ with nonnegative weights is convex") {
        const auto p = build_problem(fixtures::coupled_lq(), {fixtures::fis({0}), fixtures::fis({1})});
        const auto rep = check_sufficiency(p, 200, 3);
        CHECK(rep.passed());
        // Hessians are 2 Q_cost, 2 R, 2 G.
        CHECK_THAT(rep.min_eig_hamiltonian_x, WithinAbs(2.0 * 0.5, 1e-5));
        CHECK_THAT(rep.min_eig_hamiltonian_u, WithinAbs(2.0, 1e-5));
        CHECK_THAT(rep.min_eig_terminal, WithinAbs(1.0, 1e-5));
    }
    SECTION("concave terminal cost is flagged") {
        const auto p = build_problem(fixtures::scalar_lq(0, 1, 1, 1, 1, -1), {fixtures::fis({0})});
        const auto rep = check_sufficiency(p, 50, 3);
        CHECK_FALSE(rep.passed());
        CHECK_THAT(rep.min_eig_terminal, WithinAbs(-2.0, 1e-5));
    }
    SECTION("zero costs with linear drift pass") {
        const auto p = build_problem(fixtures::scalar_lq(0.7, 1, 1, 0, 0, 0), {fixtures::fis({0})});
        const auto rep = check_sufficiency(p, 50, 3);
        CHECK(rep.passed());
        CHECK(std::abs(rep.min_eig_hamiltonian_x) < 1e-6);
    }
}

TEST_CASE("Gateaux identity with the direction equal to the base") {
    const auto p = build_problem(fixtures::scalar_lq(0.2, 1, 1, 1, 1, 1), {fixtures::fis({0})});
    const auto base = constant_profile(p, 10, {Vector::Constant(1, 0.3)});
    const auto rep = gateaux_identity_check(p, base, base, {1e-2}, TimeGrid(10, 1.0), 500, 2);
    CHECK(rep.adjoint_derivative == 0.0);
    CHECK(std::abs(rep.finite_difference[0]) < 1e-10);
}

TEST_CASE("Gateaux discrepancy shrinks with epsilon on LQ") {
    const auto p = build_problem(fixtures::scalar_lq(0.2, 1, 1, 1, 1, 1, 1.0, 1.0, 0.5), {fixtures::fis({0})});
    const auto base = initial_profile(p, 20, StrategyMode::regular);
    const auto dir = constant_profile(p, 20, {Vector::Constant(1, 1.0)});
    const auto rep = gateaux_identity_check(p, base, dir, {1e-2, 5e-3}, TimeGrid(20, 1.0), 5000, 2);
    CHECK(rep.relative_discrepancy[0] <= 0.10);
    CHECK_THAT(rep.relative_discrepancy[1] / rep.relative_discrepancy[0], WithinAbs(0.5, 0.15));
}
