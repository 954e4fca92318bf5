#include "fixtures.hpp"
#include "teamsmp/optimize.hpp"
#include "teamsmp/sde.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace teamsmp;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

StrategyProfile constant(const TeamProblem& p, int K, double a) {
    return constant_profile(p, K, std::vector<Vector>(p.dm_count(), Vector::Constant(1, a)));
}

}  // namespace

TEST_CASE("zero dynamics keep the initial state") {
    const auto p = build_problem(fixtures::scalar_lq(0, 0, 0, 0, 0, 0, 1.0, 2.5), {fixtures::fis({0})});
    const TimeGrid grid(10, 1.0);
    const auto e = simulate_forward(p, StrategyControl(p, constant(p, 10, 1.0)), grid, 50, 1);
    for (const auto& xk : e.x) CHECK((xk.array() == 2.5).all());
}

TEST_CASE("constant drift integrates exactly") {
    const auto p = build_problem(fixtures::scalar_lq(0, 1, 0, 0, 0, 0, 2.0, 1.0), {fixtures::fis({0})});
    const TimeGrid grid(16, 2.0);
    const auto e = simulate_forward(p, StrategyControl(p, constant(p, 16, 0.75)), grid, 20, 1);
    CHECK((e.x.back().array() - (1.0 + 0.75 * 2.0)).abs().maxCoeff() < 1e-14);
}

TEST_CASE("Brownian marginal at the horizon") {
    const auto p = build_problem(fixtures::scalar_lq(0, 0, 1, 0, 0, 0, 1.0, 0.0), {fixtures::fis({0})});
    const TimeGrid grid(50, 1.0);
    const std::size_t M = 10000;
    const auto e = simulate_forward(p, StrategyControl(p, constant(p, 50, 0.0)), grid, M, 11);
    const auto& xT = e.x.back();
    const double mean = xT.mean();
    const double var = (xT.array() - mean).square().sum() / (M - 1);
    // x(T) ~ N(0, T)
    CHECK(std::abs(mean) < 5.0 / std::sqrt(double(M)));
    CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("ensembles do not depend on the worker count") {
    const auto p = build_problem(fixtures::coupled_lq(), {fixtures::fis({0}), fixtures::fis({1})});
    const TimeGrid grid(20, 1.0);
    const auto prof = initial_profile(p, 20, StrategyMode::regular);
    const auto a = simulate_forward(p, StrategyControl(p, prof), grid, 1000, 5, {1});
    const auto b = simulate_forward(p, StrategyControl(p, prof), grid, 1000, 5, {3});
    for (std::size_t k = 0; k < a.x.size(); ++k) CHECK(a.x[k] == b.x[k]);
    CHECK(a.path_cost == b.path_cost);
}

TEST_CASE("path r of a large ensemble equals path r of a small one") {
    const auto p = build_problem(fixtures::scalar_lq(0.2, 1, 1, 1, 1, 1), {fixtures::fis({0})});
    const TimeGrid grid(10, 1.0);
    const auto prof = constant(p, 10, 0.3);
    const auto a = simulate_forward(p, StrategyControl(p, prof), grid, 10, 5);
    const auto b = simulate_forward(p, StrategyControl(p, prof), grid, 100, 5);
    CHECK(a.x.back() == b.x.back().leftCols(10));
}

TEST_CASE("running cost is a left Riemann sum") {
    // l = 1 via a unit constant action with r = 1 and no state cost.
    const auto p = build_problem(fixtures::scalar_lq(0, 0, 0, 0, 1, 0, 3.0), {fixtures::fis({0})});
    const TimeGrid grid(7, 3.0);
    const auto e = simulate_forward(p, StrategyControl(p, constant(p, 7, 1.0)), grid, 4, 1);
    CHECK((e.path_cost.array() - 3.0).abs().maxCoeff() < 1e-13);
}

TEST_CASE("non-finite states abort with path and step") {
    ModelFamily f;
    f.tag = FamilyTag::custom;
    f.subsystems = {fixtures::scalar_subsystem()};
    f.initial.mean = Vector::Constant(1, 10.0);
    f.custom.drift = [](double, VecIn x, VecIn, VecOut out) { out[0] = std::exp(x[0] * x[0]); };
    f.custom.diffusion = [](double, VecIn, VecIn, MatOut out) { out(0, 0) = 0.0; };
    f.custom.running_cost = [](double, VecIn, VecIn) { return 0.0; };
    f.custom.terminal_cost = [](VecIn) { return 0.0; };
    const auto p = build_problem(f, {fixtures::fis({0})});
    const TimeGrid grid(10, 1.0);
    try {
        simulate_forward(p, StrategyControl(p, initial_profile(p, 10, StrategyMode::regular)), grid, 3, 1);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.path() == 0);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("variational process vanishes when the direction is the base") {
    const auto p = build_problem(fixtures::scalar_bilinear(), {fixtures::fis({0})});
    const TimeGrid grid(20, 1.0);
    const auto prof = constant(p, 20, 0.4);
    const StrategyControl c(p, prof);
    const auto e = simulate_forward(p, c, grid, 200, 3);
    const auto z = simulate_variational(p, c, c, e);
    for (const auto& Zk : z.Z) CHECK(Zk.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("variational process of scalar LQ solves the linear ODE") {
    const double a = -0.7, b = 1.3;
    const auto p = build_problem(fixtures::scalar_lq(a, b, 0.5, 1, 1, 1), {fixtures::fis({0})});
    const int K = 400;
    const TimeGrid grid(K, 1.0);
    const auto base = constant(p, K, 0.0), dir = constant(p, K, 1.0);
    const auto e = simulate_forward(p, StrategyControl(p, base), grid, 50, 3);
    const auto z = simulate_variational(p, StrategyControl(p, base), StrategyControl(p, dir), e);
    // Z(T) = int_0^T e^{a(T-t)} b dt = b (e^{aT} - 1) / a, the same on every path.
    const double exact = b * (std::exp(a) - 1.0) / a;
    const double dt = grid.dt();
    CHECK((z.Z.back().array() - exact).abs().maxCoeff() < 2.0 * dt);
    double euler = 0.0;
    for (int k = 0; k < K; ++k) euler += std::pow(1.0 + a * dt, K - 1 - k) * b * dt;
    CHECK((z.Z.back().array() - euler).abs().maxCoeff() < 1e-12);
}

TEST_CASE("perturbed LQ states are exactly affine in epsilon") {
    const auto p = build_problem(fixtures::scalar_lq(0.3, 1, 1, 1, 1, 1), {fixtures::fis({0})});
    const TimeGrid grid(20, 1.0);
    const auto base = initial_profile(p, 20, StrategyMode::regular);
    const auto rep = variational_check(p, base, constant(p, 20, 1.0), {1e-2, 5e-3}, grid, 500, 3);
    for (double r : rep.residual) CHECK(r < 1e-9);
}

TEST_CASE("variational residual is first order on the bilinear fixture") {
    const auto p = build_problem(fixtures::scalar_bilinear(), {fixtures::fis({0})});
    const TimeGrid grid(50, 1.0);
    const auto rep = variational_check(p, constant(p, 50, 0.0), constant(p, 50, 1.0), {1e-2, 5e-3, 2.5e-3},
                                       grid, 2000, 3);
    REQUIRE(rep.residual.size() == 3);
    CHECK_THAT(rep.residual[1] / rep.residual[0], WithinAbs(0.5, 0.15));
    CHECK_THAT(rep.residual[2] / rep.residual[1], WithinAbs(0.5, 0.15));
}

TEST_CASE("binary ensemble cache round-trips") {
    const auto p = build_problem(fixtures::coupled_lq(), {fixtures::fis({0}), fixtures::fis({1})});
    const TimeGrid grid(5, 1.0);
    const auto e = simulate_forward(p, StrategyControl(p, initial_profile(p, 5, StrategyMode::regular)), grid,
                                    30, 9);
    std::stringstream ss;
    write_ensemble_binary(ss, e);
    const auto r = read_ensemble_binary(ss);
    CHECK(r.paths == e.paths);
    CHECK(r.seed == e.seed);
    CHECK(r.grid.steps == 5);
    for (std::size_t k = 0; k < e.x.size(); ++k) CHECK(r.x[k] == e.x[k]);
    for (std::size_t k = 0; k < e.dW.size(); ++k) CHECK(r.dW[k] == e.dW[k]);
    CHECK(r.info.size() == e.info.size());
    CHECK(r.info[1].back() == e.info[1].back());
    CHECK(r.path_cost == e.path_cost);
    std::stringstream bad("not an ensemble");
    CHECK_THROWS_WITH(read_ensemble_binary(bad), ContainsSubstring("magic"));
}

TEST_CASE("ensemble CSV has one row per path and node") {
    const auto p = build_problem(fixtures::scalar_lq(0, 1, 1, 1, 1, 1), {fixtures::fis({0})});
    const TimeGrid grid(4, 1.0);
    const auto e = simulate_forward(p, StrategyControl(p, constant(p, 4, 0.5)), grid, 3, 9);
    std::stringstream ss;
    write_ensemble_csv(ss, e);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "path,step,t,x0,u0,dW0");
    int rows = 0;
    while (std::getline(ss, line)) ++rows;
    CHECK(rows == 3 * 5);
}
