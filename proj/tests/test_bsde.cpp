#include "fixtures.hpp"
#include "teamsmp/baselines.hpp"
#include "teamsmp/bsde.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace teamsmp;

namespace {

struct LqRun {
    TeamProblem p;
    RiccatiSolution ric;
    PathEnsemble e;
    std::vector<ActionSlice> slices;
    AdjointEnsemble a;
};

LqRun riccati_run(const ModelFamily& f, int K, std::size_t M, std::uint64_t seed) {
    LqRun r{build_problem(f, {fixtures::fis({0})}), {}, {}, {}, {}};
    const TimeGrid grid(K, f.horizon);
    r.ric = solve_riccati(f, grid);
    const StrategyProfile prof = riccati_profile(r.p, r.ric);
    const StrategyControl c(r.p, prof);
    r.e = simulate_forward(r.p, c, grid, M, seed);
    r.slices = record_slices(c, r.e);
    r.a = solve_adjoint(r.p, r.slices, r.e);
    return r;
}

}  // namespace

TEST_CASE("zero costs give a zero adjoint") {
    const auto f = fixtures::scalar_lq(0.5, 1, 1, 0, 0, 0);
    const auto p = build_problem(f, {fixtures::fis({0})});
    const TimeGrid grid(10, 1.0);
    const StrategyControl c(p, initial_profile(p, 10, StrategyMode::regular));
    const auto e = simulate_forward(p, c, grid, 500, 1);
    const auto slices = record_slices(c, e);
    const auto a = solve_adjoint(p, slices, e);
    for (const auto& v : a.psi) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& v : a.Q) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
    const auto rep = check_q_identity(p, slices, e, a);
    CHECK(rep.discrepancy == 0.0);
}

TEST_CASE("terminal adjoint is the terminal cost gradient") {
    const auto r = riccati_run(fixtures::scalar_lq(0.2, 1, 1, 1, 1, 0.8), 10, 200, 4);
    CHECK((r.a.psi.back() - 1.6 * r.e.x.back()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("LQ adjoint matches 2 P(t) x(t) from the Riccati oracle") {
    const auto r = riccati_run(fixtures::scalar_lq(0.3, 1, 0.8, 1, 1, 0.5), 50, 10000, 5);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < r.a.psi.size(); ++k) {
        const Matrix target = 2.0 * r.ric.P[k](0, 0) * r.e.x[k];
        num += (r.a.psi[k] - target).squaredNorm();
        den += target.squaredNorm();
    }
    CHECK(std::sqrt(num / den) <= 0.05);
}

TEST_CASE("LQ martingale intensity matches 2 P(t) s") {
    const double s = 0.8;
    const auto r = riccati_run(fixtures::scalar_lq(0.3, 1, s, 1, 1, 0.5), 50, 10000, 6);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < r.a.Q.size(); ++k) {
        // Q_k estimates the intensity over [t_k, t_{k+1}].
        const double target = 2.0 * r.ric.P[k + 1](0, 0) * s;
        num += (r.a.Q[k].array() - target).square().sum();
        den += target * target * static_cast<double>(r.a.paths);
    }
    CHECK(std::sqrt(num / den) <= 0.10);
    const auto rep = check_q_identity(r.p, r.slices, r.e, r.a);
    CHECK(rep.discrepancy <= 0.10);
    CHECK(rep.skipped_steps == std::vector<int>{0});
}

TEST_CASE("Q identity report on the bilinear fixture is diagnostic only") {
    const auto f = fixtures::scalar_bilinear();
    const auto p = build_problem(f, {fixtures::fis({0})});
    const TimeGrid grid(20, 1.0);
    const StrategyControl c(p, initial_profile(p, 20, StrategyMode::regular));
    const auto e = simulate_forward(p, c, grid, 2000, 2);
    const auto slices = record_slices(c, e);
    const auto a = solve_adjoint(p, slices, e);
    const auto rep = check_q_identity(p, slices, e, a);
    CHECK(rep.step_discrepancy.size() == 20);
    CHECK(std::isfinite(rep.discrepancy));
}

TEST_CASE("adjoint follows the discrete Riccati recursion of the simulated feedback") {
    // For u = -g_k x the exact discrete adjoint is psi_k = 2 P_k x_k with
    // P_k = P_{k+1} (1 + a dt) (1 + (a - b g_k) dt) + q dt: H_x holds the action
    // fixed, the conditional mean of x_{k+1} sees the closed loop.
    const double a = 0.3, b = 1.0, q = 1.0, g = 0.5;
    const int K = 20;
    const auto r = riccati_run(fixtures::scalar_lq(a, b, 0.8, q, 1, g, 1.0, 1.0, 0.5), K, 20000, 7);
    const double dt = 1.0 / K;
    double P = g;
    for (int k = K - 1; k >= 0; --k) {
        const auto ks = static_cast<std::size_t>(k);
        const double gain = r.ric.gain[ks](0, 0);
        P = P * (1.0 + a * dt) * (1.0 + (a - b * gain) * dt) + q * dt;
        const Matrix target = 2.0 * P * r.e.x[ks];
        CHECK((r.a.psi[ks] - target).norm() / target.norm() < 0.01);
    }
}

TEST_CASE("adjoint CSV lists psi and Q columns") {
    const auto r = riccati_run(fixtures::scalar_lq(0.3, 1, 0.8, 1, 1, 0.5), 3, 2, 1);
    std::stringstream ss;
    write_adjoint_csv(ss, r.a);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "path,step,t,psi0,Q0_0");
}
