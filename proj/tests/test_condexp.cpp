#include "fixtures.hpp"
#include "teamsmp/condexp.hpp"
#include "teamsmp/sde.hpp"

#include <catch_amalgamated.hpp>

using namespace teamsmp;
using Catch::Matchers::WithinAbs;

namespace {

PathEnsemble ensemble(const TeamProblem& p, int K, std::size_t M, std::uint64_t seed) {
    const TimeGrid grid(K, p.horizon);
    return simulate_forward(p, StrategyControl(p, initial_profile(p, K, StrategyMode::regular)), grid, M, seed);
}

}  // namespace

TEST_CASE("degree-one FIS features are [1, x]") {
    const auto p = build_problem(fixtures::scalar_lq(0, 1, 1, 1, 1, 1), {fixtures::fis({0}, Basis::polynomial_deg1)});
    const auto e = ensemble(p, 5, 7, 2);
    const Matrix F = information_features(p, 0, e, 3, Basis::polynomial_deg1);
    REQUIRE(F.cols() == 2);
    CHECK((F.col(0).array() == 1.0).all());
    CHECK(F.col(1) == e.x[3].row(0).transpose());
}

TEST_CASE("degree-two NIS features are [1, W, W^2]") {
    const auto p = build_problem(fixtures::scalar_lq(0, 1, 1, 1, 1, 1), {fixtures::nis({0})});
    const auto e = ensemble(p, 6, 9, 2);
    const Matrix F = information_features(p, 0, e, 4, Basis::polynomial_deg2);
    REQUIRE(F.cols() == 3);
    Vector W = Vector::Zero(9);
    for (int k = 0; k < 4; ++k) W += e.dW[static_cast<std::size_t>(k)].row(0).transpose();
    CHECK((F.col(1) - W).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((F.col(2) - W.cwiseProduct(W)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fixed initial state gives a degenerate design at k = 0") {
    const auto p = build_problem(fixtures::scalar_lq(0, 1, 1, 1, 1, 1), {fixtures::fis({0})});
    const auto e = ensemble(p, 4, 100, 3);
    const Matrix F = information_features(p, 0, e, 0, Basis::polynomial_deg2);
    for (Eigen::Index r = 1; r < F.rows(); ++r) CHECK(F.row(r) == F.row(0));
    const Matrix Y = e.x[1].row(0).transpose();
    const auto fit = fit_predict(F, Y);
    CHECK(fit.fit.degenerate);
    CHECK_THAT(fit.fitted(17, 0), WithinAbs(Y.mean(), 1e-14));
}

TEST_CASE("constant target is reproduced by the intercept") {
    Matrix F(50, 3);
    for (int r = 0; r < 50; ++r) F.row(r) << 1.0, r * 0.1, std::sin(r);
    const Matrix Y = Matrix::Constant(50, 1, 4.2);
    RegressionOptions opt;
    opt.ridge_absolute = 0.0;
    const auto fit = fit_predict(F, Y, opt);
    CHECK((fit.fitted.array() - 4.2).abs().maxCoeff() < 1e-10);
    const auto ridged = fit_predict(F, Y);
    CHECK(ridged.fit.ridge > 0.0);
    CHECK((ridged.fitted.array() - 4.2).abs().maxCoeff() < 1e-10);
}

TEST_CASE("target in the span is interpolated") {
    Matrix F(40, 3);
    for (int r = 0; r < 40; ++r) F.row(r) << 1.0, std::cos(r), r * r * 0.01;
    Vector beta(3);
    beta << 0.3, -2.0, 1.5;
    const Matrix Y = F * beta;
    RegressionOptions opt;
    opt.ridge_absolute = 0.0;
    const auto fit = fit_predict(F, Y, opt);
    CHECK(((fit.fitted - Y).cwiseAbs().array() / Y.cwiseAbs().maxCoeff()).maxCoeff() < 1e-8);
    CHECK((fit.fit.coefficients - beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("projection of W(t)^2 onto span{1, W(t)} is t") {
    const auto p = build_problem(fixtures::scalar_lq(0, 0, 1, 0, 0, 0, 1.0, 0.0), {fixtures::nis({0})});
    const int K = 10;
    const std::size_t M = 100000;
    const auto e = ensemble(p, K, M, 8);
    const int k = 6;
    const double t = 0.6;
    const Matrix F = information_features(p, 0, e, k, Basis::polynomial_deg1);
    const Matrix Y = F.col(1).array().square().matrix();
    RegressionOptions opt;
    opt.ridge_absolute = 0.0;
    const auto fit = fit_predict(F, Y, opt);
    // Prediction at W = 0 is the intercept. Var(W^2) = 2 t^2, so SE ~ t sqrt(2 / M).
    const double se = t * std::sqrt(2.0 / M);
    CHECK(std::abs(fit.fit.coefficients(0, 0) - t) < 3.0 * se);
}

TEST_CASE("ridge residuals are orthogonal to the design up to the ridge term") {
    const auto p = build_problem(fixtures::scalar_lq(0.3, 1, 1, 1, 1, 1), {fixtures::fis({0})});
    const auto e = ensemble(p, 10, 3000, 4);
    const Matrix F = information_features(p, 0, e, 5, Basis::polynomial_deg2);
    const Matrix Y = e.x[10].row(0).transpose().array().cube().matrix();
    const auto fit = fit_predict(F, Y);
    const Matrix lhs = F.transpose() * (Y - fit.fitted);
    Matrix rhs = fit.fit.ridge * fit.fit.coefficients;
    rhs.row(0).setZero();  // intercept is unpenalized
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + (F.transpose() * Y).cwiseAbs().maxCoeff()));
}

TEST_CASE("fitted values are measurable with respect to the features") {
    // Duplicate feature rows must receive identical predictions.
    Matrix F(200, 2);
    Matrix Y(200, 1);
    for (int r = 0; r < 200; ++r) {
        F.row(r) << 1.0, static_cast<double>(r % 10);
        Y(r, 0) = std::sin(r * 0.37);
    }
    const auto fit = fit_predict(F, Y);
    for (int r = 10; r < 200; ++r) CHECK(fit.fitted(r, 0) == fit.fitted(r % 10, 0));
}

TEST_CASE("two-fold fitting predicts each half from the other") {
    Matrix F(100, 2);
    Matrix Y(100, 1);
    for (int r = 0; r < 100; ++r) {
        F.row(r) << 1.0, r * 0.01;
        Y(r, 0) = 2.0 + 3.0 * r * 0.01 + ((r % 2) ? 0.1 : -0.1);
    }
    RegressionOptions opt;
    opt.two_fold = true;
    opt.ridge_absolute = 0.0;
    const auto fit = fit_predict(F, Y, opt);
    // Odd rows sit 0.1 above the line; predicted from even rows (0.1 below).
    CHECK_THAT(fit.fitted(1, 0), WithinAbs(2.0 + 0.03 - 0.1, 1e-10));
    CHECK_THAT(fit.fitted(2, 0), WithinAbs(2.0 + 0.06 + 0.1, 1e-10));
}

TEST_CASE("non-finite inputs raise regression errors with the step") {
    Matrix F = Matrix::Ones(5, 2);
    F(2, 1) = std::nan("");
    try {
        Regressor(F, {}, 7);
        FAIL("expected a regression error");
    } catch (const RegressionError& e) {
        CHECK(e.step() == 7);
    }
}

TEST_CASE("full path features accumulate discounted increments") {
    auto is = fixtures::nis({0}, Memory::full_path_features);
    is.path_rates = {0.0, 2.0};
    const auto p = build_problem(fixtures::scalar_lq(0, 0, 1, 0, 0, 0), {is});
    const auto e = ensemble(p, 8, 5, 6);
    const auto L = make_layout(p, 0);
    CHECK(L.dim == 3);
    const double dt = 1.0 / 8.0;
    const Matrix& v = e.info[0][5];
    for (Eigen::Index r = 0; r < 5; ++r) {
        double W = 0.0, Y = 0.0;
        for (int k = 0; k < 5; ++k) {
            const double inc = e.dW[static_cast<std::size_t>(k)](0, r);
            W += inc;
            Y = std::exp(-2.0 * dt) * Y + inc;
        }
        CHECK_THAT(v(0, r), WithinAbs(W, 1e-14));
        CHECK_THAT(v(1, r), WithinAbs(W, 1e-14));  // rate 0 is the plain sum
        CHECK_THAT(v(2, r), WithinAbs(Y, 1e-14));
    }
}

TEST_CASE("replayed information equals the recorded information") {
    const auto p = build_problem(fixtures::coupled_lq(), {fixtures::nis({0}), fixtures::fis({0, 1})});
    const auto e = ensemble(p, 6, 20, 1);
    const auto replay = replay_information(p, p.info[0], e, 0);
    for (int k = 0; k <= 6; ++k) CHECK(replay[static_cast<std::size_t>(k)] == e.info[0][static_cast<std::size_t>(k)]);
}
