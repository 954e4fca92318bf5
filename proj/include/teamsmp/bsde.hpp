#pragma once

// Backward regression scheme for the adjoint pair (psi, Q):
//   d psi = -H_x(t, x, psi, Q, u) dt + Q dW,   psi(T) = phi_x(x(T)),
// with H_x = f_x' psi + V_Q + l_x and V_Q,j = tr(Q' d sigma / d x_j).

#include "teamsmp/condexp.hpp"
#include "teamsmp/sde.hpp"

#include <ostream>
#include <vector>

namespace teamsmp {

struct AdjointOptions {
    RegressionOptions regression;
    Basis basis = Basis::polynomial_deg2;  // over full-information variables
};

struct AdjointEnsemble {
    TimeGrid grid;
    std::size_t paths = 0;
    int n = 0, m = 0;
    std::vector<Matrix> psi;       // K+1 entries, n x M
    std::vector<Matrix> psi_next;  // K entries, n x M: E[psi(t_{k+1}) | F_k]
    std::vector<Matrix> Q;         // K entries, (n*m) x M, column-major n x m per path
    std::vector<RegressionFit> fits;  // psi fit per step k < K
    std::vector<int> degenerate_steps;

    // Q of path r at step k as an n x m matrix.
    Eigen::Map<const Matrix> Q_at(std::size_t k, Eigen::Index r) const {
        return Eigen::Map<const Matrix>(Q[k].col(r).data(), n, m);
    }
};

namespace detail {

// Measure-averaged f_x, sigma, sigma_x and l_x of path r under a slice.
struct AveragedDerivatives {
    Matrix J, S, SJ;
    Vector lx;
    // scratch
    Vector u, f;
    Matrix J1, S1, SJ1;
    Vector lx1;

    AveragedDerivatives(int n, int d, int m)
        : J(n, n), S(n, m), SJ(n, n * m), lx(n), u(d), f(n), J1(n, n), S1(n, m), SJ1(n, n * m), lx1(n) {}

    void compute(const TeamProblem& p, double t, VecIn x,
                 const std::vector<const DmMeasureSlice*>& ptrs, const Matrix* dirac, Eigen::Index r,
                 bool need_sigma) {
        if (dirac) {
            const auto uk = dirac->col(r);
            p.drift_jac_x(t, x, uk, J);
            p.running_cost_grad_x(t, x, uk, lx);
            if (need_sigma) {
                p.diffusion(t, x, uk, S);
                p.diffusion_jac_x(t, x, uk, SJ);
            }
            return;
        }
        J.setZero();
        lx.setZero();
        S.setZero();
        SJ.setZero();
        for_each_combo(ptrs, r, u, [&](double w) {
            p.drift_jac_x(t, x, u, J1);
            p.running_cost_grad_x(t, x, u, lx1);
            J += w * J1;
            lx += w * lx1;
            if (need_sigma) {
                p.diffusion(t, x, u, S1);
                p.diffusion_jac_x(t, x, u, SJ1);
                S += w * S1;
                SJ += w * SJ1;
            }
        });
    }
};

}  // namespace detail

/// Backward sweep along a forward ensemble. At each step the conditioning
/// is the full-information filtration (state plus path statistics).
inline AdjointEnsemble solve_adjoint(const TeamProblem& p, const std::vector<ActionSlice>& slices,
                                     const PathEnsemble& e, const AdjointOptions& opt = {}) {
    auto require = [](bool present, const char* name) {
        if (!present) throw ModelError(std::string("solve_adjoint: missing ") + name);
    };
    require(static_cast<bool>(p.drift_jac_x), "drift_jac_x");
    require(static_cast<bool>(p.diffusion_jac_x), "diffusion_jac_x");
    require(static_cast<bool>(p.running_cost_grad_x), "running_cost_grad_x");
    require(static_cast<bool>(p.terminal_cost_grad_x), "terminal_cost_grad_x");
    if (slices.size() != static_cast<std::size_t>(e.steps()))
        throw ModelError("solve_adjoint: one action slice per step required");
    const int n = p.n, m = p.m, K = e.steps();
    const auto M = static_cast<Eigen::Index>(e.paths);
    const double dt = e.grid.dt();
    const bool state_dep = !p.diffusion_state_independent;
    const FullInfoLayout L = make_full_layout(p);

    AdjointEnsemble a;
    a.grid = e.grid;
    a.paths = e.paths;
    a.n = n;
    a.m = m;
    a.psi.resize(static_cast<std::size_t>(K + 1));
    a.psi_next.resize(static_cast<std::size_t>(K));
    a.Q.resize(static_cast<std::size_t>(K));
    a.fits.resize(static_cast<std::size_t>(K));

    Matrix& terminal = a.psi[static_cast<std::size_t>(K)];
    terminal.resize(n, M);
    {
        Vector g(n);
        for (Eigen::Index r = 0; r < M; ++r) {
            p.terminal_cost_grad_x(e.x.back().col(r), g);
            terminal.col(r) = g;
        }
        detail::require_finite(terminal, "terminal costate", K);
    }

    detail::AveragedDerivatives avg(n, p.d, m);
    Matrix Yq(M, n * m), Yp(M, n);
    Vector hx(n);
    for (int k = K - 1; k >= 0; --k) {
        const auto ks = static_cast<std::size_t>(k);
        const double t = e.grid.node(k);
        const Matrix& next = a.psi[ks + 1];
        const Matrix& dW = e.dW[ks];
        const Regressor reg(expand_basis(full_information_variables(L, e, ks), opt.basis), opt.regression, k);
        if (reg.degenerate()) a.degenerate_steps.push_back(k);

        const FitResult mean = reg.fit(next.transpose());
        for (Eigen::Index r = 0; r < M; ++r)
            for (int b = 0; b < m; ++b)
                for (int i = 0; i < n; ++i)
                    Yq(r, i + b * n) = (next(i, r) - mean.fitted(r, i)) * dW(b, r) / dt;
        const FitResult qfit = reg.fit(Yq);
        a.Q[ks] = qfit.fitted.transpose();
        a.psi_next[ks] = mean.fitted.transpose();

        const ActionSlice& slice = slices[ks];
        const auto ptrs = pointers(slice);
        const bool dirac = slice.all_dirac();
        const Matrix ud = dirac ? slice.dirac_actions() : Matrix();
        for (Eigen::Index r = 0; r < M; ++r) {
            const auto x = e.x[ks].col(r);
            avg.compute(p, t, x, ptrs, dirac ? &ud : nullptr, r, state_dep);
            hx.noalias() = avg.J.transpose() * next.col(r);
            hx += avg.lx;
            if (state_dep) {
                const Eigen::Map<const Matrix> Qr(a.Q[ks].col(r).data(), n, m);
                for (int j = 0; j < n; ++j) hx[j] += (Qr.array() * avg.SJ.middleCols(j * m, m).array()).sum();
            }
            Yp.row(r) = (next.col(r) + hx * dt).transpose();
        }
        FitResult pfit = reg.fit(Yp);
        a.psi[ks] = pfit.fitted.transpose();
        a.fits[ks] = std::move(pfit.fit);
    }
    return a;
}

inline AdjointEnsemble solve_adjoint(const TeamProblem& p, const ControlSource& control, const PathEnsemble& e,
                                     const AdjointOptions& opt = {}) {
    return solve_adjoint(p, record_slices(control, e), e, opt);
}

struct QIdentityReport {
    std::vector<double> step_discrepancy;  // relative L2 per step, NaN when skipped
    std::vector<int> skipped_steps;        // degenerate state design
    double discrepancy = 0.0;              // pooled ||Q - psi_x sigma|| / ||Q||
    double q_norm = 0.0;
};

/// Compares Q with psi_x sigma, where psi_x is the derivative of a quadratic
/// regression of psi(t_k) on x(t_k).
inline QIdentityReport check_q_identity(const TeamProblem& p, const std::vector<ActionSlice>& slices,
                                        const PathEnsemble& e, const AdjointEnsemble& a,
                                        const RegressionOptions& ropt = {}) {
    QIdentityReport rep;
    const int n = p.n, m = p.m;
    const auto M = static_cast<Eigen::Index>(e.paths);
    double num = 0.0, den = 0.0;
    Matrix S(n, m), S1(n, m), psix(n, n);
    Vector u(p.d);
    for (int k = 0; k < e.steps(); ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const Regressor reg(expand_basis(e.x[ks], Basis::polynomial_deg2), ropt, k);
        if (reg.degenerate()) {
            rep.skipped_steps.push_back(k);
            rep.step_discrepancy.push_back(std::nan(""));
            continue;
        }
        const FitResult fit = reg.fit(a.psi[ks].transpose());
        const Matrix& C = fit.fit.coefficients;  // p x n
        const auto ptrs = pointers(slices[ks]);
        double sn = 0.0, sd = 0.0;
        for (Eigen::Index r = 0; r < M; ++r) {
            const auto x = e.x[ks].col(r);
            psix.noalias() = C.transpose() * basis_gradient(x, Basis::polynomial_deg2);
            S.setZero();
            for_each_combo(ptrs, r, u, [&](double w) {
                p.diffusion(e.grid.node(k), x, u, S1);
                S += w * S1;
            });
            const auto Qr = a.Q_at(ks, r);
            sn += (Qr - psix * S).squaredNorm();
            sd += Qr.squaredNorm();
        }
        rep.step_discrepancy.push_back(sd > 0.0 ? std::sqrt(sn / sd) : (sn > 0.0 ? INFINITY : 0.0));
        num += sn;
        den += sd;
    }
    rep.q_norm = std::sqrt(den / std::max<double>(1.0, static_cast<double>(M)));
    rep.discrepancy = den > 0.0 ? std::sqrt(num / den) : (num > 0.0 ? INFINITY : 0.0);
    return rep;
}

/// CSV: path, step, t, psi..., Q... (Q column-major, empty at step K).
inline void write_adjoint_csv(std::ostream& os, const AdjointEnsemble& a) {
    os << "path,step,t";
    for (int i = 0; i < a.n; ++i) os << ",psi" << i;
    for (int b = 0; b < a.m; ++b)
        for (int i = 0; i < a.n; ++i) os << ",Q" << i << '_' << b;
    os << '\n';
    os.precision(17);
    const int K = a.grid.steps;
    for (std::size_t r = 0; r < a.paths; ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        for (int k = 0; k <= K; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            os << r << ',' << k << ',' << a.grid.node(k);
            for (int i = 0; i < a.n; ++i) os << ',' << a.psi[ks](i, ri);
            for (int j = 0; j < a.n * a.m; ++j) {
                os << ',';
                if (k < K) os << a.Q[ks](j, ri);
            }
            os << '\n';
        }
    }
}

}  // namespace teamsmp
