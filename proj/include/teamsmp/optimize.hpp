#pragma once

// Person-by-person improvement of strategy profiles, cost evaluation and the
// numerical first-order and convexity checks built on the adjoint ensemble.

#include "teamsmp/bsde.hpp"
#include "teamsmp/hamiltonian.hpp"
#include "teamsmp/sde.hpp"
#include "teamsmp/strategy.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace teamsmp {

struct CostEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

inline CostEstimate summarize_cost(const Vector& path_cost) {
    CostEstimate c;
    const auto M = static_cast<double>(path_cost.size());
    c.mean = path_cost.mean();
    if (path_cost.size() > 1)
        c.standard_error = std::sqrt((path_cost.array() - c.mean).square().sum() / (M - 1.0) / M);
    if (!std::isfinite(c.mean)) throw DivergenceError("non-finite cost estimate", 0, 0);
    return c;
}

/// Monte Carlo estimate of J with its standard error.
inline CostEstimate evaluate_cost(const TeamProblem& p, const ControlSource& control, const TimeGrid& grid,
                                  std::size_t M, std::uint64_t seed, const SimulationOptions& sim = {}) {
    return summarize_cost(simulate_forward(p, control, grid, M, seed, sim).path_cost);
}

inline CostEstimate evaluate_cost(const TeamProblem& p, const StrategyProfile& s, const TimeGrid& grid,
                                  std::size_t M, std::uint64_t seed, const SimulationOptions& sim = {}) {
    const StrategyControl control(p, s);
    return evaluate_cost(p, control, grid, M, seed, sim);
}

struct PbpConfig {
    int max_iters = 50;
    double gap_tol = 1e-2;  // relative to 1 + |J|
    std::size_t paths = 10000;
    int steps = 50;
    std::uint64_t seed = 1;
    double damping = 0.5;
    int max_halvings = 6;
    HamiltonianOptions hamiltonian;
    AdjointOptions adjoint;
    SimulationOptions simulation;
};

struct IterationRecord {
    int iteration = 0;
    int dm = -1;  // -1: stationarity check without an update
    double cost = 0.0;
    double standard_error = 0.0;
    std::vector<double> gaps;  // per DM, at the start of the sweep
    double team_gap = 0.0;
    double noise_floor = 0.0;
    double damping = 0.0;
    bool accepted = true;
    double wall_seconds = 0.0;
};

struct PbpResult {
    StrategyProfile profile;
    std::vector<IterationRecord> history;
    GapReport final_gaps;
    CostEstimate cost;
    bool converged = false;
    int iterations = 0;
    std::string status;
};

/// Raised when the loop hits a non-finite state; carries the last accepted iterate.
class PbpDivergence : public DivergenceError {
public:
    PbpDivergence(const DivergenceError& cause, StrategyProfile last, int iteration)
        : DivergenceError(cause.what(), cause.path(), cause.step()), last_(std::move(last)), iteration_(iteration) {}

    const StrategyProfile& last_profile() const { return last_; }
    int iteration() const { return iteration_; }

private:
    StrategyProfile last_;
    int iteration_;
};

/// Forward ensemble, recorded measures and adjoint of one profile.
struct Iterate {
    PathEnsemble ensemble;
    std::vector<ActionSlice> slices;
    AdjointEnsemble adjoint;
    CostEstimate cost;
};

inline Iterate make_iterate(const TeamProblem& p, const StrategyProfile& s, const TimeGrid& grid, const PbpConfig& cfg) {
    Iterate it;
    const StrategyControl control(p, s);
    it.ensemble = simulate_forward(p, control, grid, cfg.paths, cfg.seed, cfg.simulation);
    it.slices = record_slices(control, it.ensemble);
    it.cost = summarize_cost(it.ensemble.path_cost);
    it.adjoint = solve_adjoint(p, it.slices, it.ensemble, cfg.adjoint);
    return it;
}

/// The strategy of DM i fitted to the conditional minimizers of an analysis.
inline DmStrategy fitted_strategy(const TeamProblem& p, const DmStrategy& old, const DmAnalysis& an,
                                  const PathEnsemble& e, std::size_t dm, double eta,
                                  const RegressionOptions& ropt) {
    DmStrategy s = old;
    if (old.mode == StrategyMode::relaxed) {
        for (std::size_t k = 0; k < an.minima.size(); ++k) {
            s.relaxed.edges[k] = an.edges[k];
            s.relaxed.weights[k] = an.minima[k].weights;
        }
        return s;
    }
    for (std::size_t k = 0; k < an.minima.size(); ++k) {
        const Matrix F = expand_basis(e.info[dm][k], old.basis, p.info[dm].custom_basis);
        const FitResult f = fit_predict(F, an.minima[k].actions.transpose(), ropt, static_cast<int>(k));
        s.regular.coef[k] = (1.0 - eta) * old.regular.coef[k] + eta * f.fit.coefficients;
    }
    return s;
}

/// Round-robin person-by-person improvement. Each sweep first measures every
/// DM's stationarity gap at the current iterate and stops once the team gap
/// is within gap_tol (1 + |J|); otherwise each DM in turn moves towards its
/// conditional Hamiltonian minimizer and the iterate is refreshed.
inline PbpResult person_by_person_solve(const TeamProblem& p, const StrategyProfile& initial, const PbpConfig& cfg) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };
    const TimeGrid grid(cfg.steps, p.horizon);
    if (static_cast<int>(initial.steps) != cfg.steps)
        throw ModelError("initial strategy has " + std::to_string(initial.steps) + " steps, grid has " +
                         std::to_string(cfg.steps));

    PbpResult res;
    res.profile = initial;
    double eta = cfg.damping;
    int iter = 0;
    try {
        Iterate cur = make_iterate(p, res.profile, grid, cfg);
        for (iter = 1; iter <= cfg.max_iters + 1; ++iter) {
            std::vector<DmAnalysis> an;
            GapReport gaps;
            double floor = 0.0;
            for (std::size_t i = 0; i < p.dm_count(); ++i) {
                an.push_back(analyze_dm(p, res.profile, cur.ensemble, cur.adjoint, cur.slices, i, cfg.hamiltonian));
                gaps.dm.push_back(an.back().gap);
                gaps.team_gap += an.back().gap.gap;
                floor += an.back().gap.noise_floor;
            }
            std::vector<double> gv;
            for (const auto& g : gaps.dm) gv.push_back(g.gap);
            res.final_gaps = gaps;
            res.cost = cur.cost;
            res.iterations = iter;
            const double tol = cfg.gap_tol * (1.0 + std::abs(cur.cost.mean));
            IterationRecord check{iter, -1, cur.cost.mean, cur.cost.standard_error, gv, gaps.team_gap, floor, eta,
                                  true, elapsed()};
            if (gaps.team_gap <= tol) {
                res.history.push_back(check);
                res.converged = true;
                res.status = "converged: team gap " + std::to_string(gaps.team_gap) + " <= " + std::to_string(tol);
                return res;
            }
            if (iter > cfg.max_iters) {
                res.history.push_back(check);
                res.iterations = cfg.max_iters;
                res.status = "iteration budget exhausted: team gap " + std::to_string(gaps.team_gap) + " > " +
                             std::to_string(tol);
                return res;
            }
            for (std::size_t i = 0; i < p.dm_count(); ++i) {
                if (i > 0)
                    an[i] = analyze_dm(p, res.profile, cur.ensemble, cur.adjoint, cur.slices, i, cfg.hamiltonian);
                const bool relaxed = res.profile.dm[i].mode == StrategyMode::relaxed;
                bool accepted = false;
                double used = relaxed ? 1.0 : eta;
                for (int h = 0; h <= cfg.max_halvings; ++h) {
                    StrategyProfile trial = res.profile;
                    trial.dm[i] = fitted_strategy(p, res.profile.dm[i], an[i], cur.ensemble, i, used,
                                                  cfg.hamiltonian.regression);
                    Iterate next = make_iterate(p, trial, grid, cfg);
                    if (next.cost.mean <= cur.cost.mean + 3.0 * next.cost.standard_error) {
                        res.profile = std::move(trial);
                        cur = std::move(next);
                        accepted = true;
                        break;
                    }
                    if (relaxed) break;
                    used *= 0.5;
                }
                if (!relaxed && !accepted) used = eta;
                if (!relaxed && accepted) eta = used;
                res.history.push_back(IterationRecord{iter, static_cast<int>(i), cur.cost.mean,
                                                      cur.cost.standard_error, gv, gaps.team_gap, floor, used,
                                                      accepted, elapsed()});
            }
        }
    } catch (const DivergenceError& e) {
        throw PbpDivergence(e, res.profile, iter);
    }
    return res;
}

/// Sampled Hessian eigenvalues of H in x (C4) and u (C6) and of phi (C5).
struct SufficiencyReport {
    int probes = 0;
    double min_eig_hamiltonian_x = INFINITY;
    double min_eig_hamiltonian_u = INFINITY;
    double min_eig_terminal = INFINITY;
    double threshold = -1e-6;
    std::vector<std::string> flags;

    bool passed() const { return flags.empty(); }
};

namespace detail {

template <typename G>
Matrix fd_hessian(G&& g, const Vector& z) {
    const auto n = z.size();
    Matrix H(n, n);
    Vector w = z;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double hj = 1e-3 * std::max(1.0, std::abs(z[j]));
        for (Eigen::Index l = j; l < n; ++l) {
            const double hl = 1e-3 * std::max(1.0, std::abs(z[l]));
            auto eval = [&](double sj, double sl) {
                w = z;
                w[j] += sj * hj;
                w[l] += sl * hl;
                return g(w);
            };
            H(j, l) = H(l, j) = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * hj * hl);
        }
    }
    return H;
}

inline double min_eigenvalue(const Matrix& H) {
    return Eigen::SelfAdjointEigenSolver<Matrix>(H, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace detail

/// Probes convexity of x -> H, u -> H and x -> phi by central finite
/// differences at random (t, x, u, psi, Q). Advisory: sampling cannot prove
/// convexity, only expose its failure.
inline SufficiencyReport check_sufficiency(const TeamProblem& p, int probe_count, std::uint64_t seed,
                                           double state_scale = 3.0) {
    SufficiencyReport rep;
    rep.probes = probe_count;
    const rng::NormalStream stream(seed);
    const int n = p.n, d = p.d, m = p.m;
    std::vector<double> z(static_cast<std::size_t>(2 * n + n * m));
    for (int k = 0; k < probe_count; ++k) {
        const auto path = static_cast<std::uint64_t>(k);
        const double t = p.horizon * stream.uniform(path, 10, rng::kProbe);
        stream.fill(path, 11, rng::kProbe, z, static_cast<int>(z.size()));
        Vector x(n), psi(n), u(d);
        Matrix Q(n, m);
        for (int j = 0; j < n; ++j) {
            x[j] = state_scale * z[static_cast<std::size_t>(j)];
            psi[j] = z[static_cast<std::size_t>(n + j)];
        }
        for (int j = 0; j < n * m; ++j) Q(j % n, j / n) = z[static_cast<std::size_t>(2 * n + j)];
        for (std::size_t i = 0, off = 0; i < p.subsystems.size(); ++i)
            for (const auto& iv : p.subsystems[i].action_box) {
                const double w = stream.uniform(path, 12 + static_cast<std::uint32_t>(off), rng::kProbe);
                u[static_cast<Eigen::Index>(off++)] = iv.lo + (iv.hi - iv.lo) * w;
            }
        const Matrix Hx = detail::fd_hessian([&](const Vector& y) { return p.hamiltonian(t, y, psi, Q, u); }, x);
        const Matrix Hu = detail::fd_hessian([&](const Vector& v) { return p.hamiltonian(t, x, psi, Q, v); }, u);
        const Matrix Hp = detail::fd_hessian([&](const Vector& y) { return p.terminal_cost(y); }, x);
        rep.min_eig_hamiltonian_x = std::min(rep.min_eig_hamiltonian_x, detail::min_eigenvalue(Hx));
        rep.min_eig_hamiltonian_u = std::min(rep.min_eig_hamiltonian_u, detail::min_eigenvalue(Hu));
        rep.min_eig_terminal = std::min(rep.min_eig_terminal, detail::min_eigenvalue(Hp));
    }
    auto flag = [&](double v, const char* what) {
        if (v < rep.threshold) rep.flags.push_back(std::string(what) + " has negative curvature " + std::to_string(v));
    };
    flag(rep.min_eig_hamiltonian_x, "H in x");
    flag(rep.min_eig_terminal, "phi");
    flag(rep.min_eig_hamiltonian_u, "H in u");
    return rep;
}

struct GateauxReport {
    double adjoint_derivative = 0.0;  // sum_i E sum_k dt [H(u^{-i,o}, u^i) - H(u^o)]
    double base_cost = 0.0;
    std::vector<double> epsilons;
    std::vector<double> finite_difference;  // (J(u^eps) - J(u^o)) / eps
    std::vector<double> relative_discrepancy;
};

/// Compares the directional derivative of J along the convex perturbation
/// u^eps = (1 - eps) u^o + eps u (as measures, frozen along the base paths)
/// with the adjoint-based Hamiltonian expression.
inline GateauxReport gateaux_identity_check(const TeamProblem& p, const StrategyProfile& base,
                                            const StrategyProfile& direction, const std::vector<double>& eps,
                                            const TimeGrid& grid, std::size_t M, std::uint64_t seed,
                                            const AdjointOptions& aopt = {}, const SimulationOptions& sim = {}) {
    GateauxReport rep;
    rep.epsilons = eps;
    const StrategyControl bc(p, base), dc(p, direction);
    const PathEnsemble e = simulate_forward(p, bc, grid, M, seed, sim);
    const auto bs = record_slices(bc, e);
    const auto ds = record_slices(dc, e);
    const AdjointEnsemble a = solve_adjoint(p, bs, e, aopt);
    rep.base_cost = e.path_cost.mean();

    const auto Mi = static_cast<Eigen::Index>(M);
    const double dt = grid.dt();
    Vector u(p.d);
    double total = 0.0;
    for (int k = 0; k < e.steps(); ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const double t = grid.node(k);
        const auto base_ptrs = pointers(bs[ks]);
        for (Eigen::Index r = 0; r < Mi; ++r) {
            const auto x = e.x[ks].col(r);
            const auto psi = a.psi_next[ks].col(r);
            const auto Q = a.Q_at(ks, r);
            double h0 = 0.0;
            for_each_combo(base_ptrs, r, u, [&](double w) { h0 += w * p.hamiltonian(t, x, psi, Q, u); });
            for (std::size_t i = 0; i < p.dm_count(); ++i) {
                auto ptrs = base_ptrs;
                ptrs[i] = &ds[ks].dm[i];
                double h = 0.0;
                for_each_combo(ptrs, r, u, [&](double w) { h += w * p.hamiltonian(t, x, psi, Q, u); });
                total += (h - h0) * dt;
            }
        }
    }
    rep.adjoint_derivative = total / static_cast<double>(M);
    for (double ep : eps) {
        const FrozenMixture mix(bs, ds, ep, Mi);
        const double J = simulate_forward(p, mix, grid, M, seed, sim).path_cost.mean();
        const double fd = (J - rep.base_cost) / ep;
        rep.finite_difference.push_back(fd);
        const double scale = std::max(std::abs(rep.adjoint_derivative), 1e-300);
        rep.relative_discrepancy.push_back(std::abs(fd - rep.adjoint_derivative) / scale);
    }
    return rep;
}

struct VariationalReport {
    std::vector<double> epsilons;
    std::vector<double> residual;  // mean over paths of |(x^eps(T) - x^o(T)) / eps - Z(T)|
};

/// First-order check of the variational process against perturbed forward
/// runs sharing the base Brownian increments.
inline VariationalReport variational_check(const TeamProblem& p, const StrategyProfile& base,
                                           const StrategyProfile& direction, const std::vector<double>& eps,
                                           const TimeGrid& grid, std::size_t M, std::uint64_t seed,
                                           const SimulationOptions& sim = {}) {
    VariationalReport rep;
    rep.epsilons = eps;
    const StrategyControl bc(p, base), dc(p, direction);
    const PathEnsemble e = simulate_forward(p, bc, grid, M, seed, sim);
    const auto bs = record_slices(bc, e);
    const auto ds = record_slices(dc, e);
    const auto Mi = static_cast<Eigen::Index>(M);
    const FrozenMixture frozen_base(bs, ds, 0.0, Mi), frozen_dir(ds, ds, 0.0, Mi);
    const VariationalEnsemble z = simulate_variational(p, frozen_base, frozen_dir, e);
    for (double ep : eps) {
        const FrozenMixture mix(bs, ds, ep, Mi);
        const PathEnsemble pe = simulate_forward(p, mix, grid, M, seed, sim);
        const Matrix diff = (pe.x.back() - e.x.back()) / ep - z.Z.back();
        rep.residual.push_back(diff.colwise().norm().mean());
    }
    return rep;
}

}  // namespace teamsmp
