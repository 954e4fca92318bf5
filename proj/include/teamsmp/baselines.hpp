#pragma once

// Independent oracles: the centralized linear-quadratic Riccati solution and
// exhaustive enumeration of small discrete-time, binary-noise team problems.

#include "teamsmp/model.hpp"
#include "teamsmp/information.hpp"
#include "teamsmp/rng.hpp"
#include "teamsmp/strategy.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace teamsmp {

/// Value function V(t, x) = x'P x + p'x + c of the centralized LQ problem.
struct RiccatiSolution {
    TimeGrid grid;
    std::vector<Matrix> P;       // K+1 nodes
    std::vector<Vector> linear;  // p(t)
    std::vector<double> offset;  // c(t)
    std::vector<Matrix> gain;    // K(t) = R^{-1} B' P(t); u = -K x + feedforward
    std::vector<Vector> feedforward;
    double value = 0.0;          // E V(0, x0) for the family's initial state
    double halving_change = 0.0; // relative change of P(0) when the RK step is halved

    double value_at(const Vector& mean, const Matrix& cov) const {
        return mean.dot(P.front() * mean) + linear.front().dot(mean) + offset.front() + (P.front() * cov).trace();
    }
};

namespace detail {

struct RiccatiState {
    Matrix P;
    Vector p;
    double c = 0.0;
};

inline Matrix diffusion_of(const ModelFamily& f, int n, int m) {
    if (f.diffusion_matrix.size() > 0) return f.diffusion_matrix;
    return block_noise(f.subsystems, f.noise_scale, n, m);
}

// Backward RK4 from t = T to t = 0 with `sub` substeps per grid interval.
inline std::vector<RiccatiState> integrate_riccati(const Matrix& A, const Matrix& B, const Matrix& Rinv,
                                                   const Matrix& Q, const Vector& q, const Matrix& G, const Vector& g,
                                                   const Matrix& SS, const TimeGrid& grid, int sub) {
    const Matrix BRB = B * Rinv * B.transpose();
    auto rhs = [&](const RiccatiState& s) {
        // returns -d/dt, i.e. the derivative in reversed time
        RiccatiState d;
        d.P = A.transpose() * s.P + s.P * A - s.P * BRB * s.P + Q;
        d.P = 0.5 * (d.P + d.P.transpose());
        d.p = q + A.transpose() * s.p - s.P * BRB * s.p;
        d.c = -0.25 * s.p.dot(BRB * s.p) + (SS * s.P).trace();
        return d;
    };
    auto axpy = [](const RiccatiState& s, double h, const RiccatiState& d) {
        RiccatiState o{s.P + h * d.P, s.p + h * d.p, s.c + h * d.c};
        o.P = 0.5 * (o.P + o.P.transpose());
        return o;
    };
    std::vector<RiccatiState> out(static_cast<std::size_t>(grid.steps + 1));
    RiccatiState s{G, g, 0.0};
    out.back() = s;
    const double h = grid.dt() / sub;
    for (int k = grid.steps - 1; k >= 0; --k) {
        for (int j = 0; j < sub; ++j) {
            const auto k1 = rhs(s);
            const auto k2 = rhs(axpy(s, 0.5 * h, k1));
            const auto k3 = rhs(axpy(s, 0.5 * h, k2));
            const auto k4 = rhs(axpy(s, h, k3));
            s.P += h / 6.0 * (k1.P + 2.0 * k2.P + 2.0 * k3.P + k4.P);
            s.P = 0.5 * (s.P + s.P.transpose());
            s.p += h / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
            s.c += h / 6.0 * (k1.c + 2.0 * k2.c + 2.0 * k3.c + k4.c);
        }
        out[static_cast<std::size_t>(k)] = s;
    }
    return out;
}

}  // namespace detail

/// Integrates -dP/dt = A'P + PA - P B R^{-1} B'P + Q, P(T) = G, with RK4 on
/// the grid (plus the linear and constant parts of the value function).
inline RiccatiSolution solve_riccati(const ModelFamily& f, const TimeGrid& grid, int substeps = 1) {
    if (f.tag != FamilyTag::linear_quadratic && f.tag != FamilyTag::cascade_ss)
        throw ModelError("solve_riccati needs a linear_quadratic or cascade_ss family");
    int n = 0, d = 0, m = 0;
    for (const auto& s : f.subsystems) {
        n += s.state_dim;
        d += s.action_dim;
        m += s.noise_dim;
    }
    detail::require_shape(f.A, n, n, "A");
    detail::require_shape(f.B, n, d, "B");
    detail::require_shape(f.Q_cost, n, n, "Q_cost");
    detail::require_shape(f.R_cost, d, d, "R_cost");
    detail::require_shape(f.G_terminal, n, n, "G_terminal");
    const Matrix R = 0.5 * (f.R_cost + f.R_cost.transpose());
    Eigen::LLT<Matrix> llt(R);
    if (R.size() == 0 || llt.info() != Eigen::Success)
        throw ModelError("solve_riccati: R_cost must be symmetric positive definite");
    const Matrix Rinv = llt.solve(Matrix::Identity(d, d));
    const Matrix Q = 0.5 * (f.Q_cost + f.Q_cost.transpose());
    const Matrix G = 0.5 * (f.G_terminal + f.G_terminal.transpose());
    const Vector q = f.q_linear.size() ? f.q_linear : Vector::Zero(n);
    const Vector g = f.g_linear.size() ? f.g_linear : Vector::Zero(n);
    const Matrix S = detail::diffusion_of(f, n, m);
    const Matrix SS = S * S.transpose();

    const auto states = detail::integrate_riccati(f.A, f.B, Rinv, Q, q, G, g, SS, grid, substeps);
    const auto fine = detail::integrate_riccati(f.A, f.B, Rinv, Q, q, G, g, SS, grid, 2 * substeps);
    RiccatiSolution sol;
    sol.grid = grid;
    for (const auto& s : states) {
        sol.P.push_back(s.P);
        sol.linear.push_back(s.p);
        sol.offset.push_back(s.c);
        sol.gain.push_back(Rinv * f.B.transpose() * s.P);
        sol.feedforward.push_back(-0.5 * Rinv * f.B.transpose() * s.p);
    }
    const double scale = std::max(fine.front().P.norm(), 1e-300);
    sol.halving_change = fine.front().P.norm() == 0.0 ? 0.0 : (fine.front().P - states.front().P).norm() / scale;
    const Vector mean = f.initial.mean.size() ? f.initial.mean : Vector::Zero(n);
    Matrix cov = Matrix::Zero(n, n);
    if (f.initial.stddev.size() == n) cov = f.initial.stddev.array().square().matrix().asDiagonal();
    sol.value = sol.value_at(mean, cov);
    return sol;
}

/// Regular profile u = -K(t_k) x + feedforward(t_k) for DMs that observe the
/// whole state through a polynomial basis.
inline StrategyProfile riccati_profile(const TeamProblem& p, const RiccatiSolution& sol) {
    StrategyProfile prof = initial_profile(p, sol.grid.steps, StrategyMode::regular);
    for (std::size_t i = 0; i < p.dm_count(); ++i) {
        const auto L = make_layout(p, i);
        if (L.kind != InfoKind::fis || L.observation.size() > 0 || static_cast<int>(L.coords.size()) != p.n ||
            p.info[i].basis == Basis::custom)
            throw ModelError("riccati_profile: DM " + std::to_string(i) + " must observe the full state directly");
        const int di = p.subsystems[i].action_dim, off = p.action_offset[i];
        for (int k = 0; k < sol.grid.steps; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            Matrix& c = prof.dm[i].regular.coef[ks];
            c.setZero();
            c.row(0) = sol.feedforward[ks].segment(off, di).transpose();
            for (int j = 0; j < p.n; ++j)
                c.row(1 + j) = -sol.gain[ks].block(off, L.coords[static_cast<std::size_t>(j)], di, 1).transpose();
        }
    }
    return prof;
}

/// Discrete-time team problem on a binary scenario tree. Each period the state
/// moves by f dt + sigma xi with xi_j = +-sqrt(dt) independently, probability 1/2.
/// DM i's information at period t is the sign history of the noise coordinates
/// of its NIS sources over the earlier periods.
struct DiscreteTreeProblem {
    TeamProblem problem;
    int periods = 2;
    double dt = 0.5;
    Vector x0;
    std::vector<Matrix> actions;  // per DM: action_dim x atoms

    void validate() const {
        if (periods < 1 || periods > 3) throw ModelError("tree: periods must be 1..3");
        if (!(dt > 0.0)) throw ModelError("tree: dt must be positive");
        if (x0.size() != problem.n) throw ModelError("tree: x0 has wrong dimension");
        if (actions.size() != problem.dm_count()) throw ModelError("tree: one action set per DM required");
        for (std::size_t i = 0; i < actions.size(); ++i) {
            if (actions[i].rows() != problem.subsystems[i].action_dim)
                throw ModelError("tree: action atoms of DM " + std::to_string(i) + " have wrong dimension");
            if (actions[i].cols() < 1 || actions[i].cols() > 3)
                throw ModelError("tree: DM " + std::to_string(i) + " needs 1..3 action atoms");
            if (problem.info[i].kind != InfoKind::nis)
                throw ModelError("tree: only noise-history (NIS) information is supported");
        }
        if (problem.m * periods > 20) throw ModelError("tree: too many scenarios");
    }
};

/// A decision slot: what DM `dm` does at `period` in information cell `cell`.
struct TreeSlot {
    int dm = 0;
    int period = 0;
    int cell = 0;
};

/// Enumerates strategies as mixed-radix integers over the slots.
class TreeEnumerator {
public:
    explicit TreeEnumerator(const DiscreteTreeProblem& t) : tree_(t) {
        t.validate();
        const auto& p = t.problem;
        for (std::size_t i = 0; i < p.dm_count(); ++i) {
            observed_.push_back(p.selected_noise_coordinates(p.info[i]));
            for (int per = 0; per < t.periods; ++per) {
                const int cells = 1 << (static_cast<int>(observed_.back().size()) * per);
                for (int c = 0; c < cells; ++c) {
                    slot_index_[key(static_cast<int>(i), per, c)] = static_cast<int>(slots_.size());
                    slots_.push_back({static_cast<int>(i), per, c});
                }
            }
        }
        count_ = 1.0;
        for (const auto& s : slots_) count_ *= static_cast<double>(t.actions[static_cast<std::size_t>(s.dm)].cols());
        leaves_ = 1 << (p.m * t.periods);
    }

    double profile_count() const { return count_; }
    const std::vector<TreeSlot>& slots() const { return slots_; }
    int leaves() const { return leaves_; }

    // Action index per slot for profile number `id`.
    std::vector<int> decode(std::uint64_t id) const {
        std::vector<int> a(slots_.size());
        for (std::size_t s = 0; s < slots_.size(); ++s) {
            const auto base = static_cast<std::uint64_t>(tree_.actions[static_cast<std::size_t>(slots_[s].dm)].cols());
            a[s] = static_cast<int>(id % base);
            id /= base;
        }
        return a;
    }

    std::uint64_t encode(const std::vector<int>& a) const {
        std::uint64_t id = 0;
        for (std::size_t s = slots_.size(); s-- > 0;) {
            const auto base = static_cast<std::uint64_t>(tree_.actions[static_cast<std::size_t>(slots_[s].dm)].cols());
            id = id * base + static_cast<std::uint64_t>(a[s]);
        }
        return id;
    }

    // Cell of DM i at period per on the scenario with noise bits `leaf`
    // (bit j + m * q is the sign of coordinate j at period q).
    int cell(int dm, int per, int leaf) const {
        const auto& obs = observed_[static_cast<std::size_t>(dm)];
        int c = 0, b = 0;
        for (int q = 0; q < per; ++q)
            for (int j : obs) {
                if ((leaf >> (j + tree_.problem.m * q)) & 1) c |= 1 << b;
                ++b;
            }
        return c;
    }

    int slot(int dm, int per, int cell) const { return slot_index_.at(key(dm, per, cell)); }

    // Total cost of every scenario (leaf) under a profile.
    std::vector<double> leaf_costs(const std::vector<int>& profile) const {
        const auto& p = tree_.problem;
        const double sq = std::sqrt(tree_.dt);
        std::vector<double> out(static_cast<std::size_t>(leaves_));
        Vector x(p.n), u(p.d), f(p.n), xi(p.m);
        Matrix s(p.n, p.m);
        for (int leaf = 0; leaf < leaves_; ++leaf) {
            x = tree_.x0;
            double cost = 0.0;
            for (int per = 0; per < tree_.periods; ++per) {
                const double t = per * tree_.dt;
                for (std::size_t i = 0; i < p.dm_count(); ++i) {
                    const int sl = slot(static_cast<int>(i), per, cell(static_cast<int>(i), per, leaf));
                    u.segment(p.action_offset[i], p.subsystems[i].action_dim) =
                        tree_.actions[i].col(profile[static_cast<std::size_t>(sl)]);
                }
                for (int j = 0; j < p.m; ++j) xi[j] = ((leaf >> (j + p.m * per)) & 1) ? sq : -sq;
                cost += p.running_cost(t, x, u) * tree_.dt;
                p.drift(t, x, u, f);
                p.diffusion(t, x, u, s);
                x += f * tree_.dt + s * xi;
            }
            cost += p.terminal_cost(x);
            out[static_cast<std::size_t>(leaf)] = cost;
        }
        return out;
    }

    double expected_cost(const std::vector<int>& profile) const {
        const auto c = leaf_costs(profile);
        double s = 0.0;
        for (double v : c) s += v;
        return s / leaves_;
    }

    // Scenarios in which DM dm sits in `cell` at period per.
    std::vector<int> leaves_in(int dm, int per, int cell) const {
        std::vector<int> out;
        for (int leaf = 0; leaf < leaves_; ++leaf)
            if (this->cell(dm, per, leaf) == cell) out.push_back(leaf);
        return out;
    }

private:
    static std::int64_t key(int dm, int per, int cell) {
        return (static_cast<std::int64_t>(dm) << 40) | (static_cast<std::int64_t>(per) << 32) | cell;
    }

    const DiscreteTreeProblem& tree_;
    std::vector<std::vector<int>> observed_;
    std::vector<TreeSlot> slots_;
    std::map<std::int64_t, int> slot_index_;
    double count_ = 0.0;
    int leaves_ = 1;
};

struct TeamOptimum {
    std::vector<double> costs;  // per profile id
    double min_cost = 0.0;
    std::vector<std::uint64_t> optimal;  // profile ids within 1e-12 (1 + |min|) of the minimum
};

inline TeamOptimum enumerate_team_optimum(const DiscreteTreeProblem& tree, double budget = 1e6) {
    const TreeEnumerator en(tree);
    if (en.profile_count() > budget)
        throw ModelError("tree: " + std::to_string(static_cast<long long>(en.profile_count())) +
                         " strategy profiles exceed the enumeration budget of " +
                         std::to_string(static_cast<long long>(budget)));
    TeamOptimum out;
    const auto N = static_cast<std::uint64_t>(en.profile_count());
    out.costs.resize(static_cast<std::size_t>(N));
    out.min_cost = INFINITY;
    for (std::uint64_t id = 0; id < N; ++id) {
        out.costs[static_cast<std::size_t>(id)] = en.expected_cost(en.decode(id));
        out.min_cost = std::min(out.min_cost, out.costs[static_cast<std::size_t>(id)]);
    }
    const double tol = 1e-12 * (1.0 + std::abs(out.min_cost));
    for (std::uint64_t id = 0; id < N; ++id)
        if (out.costs[static_cast<std::size_t>(id)] <= out.min_cost + tol) out.optimal.push_back(id);
    return out;
}

struct SmpViolation {
    TreeSlot slot;
    int current_action = 0;
    int better_action = 0;
    double decrease = 0.0;  // drop of the conditional expected cost
};

struct SmpVerification {
    bool passed = true;
    std::vector<SmpViolation> violations;
};

/// Checks that no DM can lower the conditional expected cost in any of its
/// cells by switching that cell's action alone.
inline SmpVerification verify_discrete_smp(const DiscreteTreeProblem& tree, const std::vector<int>& profile) {
    const TreeEnumerator en(tree);
    if (profile.size() != en.slots().size()) throw ModelError("tree: profile has wrong number of slots");
    SmpVerification out;
    const auto base = en.leaf_costs(profile);
    for (std::size_t s = 0; s < en.slots().size(); ++s) {
        const auto& sl = en.slots()[s];
        const auto leaves = en.leaves_in(sl.dm, sl.period, sl.cell);
        if (leaves.empty()) continue;
        double cur = 0.0;
        for (int l : leaves) cur += base[static_cast<std::size_t>(l)];
        cur /= static_cast<double>(leaves.size());
        const auto A = tree.actions[static_cast<std::size_t>(sl.dm)].cols();
        for (int a = 0; a < A; ++a) {
            if (a == profile[s]) continue;
            auto alt = profile;
            alt[s] = a;
            const auto c = en.leaf_costs(alt);
            double v = 0.0;
            for (int l : leaves) v += c[static_cast<std::size_t>(l)];
            v /= static_cast<double>(leaves.size());
            if (v < cur - 1e-12 * (1.0 + std::abs(cur)))
                out.violations.push_back({sl, profile[s], a, cur - v});
        }
    }
    out.passed = out.violations.empty();
    return out;
}

/// Monte Carlo estimate of a tree profile's cost from sampled sign paths.
inline std::pair<double, double> tree_cost_mc(const DiscreteTreeProblem& tree, const std::vector<int>& profile,
                                              std::size_t samples, std::uint64_t seed) {
    const TreeEnumerator en(tree);
    const auto costs = en.leaf_costs(profile);
    const rng::NormalStream stream(seed);
    const int bits = tree.problem.m * tree.periods;
    double s = 0.0, s2 = 0.0;
    for (std::size_t r = 0; r < samples; ++r) {
        int leaf = 0;
        for (int b = 0; b < bits; ++b)
            if (stream.uniform(r, static_cast<std::uint32_t>(b), rng::kTreeSample) < 0.5) leaf |= 1 << b;
        const double c = costs[static_cast<std::size_t>(leaf)];
        s += c;
        s2 += c * c;
    }
    const double M = static_cast<double>(samples);
    const double mean = s / M;
    const double var = samples > 1 ? std::max(0.0, (s2 - M * mean * mean) / (M - 1.0)) : 0.0;
    return {mean, std::sqrt(var / M)};
}

/// Profiles that pass verify_discrete_smp (person-by-person stationary).
inline std::vector<std::uint64_t> pbp_stationary_profiles(const DiscreteTreeProblem& tree, double budget = 1e5) {
    const TreeEnumerator en(tree);
    if (en.profile_count() > budget)
        throw ModelError("tree: too many profiles to list stationary points");
    std::vector<std::uint64_t> out;
    const auto N = static_cast<std::uint64_t>(en.profile_count());
    for (std::uint64_t id = 0; id < N; ++id)
        if (verify_discrete_smp(tree, en.decode(id)).passed) out.push_back(id);
    return out;
}

}  // namespace teamsmp
