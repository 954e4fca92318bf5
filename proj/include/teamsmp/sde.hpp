#pragma once

// Euler-Maruyama ensembles of the controlled system and of the first-order
// variational process along them.

#include "teamsmp/information.hpp"
#include "teamsmp/measure.hpp"
#include "teamsmp/rng.hpp"
#include "teamsmp/strategy.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

namespace teamsmp {

/// M sampled trajectories on a uniform grid. Per-step matrices hold one
/// column per path.
struct PathEnsemble {
    TimeGrid grid;
    std::size_t paths = 0;
    std::uint64_t seed = 0;
    std::vector<Matrix> x;                  // K+1 entries, n x M
    std::vector<Matrix> dW;                 // K entries, m x M
    std::vector<Matrix> u;                  // K entries, d x M (realized)
    std::vector<std::vector<Matrix>> info;  // [dm][k], vars x M, k = 0..K
    Vector path_cost;                       // sum_k l dt + phi(x_K) per path

    int steps() const { return grid.steps; }

    std::vector<Matrix> info_at(std::size_t k) const {
        std::vector<Matrix> out;
        for (const auto& h : info) out.push_back(h[k]);
        return out;
    }
};

struct VariationalEnsemble {
    TimeGrid grid;
    std::size_t paths = 0;
    std::vector<Matrix> Z;  // K+1 entries, n x M
};

namespace detail {

// Runs fn(begin, end) over [0, M) split into `workers` contiguous blocks.
template <typename Fn>
void parallel_blocks(Eigen::Index M, int workers, Fn&& fn) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<Eigen::Index>(M, 1))));
    if (workers == 1) {
        fn(Eigen::Index{0}, M);
        return;
    }
    std::vector<std::thread> pool;
    const Eigen::Index chunk = (M + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const Eigen::Index b = w * chunk, e = std::min(M, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& t : pool) t.join();
}

inline Matrix draw_initial(const TeamProblem& p, std::size_t M, const rng::NormalStream& stream) {
    Matrix x0(p.n, static_cast<Eigen::Index>(M));
    std::vector<double> z(static_cast<std::size_t>(p.n));
    const bool random = p.initial.is_random();
    for (std::size_t r = 0; r < M; ++r) {
        x0.col(static_cast<Eigen::Index>(r)) = p.initial.mean;
        if (!random) continue;
        stream.fill(r, 0, rng::kInitialState, z, p.n);
        for (int j = 0; j < p.n; ++j)
            x0(j, static_cast<Eigen::Index>(r)) += p.initial.stddev[j] * z[static_cast<std::size_t>(j)];
    }
    return x0;
}

inline Matrix draw_increments(int m, std::size_t M, int k, double dt,
                              const rng::NormalStream& stream) {
    Matrix dW(m, static_cast<Eigen::Index>(M));
    const double sq = std::sqrt(dt);
    for (std::size_t r = 0; r < M; ++r) {
        double* col = dW.col(static_cast<Eigen::Index>(r)).data();
        stream.fill(r, static_cast<std::uint32_t>(k), rng::kBrownian, col, m);
        for (int j = 0; j < m; ++j) col[j] *= sq;
    }
    return dW;
}

// Realized action per path: the atom itself for Dirac measures, otherwise a
// draw from the measure (reporting only).
inline Matrix realize_actions(const TeamProblem& p, const ActionSlice& s, std::size_t M, int k,
                              const rng::NormalStream& stream) {
    Matrix u(p.d, static_cast<Eigen::Index>(M));
    for (std::size_t i = 0; i < s.dm.size(); ++i) {
        const auto& d = s.dm[i];
        const auto off = p.action_offset[i];
        for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(M); ++r) {
            int pick = 0;
            if (!d.dirac()) {
                const double w = stream.uniform(static_cast<std::uint64_t>(r), static_cast<std::uint32_t>(k),
                                                rng::kRelaxedSample, static_cast<std::uint32_t>(i));
                double acc = 0.0;
                pick = -1;
                for (int a = 0; a < d.atom_count; ++a) {
                    if (d.weight(a, r) <= 0.0) continue;
                    pick = a;
                    acc += d.weight(a, r);
                    if (w < acc) break;
                }
                if (pick < 0) pick = 0;
            }
            u.col(r).segment(off, d.action_dim) = d.atom(pick, r);
        }
    }
    return u;
}

inline std::string divergence_message(std::size_t path, int step, const Vector& last) {
    std::ostringstream os;
    os << "non-finite state on path " << path << " at step " << step << "; last finite state ["
       << last.transpose() << "]";
    return os.str();
}

}  // namespace detail

struct SimulationOptions {
    int workers = 1;
};

/// Forward Euler-Maruyama simulation. Drift, diffusion and running cost are
/// averaged over the action measure; Brownian increments depend only on
/// (seed, path, step), so two controls with the same seed share them.
inline PathEnsemble simulate_forward(const TeamProblem& p, const ControlSource& control,
                                     const TimeGrid& grid, std::size_t M, std::uint64_t seed,
                                     const SimulationOptions& opt = {}) {
    if (M < 1) throw ModelError("simulate_forward: need at least one path");
    PathEnsemble e;
    e.grid = grid;
    e.paths = M;
    e.seed = seed;
    const auto Mi = static_cast<Eigen::Index>(M);
    const int K = grid.steps;
    const double dt = grid.dt();
    const rng::NormalStream stream(seed);

    e.x.reserve(static_cast<std::size_t>(K + 1));
    e.x.push_back(detail::draw_initial(p, M, stream));
    std::vector<InfoTracker> trackers;
    e.info.resize(p.dm_count());
    for (std::size_t i = 0; i < p.dm_count(); ++i) trackers.emplace_back(make_layout(p, i), e.x[0]);
    e.path_cost = Vector::Zero(Mi);

    for (int k = 0; k < K; ++k) {
        const double t = grid.node(k);
        const Matrix& xk = e.x.back();
        std::vector<Matrix> vars;
        for (std::size_t i = 0; i < p.dm_count(); ++i) {
            vars.push_back(trackers[i].variables(xk));
            e.info[i].push_back(vars.back());
        }
        const ActionSlice slice = control.slice(static_cast<std::size_t>(k), vars);
        Matrix dW = detail::draw_increments(p.m, M, k, dt, stream);
        Matrix next(p.n, Mi);
        const bool dirac = slice.all_dirac();
        Matrix uk = dirac ? slice.dirac_actions() : detail::realize_actions(p, slice, M, k, stream);
        const auto ptrs = pointers(slice);

        detail::parallel_blocks(Mi, opt.workers, [&](Eigen::Index b, Eigen::Index end) {
            Vector f(p.n), fbar(p.n), u(p.d);
            Matrix s(p.n, p.m), sbar(p.n, p.m);
            for (Eigen::Index r = b; r < end; ++r) {
                const auto x = xk.col(r);
                double cost = 0.0;
                if (dirac) {
                    p.drift(t, x, uk.col(r), fbar);
                    p.diffusion(t, x, uk.col(r), sbar);
                    cost = p.running_cost(t, x, uk.col(r));
                } else {
                    fbar.setZero();
                    sbar.setZero();
                    for_each_combo(ptrs, r, u, [&](double w) {
                        p.drift(t, x, u, f);
                        p.diffusion(t, x, u, s);
                        fbar += w * f;
                        sbar += w * s;
                        cost += w * p.running_cost(t, x, u);
                    });
                }
                next.col(r) = x + fbar * dt;
                next.col(r).noalias() += sbar * dW.col(r);
                e.path_cost[r] += cost * dt;
                if (!next.col(r).allFinite() || !std::isfinite(e.path_cost[r]))
                    throw DivergenceError(detail::divergence_message(static_cast<std::size_t>(r), k, x),
                                          static_cast<std::size_t>(r), static_cast<std::size_t>(k));
            }
        });
        for (auto& tr : trackers) tr.advance(xk, dW, dt);
        e.dW.push_back(std::move(dW));
        e.u.push_back(std::move(uk));
        e.x.push_back(std::move(next));
    }
    for (std::size_t i = 0; i < p.dm_count(); ++i) e.info[i].push_back(trackers[i].variables(e.x.back()));
    for (Eigen::Index r = 0; r < Mi; ++r) {
        e.path_cost[r] += p.terminal_cost(e.x.back().col(r));
        if (!std::isfinite(e.path_cost[r]))
            throw DivergenceError("non-finite terminal cost on path " + std::to_string(r),
                                  static_cast<std::size_t>(r), static_cast<std::size_t>(K));
    }
    return e;
}

/// The control's measures along every step of an existing ensemble.
inline std::vector<ActionSlice> record_slices(const ControlSource& control, const PathEnsemble& e) {
    std::vector<ActionSlice> out;
    for (int k = 0; k < e.steps(); ++k)
        out.push_back(control.slice(static_cast<std::size_t>(k), e.info_at(static_cast<std::size_t>(k))));
    return out;
}

/// Euler recursion of the variational equation along a base ensemble,
/// reusing its Brownian increments:
///   Z_{k+1} = Z_k + [f_x Z_k + sum_i (f(mu^{-i}, nu^i) - f(mu))] dt
///                 + [sigma_x(Z_k) + sum_i (sigma(mu^{-i}, nu^i) - sigma(mu))] dW_k,
/// with mu the base measures, nu the direction measures, all coefficients
/// averaged over the measures and evaluated at the base state.
inline VariationalEnsemble simulate_variational(const TeamProblem& p, const ControlSource& base,
                                                const ControlSource& direction,
                                                const PathEnsemble& e) {
    if (!p.drift_jac_x) throw ModelError("simulate_variational: missing drift_jac_x");
    if (!p.diffusion_jac_x) throw ModelError("simulate_variational: missing diffusion_jac_x");
    VariationalEnsemble v;
    v.grid = e.grid;
    v.paths = e.paths;
    const auto M = static_cast<Eigen::Index>(e.paths);
    const double dt = e.grid.dt();
    const int n = p.n, m = p.m;
    v.Z.push_back(Matrix::Zero(n, M));
    for (int k = 0; k < e.steps(); ++k) {
        const double t = e.grid.node(k);
        const auto info = e.info_at(static_cast<std::size_t>(k));
        const ActionSlice mu = base.slice(static_cast<std::size_t>(k), info);
        const ActionSlice nu = direction.slice(static_cast<std::size_t>(k), info);
        const auto base_ptrs = pointers(mu);
        const Matrix& Zk = v.Z.back();
        Matrix next(n, M);
        Vector u(p.d), f(n), fbar(n), fmix(n), drift(n), zeta(n);
        Matrix s(n, m), sbar(n, m), smix(n, m), J(n, n), Jbar(n, n), SJ(n, n * m), SJbar(n, n * m),
            noise(n, m);
        for (Eigen::Index r = 0; r < M; ++r) {
            const auto x = e.x[static_cast<std::size_t>(k)].col(r);
            fbar.setZero();
            sbar.setZero();
            Jbar.setZero();
            SJbar.setZero();
            for_each_combo(base_ptrs, r, u, [&](double w) {
                p.drift(t, x, u, f);
                p.diffusion(t, x, u, s);
                p.drift_jac_x(t, x, u, J);
                p.diffusion_jac_x(t, x, u, SJ);
                fbar += w * f;
                sbar += w * s;
                Jbar += w * J;
                SJbar += w * SJ;
            });
            drift.noalias() = Jbar * Zk.col(r);
            noise.setZero();
            for (int j = 0; j < n; ++j) noise += Zk(j, r) * SJbar.middleCols(j * m, m);
            for (std::size_t i = 0; i < p.dm_count(); ++i) {
                auto ptrs = base_ptrs;
                ptrs[i] = &nu.dm[i];
                fmix.setZero();
                smix.setZero();
                for_each_combo(ptrs, r, u, [&](double w) {
                    p.drift(t, x, u, f);
                    p.diffusion(t, x, u, s);
                    fmix += w * f;
                    smix += w * s;
                });
                drift += fmix - fbar;
                noise += smix - sbar;
            }
            next.col(r) = Zk.col(r) + drift * dt;
            next.col(r).noalias() += noise * e.dW[static_cast<std::size_t>(k)].col(r);
        }
        v.Z.push_back(std::move(next));
    }
    return v;
}

/// Columnar CSV: path, step, t, x..., u..., dW... (u and dW empty at step K).
inline void write_ensemble_csv(std::ostream& os, const PathEnsemble& e) {
    const auto n = e.x.front().rows();
    const auto d = e.u.empty() ? 0 : e.u.front().rows();
    const auto m = e.dW.empty() ? 0 : e.dW.front().rows();
    os << "path,step,t";
    for (Eigen::Index j = 0; j < n; ++j) os << ",x" << j;
    for (Eigen::Index j = 0; j < d; ++j) os << ",u" << j;
    for (Eigen::Index j = 0; j < m; ++j) os << ",dW" << j;
    os << '\n';
    os.precision(17);
    for (std::size_t r = 0; r < e.paths; ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        for (int k = 0; k <= e.steps(); ++k) {
            const auto ks = static_cast<std::size_t>(k);
            os << r << ',' << k << ',' << e.grid.node(k);
            for (Eigen::Index j = 0; j < n; ++j) os << ',' << e.x[ks](j, ri);
            for (Eigen::Index j = 0; j < d; ++j) {
                os << ',';
                if (k < e.steps()) os << e.u[ks](j, ri);
            }
            for (Eigen::Index j = 0; j < m; ++j) {
                os << ',';
                if (k < e.steps()) os << e.dW[ks](j, ri);
            }
            os << '\n';
        }
    }
}

namespace detail {

constexpr char kCacheMagic[8] = {'T', 'S', 'M', 'P', 'E', 'N', 'S', '1'};

inline void write_matrix(std::ostream& os, const Matrix& a) {
    const std::int64_t dims[2] = {a.rows(), a.cols()};
    os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    os.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(sizeof(double) * a.size()));
}

inline Matrix read_matrix(std::istream& is) {
    std::int64_t dims[2] = {0, 0};
    is.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!is || dims[0] < 0 || dims[1] < 0) throw std::runtime_error("ensemble cache: truncated header");
    Matrix a(dims[0], dims[1]);
    is.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(sizeof(double) * a.size()));
    if (!is) throw std::runtime_error("ensemble cache: truncated data");
    return a;
}

}  // namespace detail

/// Compact binary image of an ensemble (native byte order, doubles verbatim).
inline void write_ensemble_binary(std::ostream& os, const PathEnsemble& e) {
    os.write(detail::kCacheMagic, sizeof(detail::kCacheMagic));
    const std::int64_t head[4] = {e.grid.steps, static_cast<std::int64_t>(e.paths),
                                  static_cast<std::int64_t>(e.seed), static_cast<std::int64_t>(e.info.size())};
    os.write(reinterpret_cast<const char*>(head), sizeof(head));
    os.write(reinterpret_cast<const char*>(&e.grid.horizon), sizeof(double));
    for (const auto& a : e.x) detail::write_matrix(os, a);
    for (const auto& a : e.dW) detail::write_matrix(os, a);
    for (const auto& a : e.u) detail::write_matrix(os, a);
    for (const auto& h : e.info)
        for (const auto& a : h) detail::write_matrix(os, a);
    detail::write_matrix(os, e.path_cost);
}

inline PathEnsemble read_ensemble_binary(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || !std::equal(magic, magic + 8, detail::kCacheMagic))
        throw std::runtime_error("ensemble cache: bad magic");
    std::int64_t head[4];
    is.read(reinterpret_cast<char*>(head), sizeof(head));
    double horizon = 0.0;
    is.read(reinterpret_cast<char*>(&horizon), sizeof(double));
    if (!is) throw std::runtime_error("ensemble cache: truncated header");
    PathEnsemble e;
    e.grid = TimeGrid(static_cast<int>(head[0]), horizon);
    e.paths = static_cast<std::size_t>(head[1]);
    e.seed = static_cast<std::uint64_t>(head[2]);
    const auto K = static_cast<std::size_t>(head[0]);
    for (std::size_t k = 0; k <= K; ++k) e.x.push_back(detail::read_matrix(is));
    for (std::size_t k = 0; k < K; ++k) e.dW.push_back(detail::read_matrix(is));
    for (std::size_t k = 0; k < K; ++k) e.u.push_back(detail::read_matrix(is));
    e.info.resize(static_cast<std::size_t>(head[3]));
    for (auto& h : e.info)
        for (std::size_t k = 0; k <= K; ++k) h.push_back(detail::read_matrix(is));
    e.path_cost = detail::read_matrix(is);
    return e;
}

}  // namespace teamsmp
