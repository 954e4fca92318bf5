#pragma once

// Hamiltonian H = <f, psi> + tr(Q' sigma) + l, its projection onto a DM's
// information and the per-DM minimization of that projection.

#include "teamsmp/bsde.hpp"
#include "teamsmp/condexp.hpp"
#include "teamsmp/strategy.hpp"

#include <limits>
#include <vector>

namespace teamsmp {

/// H(t, x, psi, Q, u).
inline double hamiltonian(const TeamProblem& p, double t, VecIn x, VecIn psi, MatIn Q, VecIn u) {
    if (x.size() != p.n || psi.size() != p.n || u.size() != p.d || Q.rows() != p.n || Q.cols() != p.m)
        throw ModelError("hamiltonian: shape mismatch");
    return p.hamiltonian(t, x, psi, Q, u);
}

/// Measure average of H over the product of the per-DM atoms.
inline double hamiltonian(const TeamProblem& p, double t, VecIn x, VecIn psi, MatIn Q,
                          const RelaxedAction& nu) {
    nu.validate(p);
    if (x.size() != p.n || psi.size() != p.n || Q.rows() != p.n || Q.cols() != p.m)
        throw ModelError("hamiltonian: shape mismatch");
    const ActionSlice s = nu.to_slice();
    Vector u(p.d);
    double h = 0.0;
    for_each_combo(pointers(s), 0, u, [&](double w) { h += w * p.hamiltonian(t, x, psi, Q, u); });
    return h;
}

struct HamiltonianOptions {
    int grid_points = 21;  // per action dimension
    bool refine = true;
    RegressionOptions regression;
};

/// Conditional estimates E[H(t_k, x, psi, Q, u^{-i}, a) | G^i] for one DM and
/// step, with the other DMs held at their current measures.
class ConditionalEvaluator {
public:
    ConditionalEvaluator(const TeamProblem& p, const PathEnsemble& e, const AdjointEnsemble& a,
                         const ActionSlice& current, std::size_t dm, std::size_t k,
                         const HamiltonianOptions& opt = {})
        : p_(p), e_(e), a_(a), current_(current), dm_(dm), k_(k),
          reg_(expand_basis(e.info[dm][k], p.info[dm].basis, p.info[dm].custom_basis), opt.regression,
               static_cast<int>(k)) {
        di_ = p.subsystems[dm].action_dim;
        if (p.control_quadratic) build_quadratic();
    }

    // Raw H per path with DM i playing actions (di x M, or di x 1 for all paths).
    Vector raw(const Matrix& actions) const {
        const auto M = static_cast<Eigen::Index>(e_.paths);
        const bool shared = actions.cols() == 1;
        const double t = e_.grid.node(static_cast<int>(k_));
        const auto off = p_.action_offset[dm_];
        Vector out(M), u(p_.d);
        auto ptrs = pointers(current_);
        DmMeasureSlice mine;
        mine.action_dim = di_;
        ptrs[dm_] = &mine;
        bool others_dirac = true;
        for (std::size_t j = 0; j < current_.dm.size(); ++j)
            if (j != dm_ && !current_.dm[j].dirac()) others_dirac = false;
        for (Eigen::Index r = 0; r < M; ++r) {
            const auto x = e_.x[k_].col(r);
            const auto psi = a_.psi_next[k_].col(r);
            const auto Q = a_.Q_at(k_, r);
            const auto act = actions.col(shared ? 0 : r);
            if (others_dirac) {
                for (std::size_t j = 0; j < current_.dm.size(); ++j)
                    if (j != dm_) u.segment(p_.action_offset[j], current_.dm[j].action_dim) = current_.dm[j].atom(0, r);
                u.segment(off, di_) = act;
                out[r] = p_.hamiltonian(t, x, psi, Q, u);
            } else {
                mine.atoms = act;
                mine.shared_atoms = true;
                double h = 0.0;
                for_each_combo(ptrs, r, u, [&](double w) { h += w * p_.hamiltonian(t, x, psi, Q, u); });
                out[r] = h;
            }
        }
        return out;
    }

    // Conditional estimates for shared candidates (di x C) -> M x C.
    Matrix grid(const Matrix& candidates) {
        const auto M = static_cast<Eigen::Index>(e_.paths);
        Matrix out(M, candidates.cols());
        if (quadratic_) {
            for (Eigen::Index c = 0; c < candidates.cols(); ++c)
                out.col(c) = coef_ * monomials(candidates.col(c));
            return out;
        }
        Matrix H(M, candidates.cols());
        for (Eigen::Index c = 0; c < candidates.cols(); ++c) H.col(c) = raw(candidates.col(c));
        FitResult f = reg_.fit(H);
        note(f.fit);
        return f.fitted;
    }

    // Conditional estimates at per-path actions (di x M) -> M.
    Vector at(const Matrix& actions) {
        const auto M = static_cast<Eigen::Index>(e_.paths);
        if (quadratic_) {
            Vector out(M);
            for (Eigen::Index r = 0; r < M; ++r) out[r] = coef_.row(r).dot(monomials(actions.col(r)));
            return out;
        }
        FitResult f = reg_.fit(raw(actions));
        note(f.fit);
        return f.fitted.col(0);
    }

    double residual_se() const { return fits_ ? se_sum_ / fits_ : 0.0; }
    bool degenerate() const { return reg_.degenerate(); }
    bool quadratic() const { return quadratic_; }

private:
    // Quadratic monomials in the action: 1, a_j, a_j a_l (j <= l).
    Vector monomials(const Eigen::Ref<const Vector>& a) const {
        Vector v(1 + di_ + di_ * (di_ + 1) / 2);
        v[0] = 1.0;
        for (int j = 0; j < di_; ++j) v[1 + j] = a[j];
        int c = 1 + di_;
        for (int j = 0; j < di_; ++j)
            for (int l = j; l < di_; ++l) v[c++] = a[j] * a[l];
        return v;
    }

    // Interpolates the conditional H exactly from 1 + 2d + d(d-1)/2 nodes.
    void build_quadratic() {
        const auto& box = p_.subsystems[dm_].action_box;
        Vector c(di_), h(di_);
        for (int j = 0; j < di_; ++j) {
            c[j] = box[static_cast<std::size_t>(j)].center();
            h[j] = std::max(0.5 * (box[static_cast<std::size_t>(j)].hi - box[static_cast<std::size_t>(j)].lo), 0.5);
        }
        std::vector<Vector> nodes{c};
        for (int j = 0; j < di_; ++j) {
            Vector a = c;
            a[j] += h[j];
            nodes.push_back(a);
            a[j] = c[j] - h[j];
            nodes.push_back(a);
        }
        for (int j = 0; j < di_; ++j)
            for (int l = j + 1; l < di_; ++l) {
                Vector a = c;
                a[j] += h[j];
                a[l] += h[l];
                nodes.push_back(a);
            }
        const auto P = static_cast<Eigen::Index>(nodes.size());
        Matrix V(P, P), H(static_cast<Eigen::Index>(e_.paths), P);
        for (Eigen::Index q = 0; q < P; ++q) {
            V.row(q) = monomials(nodes[static_cast<std::size_t>(q)]).transpose();
            H.col(q) = raw(nodes[static_cast<std::size_t>(q)]);
        }
        FitResult f = reg_.fit(H);
        note(f.fit);
        // values = V coef  =>  coef' = V^{-1} values'
        coef_ = V.partialPivLu().solve(f.fitted.transpose()).transpose();
        quadratic_ = true;
    }

    void note(const RegressionFit& f) {
        se_sum_ += f.residual_se.size() ? f.residual_se.mean() : 0.0;
        ++fits_;
    }

    const TeamProblem& p_;
    const PathEnsemble& e_;
    const AdjointEnsemble& a_;
    const ActionSlice& current_;
    std::size_t dm_, k_;
    int di_ = 1;
    Regressor reg_;
    bool quadratic_ = false;
    Matrix coef_;  // M x monomials
    double se_sum_ = 0.0;
    int fits_ = 0;
};

/// Conditional Hamiltonian of DM i at step k over a candidate set.
struct ConditionalHamiltonianTable {
    std::size_t dm = 0;
    std::size_t time_index = 0;
    Matrix candidates;  // di x C, shared by all paths
    Matrix values;      // M x C
    Vector current;     // M: estimate at the DM's current measure
    double residual_se = 0.0;
    bool degenerate = false;
};

inline ConditionalHamiltonianTable conditional_hamiltonian(ConditionalEvaluator& ev, std::size_t dm, std::size_t k,
                                                           const Matrix& candidates, const DmMeasureSlice& current) {
    ConditionalHamiltonianTable t;
    t.dm = dm;
    t.time_index = k;
    t.candidates = candidates;
    t.values = ev.grid(candidates);
    if (current.dirac()) {
        Matrix act(current.action_dim, t.values.rows());
        for (Eigen::Index r = 0; r < act.cols(); ++r) act.col(r) = current.atom(0, r);
        t.current = ev.at(act);
    } else {
        // relaxed rules use the candidate grid as their atoms
        t.current = Vector::Zero(t.values.rows());
        for (Eigen::Index r = 0; r < t.values.rows(); ++r)
            for (int a = 0; a < current.atom_count; ++a) t.current[r] += current.weight(a, r) * t.values(r, a);
    }
    t.residual_se = ev.residual_se();
    t.degenerate = ev.degenerate();
    return t;
}

struct ConditionalMinimum {
    Matrix actions;  // regular: di x M minimizers
    Vector values;   // M: conditional H at the minimizer
    Matrix weights;  // relaxed: G x cells, one-hot columns
};

namespace detail {

inline double parabola_vertex(double x0, double x1, double x2, double f0, double f1, double f2) {
    const double den = (x0 - x1) * (x0 - x2) * (x1 - x2);
    const double a = (x2 * (f1 - f0) + x1 * (f0 - f2) + x0 * (f2 - f1)) / den;
    const double b = (x2 * x2 * (f0 - f1) + x1 * x1 * (f2 - f0) + x0 * x0 * (f1 - f2)) / den;
    if (!(a > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return -b / (2.0 * a);
}

}  // namespace detail

/// Per-path argmin over the candidate grid, then one projected quadratic
/// refinement per coordinate through the grid neighbours. The current
/// action is kept when it is at least as good.
inline ConditionalMinimum minimize_regular(const TeamProblem& p, ConditionalEvaluator& ev,
                                           const ConditionalHamiltonianTable& t, const DmMeasureSlice& current,
                                           int per_dim, bool refine = true) {
    const auto& spec = p.subsystems[t.dm];
    const int di = spec.action_dim;
    const auto M = t.values.rows();
    ConditionalMinimum out;
    out.actions.resize(di, M);
    out.values.resize(M);
    std::vector<Eigen::Index> best(static_cast<std::size_t>(M));
    for (Eigen::Index r = 0; r < M; ++r) {
        Eigen::Index g = 0;
        out.values[r] = t.values.row(r).minCoeff(&g);
        best[static_cast<std::size_t>(r)] = g;
        out.actions.col(r) = t.candidates.col(g);
    }
    if (refine && per_dim >= 3) {
        Matrix trial = out.actions;
        for (Eigen::Index r = 0; r < M; ++r) {
            const Eigen::Index g = best[static_cast<std::size_t>(r)];
            Eigen::Index stride = 1;
            for (int j = di - 1; j >= 0; --j) {
                const Eigen::Index q = (g / stride) % per_dim;
                const Eigen::Index mid = std::clamp<Eigen::Index>(q, 1, per_dim - 2);
                const Eigen::Index g0 = g + (mid - 1 - q) * stride, g1 = g + (mid - q) * stride,
                                   g2 = g + (mid + 1 - q) * stride;
                const double v = detail::parabola_vertex(t.candidates(j, g0), t.candidates(j, g1), t.candidates(j, g2),
                                                         t.values(r, g0), t.values(r, g1), t.values(r, g2));
                if (std::isfinite(v)) trial(j, r) = spec.action_box[static_cast<std::size_t>(j)].clamp(v);
                stride *= per_dim;
            }
        }
        const Vector tv = ev.at(trial);
        for (Eigen::Index r = 0; r < M; ++r)
            if (tv[r] < out.values[r]) {
                out.values[r] = tv[r];
                out.actions.col(r) = trial.col(r);
            }
    }
    if (current.dirac())
        for (Eigen::Index r = 0; r < M; ++r)
            if (t.current[r] <= out.values[r]) {
                out.values[r] = t.current[r];
                out.actions.col(r) = current.atom(0, r);
            }
    return out;
}

/// Relaxed minimization: the objective is linear in the measure, so each
/// cell gets a point mass on the atom with the lowest cell-averaged value
/// (ties to the lowest index). Empty cells copy the nearest populated cell.
inline ConditionalMinimum minimize_relaxed(const ConditionalHamiltonianTable& t, const std::vector<int>& cells,
                                           int bins, int vars) {
    int cell_count = 1;
    for (int v = 0; v < vars; ++v) cell_count *= bins;
    const auto G = t.values.cols();
    Matrix sum = Matrix::Zero(G, cell_count);
    std::vector<int> count(static_cast<std::size_t>(cell_count), 0);
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
        const int c = cells[static_cast<std::size_t>(r)];
        sum.col(c) += t.values.row(r).transpose();
        ++count[static_cast<std::size_t>(c)];
    }
    std::vector<int> argmin(static_cast<std::size_t>(cell_count), -1);
    for (int c = 0; c < cell_count; ++c) {
        if (count[static_cast<std::size_t>(c)] == 0) continue;
        int bestg = 0;
        for (Eigen::Index g = 1; g < G; ++g)
            if (sum(g, c) < sum(bestg, c)) bestg = static_cast<int>(g);
        argmin[static_cast<std::size_t>(c)] = bestg;
    }
    auto digits = [&](int c) {
        std::vector<int> d(static_cast<std::size_t>(vars));
        for (int v = vars - 1; v >= 0; --v) {
            d[static_cast<std::size_t>(v)] = c % bins;
            c /= bins;
        }
        return d;
    };
    ConditionalMinimum out;
    out.weights = Matrix::Zero(G, cell_count);
    for (int c = 0; c < cell_count; ++c) {
        int g = argmin[static_cast<std::size_t>(c)];
        if (g < 0) {
            const auto dc = digits(c);
            int bestd = std::numeric_limits<int>::max();
            for (int o = 0; o < cell_count; ++o) {
                if (argmin[static_cast<std::size_t>(o)] < 0) continue;
                const auto od = digits(o);
                int dist = 0;
                for (int v = 0; v < vars; ++v)
                    dist += std::abs(od[static_cast<std::size_t>(v)] - dc[static_cast<std::size_t>(v)]);
                if (dist < bestd) {
                    bestd = dist;
                    g = argmin[static_cast<std::size_t>(o)];
                }
            }
            if (g < 0) g = 0;
        }
        out.weights(g, c) = 1.0;
    }
    out.values.resize(t.values.rows());
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
        Eigen::Index g = 0;
        out.weights.col(cells[static_cast<std::size_t>(r)]).maxCoeff(&g);
        out.values[r] = t.values(r, g);
    }
    return out;
}

/// Per-DM stationarity gap (1/T) sum_k dt E[H^i(current) - min_a H^i(a)].
struct DmGap {
    double gap = 0.0;
    double standard_error = 0.0;
    double noise_floor = 0.0;  // 3 x regression residual SE / sqrt(M), time-averaged
    std::vector<double> per_step;
};

struct GapReport {
    std::vector<DmGap> dm;
    double team_gap = 0.0;
};

/// Everything one DM update needs at one iterate: the gap and, per step,
/// the conditional minimizers.
struct DmAnalysis {
    DmGap gap;
    std::vector<ConditionalMinimum> minima;  // per step
    std::vector<std::vector<int>> cells;     // relaxed: per step cell of each path
    std::vector<Matrix> edges;               // relaxed: per step edges used for the cells
};

namespace detail {

// Per-step bin edges from the central 99% of each information variable.
inline Matrix quantile_edges(const Matrix& vars) {
    Matrix e(vars.rows(), 2);
    std::vector<double> buf(static_cast<std::size_t>(vars.cols()));
    for (Eigen::Index v = 0; v < vars.rows(); ++v) {
        for (Eigen::Index r = 0; r < vars.cols(); ++r) buf[static_cast<std::size_t>(r)] = vars(v, r);
        std::sort(buf.begin(), buf.end());
        const auto at = [&](double q) {
            const auto i = static_cast<std::size_t>(std::floor(q * static_cast<double>(buf.size() - 1)));
            return buf[i];
        };
        e(v, 0) = at(0.005);
        e(v, 1) = at(0.995);
    }
    return e;
}

}  // namespace detail

inline DmAnalysis analyze_dm(const TeamProblem& p, const StrategyProfile& profile, const PathEnsemble& e,
                             const AdjointEnsemble& a, const std::vector<ActionSlice>& slices, std::size_t dm,
                             const HamiltonianOptions& opt = {}) {
    DmAnalysis out;
    const auto& strat = profile.dm[dm];
    const bool relaxed = strat.mode == StrategyMode::relaxed;
    const Matrix candidates = relaxed ? strat.relaxed.atoms : action_grid(p.subsystems[dm], opt.grid_points);
    const auto M = static_cast<Eigen::Index>(e.paths);
    const double dt = e.grid.dt(), T = e.grid.horizon;
    Vector acc = Vector::Zero(M);
    const int vars = static_cast<int>(e.info[dm].front().rows());
    for (int k = 0; k < e.steps(); ++k) {
        const auto ks = static_cast<std::size_t>(k);
        ConditionalEvaluator ev(p, e, a, slices[ks], dm, ks, opt);
        const auto& cur = slices[ks].dm[dm];
        const ConditionalHamiltonianTable t = conditional_hamiltonian(ev, dm, ks, candidates, cur);
        ConditionalMinimum mn;
        if (relaxed) {
            RelaxedRule tmp;
            tmp.bins = strat.relaxed.bins;
            tmp.edges.push_back(detail::quantile_edges(e.info[dm][ks]));
            out.cells.push_back(tmp.cells(0, e.info[dm][ks]));
            out.edges.push_back(tmp.edges.front());
            mn = minimize_relaxed(t, out.cells.back(), tmp.bins, vars);
        } else {
            mn = minimize_regular(p, ev, t, cur, opt.grid_points, opt.refine);
        }
        const Vector diff = t.current - mn.values;
        acc += (dt / T) * diff;
        out.gap.per_step.push_back(diff.mean());
        out.gap.noise_floor += (dt / T) * 3.0 * t.residual_se / std::sqrt(static_cast<double>(M));
        out.minima.push_back(std::move(mn));
    }
    out.gap.gap = acc.mean();
    out.gap.standard_error =
        M > 1 ? std::sqrt((acc.array() - out.gap.gap).square().sum() / static_cast<double>(M - 1) / static_cast<double>(M))
              : 0.0;
    return out;
}

inline GapReport stationarity_gap(const TeamProblem& p, const StrategyProfile& profile, const PathEnsemble& e,
                                  const AdjointEnsemble& a, const std::vector<ActionSlice>& slices,
                                  const HamiltonianOptions& opt = {}) {
    GapReport rep;
    for (std::size_t i = 0; i < p.dm_count(); ++i) {
        rep.dm.push_back(analyze_dm(p, profile, e, a, slices, i, opt).gap);
        rep.team_gap += rep.dm.back().gap;
    }
    return rep;
}

}  // namespace teamsmp
