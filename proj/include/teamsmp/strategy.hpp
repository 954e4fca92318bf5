#pragma once

// Decision rules. Regular rules are projected feedback maps over a DM's
// information features; relaxed rules are piecewise-constant measures on a
// gridded action set, constant over bins of the information variables.

#include "teamsmp/information.hpp"
#include "teamsmp/measure.hpp"

#include <cmath>
#include <memory>
#include <vector>

namespace teamsmp {

enum class StrategyMode { regular, relaxed };

inline const char* to_string(StrategyMode m) {
    return m == StrategyMode::regular ? "regular" : "relaxed";
}

struct RegularRule {
    std::vector<Matrix> coef;  // per step k < K: features x action_dim
};

struct RelaxedRule {
    Matrix atoms;  // action_dim x G
    int bins = 8;
    std::vector<Matrix> edges;    // per step: vars x 2 (lo, hi)
    std::vector<Matrix> weights;  // per step: G x cells

    int cell_count(int vars) const {
        int c = 1;
        for (int v = 0; v < vars; ++v) c *= bins;
        return c;
    }

    // Cell of each path given its variables (vars x M).
    std::vector<int> cells(std::size_t k, const Matrix& vars) const {
        const auto& e = edges[k];
        std::vector<int> out(static_cast<std::size_t>(vars.cols()), 0);
        for (Eigen::Index r = 0; r < vars.cols(); ++r) {
            int c = 0;
            for (Eigen::Index v = 0; v < vars.rows(); ++v) {
                const double lo = e(v, 0), hi = e(v, 1);
                int b = 0;
                if (hi > lo) {
                    b = static_cast<int>(std::floor((vars(v, r) - lo) / (hi - lo) * bins));
                    b = std::clamp(b, 0, bins - 1);
                }
                c = c * bins + b;
            }
            out[static_cast<std::size_t>(r)] = c;
        }
        return out;
    }
};

struct DmStrategy {
    StrategyMode mode = StrategyMode::regular;
    Basis basis = Basis::polynomial_deg2;
    RegularRule regular;
    RelaxedRule relaxed;
};

struct StrategyProfile {
    std::vector<DmStrategy> dm;
    int steps = 0;
};

/// Uniform grid of `per_dim` points per action coordinate of the box.
inline Matrix action_grid(const SubsystemSpec& s, int per_dim) {
    const int d = s.action_dim;
    int G = 1;
    for (int j = 0; j < d; ++j) G *= per_dim;
    Matrix atoms(d, G);
    for (int g = 0; g < G; ++g) {
        int rem = g;
        for (int j = d - 1; j >= 0; --j) {
            const int q = rem % per_dim;
            rem /= per_dim;
            const auto& iv = s.action_box[static_cast<std::size_t>(j)];
            atoms(j, g) = per_dim == 1 ? iv.center()
                                       : iv.lo + (iv.hi - iv.lo) * q / static_cast<double>(per_dim - 1);
        }
    }
    return atoms;
}

// Zero projected into the box, or the box center when zero is outside.
inline Vector default_action(const SubsystemSpec& s) {
    Vector a(s.action_dim);
    for (int j = 0; j < s.action_dim; ++j) {
        const auto& iv = s.action_box[static_cast<std::size_t>(j)];
        a[j] = (iv.lo <= 0.0 && 0.0 <= iv.hi) ? 0.0 : iv.center();
    }
    return a;
}

/// Zero-action profile (projected), with regular or relaxed rules.
inline StrategyProfile initial_profile(const TeamProblem& p, int steps, StrategyMode mode,
                                       int atoms_per_dim = 21, int bins = 8) {
    StrategyProfile prof;
    prof.steps = steps;
    for (std::size_t i = 0; i < p.dm_count(); ++i) {
        const auto L = make_layout(p, i);
        DmStrategy s;
        s.mode = mode;
        s.basis = p.info[i].basis;
        const Vector a0 = default_action(p.subsystems[i]);
        if (mode == StrategyMode::regular) {
            int nf = basis_size(s.basis, L.dim);
            if (s.basis == Basis::custom) {
                nf = static_cast<int>(p.info[i].custom_basis(Matrix::Zero(1, L.dim)).cols());
            }
            for (int k = 0; k < steps; ++k) {
                Matrix c = Matrix::Zero(nf, p.subsystems[i].action_dim);
                c.row(0) = a0.transpose();
                s.regular.coef.push_back(std::move(c));
            }
        } else {
            s.relaxed.atoms = action_grid(p.subsystems[i], atoms_per_dim);
            s.relaxed.bins = bins;
            const int G = static_cast<int>(s.relaxed.atoms.cols());
            int nearest = 0;
            (s.relaxed.atoms.colwise() - a0).colwise().squaredNorm().minCoeff(&nearest);
            const int cells = s.relaxed.cell_count(L.dim);
            if (cells > 100000)
                throw ModelError("relaxed rule for DM " + std::to_string(i) + " would need " +
                                 std::to_string(cells) + " cells; reduce bins or variables");
            for (int k = 0; k < steps; ++k) {
                Matrix e(L.dim, 2);
                e.col(0).setConstant(-1.0);
                e.col(1).setConstant(1.0);
                s.relaxed.edges.push_back(e);
                Matrix w = Matrix::Zero(G, cells);
                w.row(nearest).setOnes();
                s.relaxed.weights.push_back(std::move(w));
            }
        }
        prof.dm.push_back(std::move(s));
    }
    return prof;
}

/// Regular profile playing a fixed action per DM (projected into the box).
inline StrategyProfile constant_profile(const TeamProblem& p, int steps, const std::vector<Vector>& actions) {
    if (actions.size() != p.dm_count()) throw ModelError("constant_profile: one action per DM required");
    StrategyProfile prof = initial_profile(p, steps, StrategyMode::regular);
    for (std::size_t i = 0; i < p.dm_count(); ++i) {
        const auto& s = p.subsystems[i];
        if (actions[i].size() != s.action_dim) throw ModelError("constant_profile: action has wrong dimension");
        Vector a = actions[i];
        for (int j = 0; j < s.action_dim; ++j) {
            const auto& iv = s.action_box[static_cast<std::size_t>(j)];
            a[j] = std::clamp(a[j], iv.lo, iv.hi);
        }
        for (auto& c : prof.dm[i].regular.coef) {
            c.setZero();
            c.row(0) = a.transpose();
        }
    }
    return prof;
}

/// Anything that yields action measures for all paths at step k.
class ControlSource {
public:
    virtual ~ControlSource() = default;
    // info_vars[i] holds DM i's variables at step k (vars x M).
    virtual ActionSlice slice(std::size_t k, const std::vector<Matrix>& info_vars) const = 0;
};

/// Evaluates a StrategyProfile on the DMs' information variables.
class StrategyControl : public ControlSource {
public:
    StrategyControl(const TeamProblem& p, StrategyProfile s) : problem_(p), profile_(std::move(s)) {
        if (profile_.dm.size() != p.dm_count()) throw ModelError("strategy has wrong number of DMs");
    }

    ActionSlice slice(std::size_t k, const std::vector<Matrix>& info_vars) const override {
        ActionSlice out;
        for (std::size_t i = 0; i < profile_.dm.size(); ++i)
            out.dm.push_back(dm_slice(i, k, info_vars[i]));
        return out;
    }

    DmMeasureSlice dm_slice(std::size_t i, std::size_t k, const Matrix& vars) const {
        const auto& s = profile_.dm[i];
        const auto& spec = problem_.subsystems[i];
        if (s.mode == StrategyMode::regular) {
            const Matrix F = expand_basis(vars, s.basis, problem_.info[i].custom_basis);
            const Matrix& c = s.regular.coef.at(k);
            if (c.rows() != F.cols())
                throw ModelError("strategy for DM " + std::to_string(i) + " expects " +
                                 std::to_string(c.rows()) + " features, got " + std::to_string(F.cols()));
            Matrix u = (F * c).transpose();
            for (int j = 0; j < spec.action_dim; ++j) {
                const auto& iv = spec.action_box[static_cast<std::size_t>(j)];
                u.row(j) = u.row(j).cwiseMax(iv.lo).cwiseMin(iv.hi);
            }
            return DmMeasureSlice::from_actions(std::move(u));
        }
        const auto& rule = s.relaxed;
        DmMeasureSlice d;
        d.action_dim = spec.action_dim;
        d.shared_atoms = true;
        d.atoms = rule.atoms;
        d.atom_count = static_cast<int>(rule.atoms.cols());
        const auto cells = rule.cells(k, vars);
        d.weights.resize(d.atom_count, vars.cols());
        for (Eigen::Index r = 0; r < vars.cols(); ++r)
            d.weights.col(r) = rule.weights[k].col(cells[static_cast<std::size_t>(r)]);
        if (d.atom_count == 1) d.weights.resize(0, 0);
        return d;
    }

    const StrategyProfile& profile() const { return profile_; }
    const TeamProblem& problem() const { return problem_; }

private:
    const TeamProblem& problem_;
    StrategyProfile profile_;
};

/// Action processes recorded along a base ensemble, mixed as
/// (1 - eps) * base + eps * direction per DM. The mixture does not react to
/// the perturbed state: it is the convex perturbation of adapted controls.
class FrozenMixture : public ControlSource {
public:
    FrozenMixture(std::vector<ActionSlice> base, std::vector<ActionSlice> direction, double eps,
                  Eigen::Index paths)
        : base_(std::move(base)), direction_(std::move(direction)), eps_(eps), paths_(paths) {}

    ActionSlice slice(std::size_t k, const std::vector<Matrix>&) const override {
        if (eps_ == 0.0) return base_.at(k);
        ActionSlice out;
        const auto& b = base_.at(k);
        const auto& dd = direction_.at(k);
        for (std::size_t i = 0; i < b.dm.size(); ++i) out.dm.push_back(mix(b.dm[i], dd.dm[i]));
        return out;
    }

private:
    DmMeasureSlice mix(const DmMeasureSlice& a, const DmMeasureSlice& b) const {
        const Eigen::Index M = paths_;
        DmMeasureSlice d;
        d.action_dim = a.action_dim;
        d.atom_count = a.atom_count + b.atom_count;
        d.atoms.resize(static_cast<Eigen::Index>(d.action_dim) * d.atom_count, M);
        d.weights.resize(d.atom_count, M);
        for (Eigen::Index r = 0; r < M; ++r) {
            for (int j = 0; j < a.atom_count; ++j) {
                d.atoms.col(r).segment(static_cast<Eigen::Index>(j) * d.action_dim, d.action_dim) = a.atom(j, r);
                d.weights(j, r) = (1.0 - eps_) * a.weight(j, r);
            }
            for (int j = 0; j < b.atom_count; ++j) {
                const int jj = a.atom_count + j;
                d.atoms.col(r).segment(static_cast<Eigen::Index>(jj) * d.action_dim, d.action_dim) = b.atom(j, r);
                d.weights(jj, r) = eps_ * b.weight(j, r);
            }
        }
        return d;
    }

    std::vector<ActionSlice> base_;
    std::vector<ActionSlice> direction_;
    double eps_;
    Eigen::Index paths_;
};

}  // namespace teamsmp
