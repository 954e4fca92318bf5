#pragma once

// Finite-atom action measures. A regular action is the one-atom case.

#include "teamsmp/model.hpp"

#include <cmath>
#include <vector>

namespace teamsmp {

/// One DM's action measures at one time step, for all M paths.
struct DmMeasureSlice {
    int action_dim = 1;
    int atom_count = 1;
    bool shared_atoms = false;
    Matrix atoms;    // shared: action_dim x A, otherwise (action_dim * A) x M
    Matrix weights;  // A x M, empty when A == 1

    bool dirac() const { return atom_count == 1; }

    double weight(int a, Eigen::Index r) const { return atom_count == 1 ? 1.0 : weights(a, r); }

    auto atom(int a, Eigen::Index r) const {
        return shared_atoms ? atoms.col(a).segment(0, action_dim)
                            : atoms.col(r).segment(static_cast<Eigen::Index>(a) * action_dim, action_dim);
    }

    static DmMeasureSlice from_actions(Matrix actions) {
        DmMeasureSlice s;
        s.action_dim = static_cast<int>(actions.rows());
        s.atoms = std::move(actions);
        return s;
    }
};

struct ActionSlice {
    std::vector<DmMeasureSlice> dm;

    bool all_dirac() const {
        for (const auto& s : dm)
            if (!s.dirac()) return false;
        return true;
    }

    // Full action vectors (d x M); only meaningful when all_dirac().
    Matrix dirac_actions() const {
        Eigen::Index d = 0, M = 0;
        for (const auto& s : dm) {
            d += s.action_dim;
            M = s.shared_atoms ? M : s.atoms.cols();
        }
        Matrix u(d, M);
        Eigen::Index off = 0;
        for (const auto& s : dm) {
            u.middleRows(off, s.action_dim) = s.atoms;
            off += s.action_dim;
        }
        return u;
    }
};

/// Calls fn(weight) once per atom combination of the product measure on
/// path r, with u holding the combined action. Zero-weight atoms are skipped.
/// slices[i] points at DM i's measure; the pointers may mix sources.
template <typename Fn>
void for_each_combo(const std::vector<const DmMeasureSlice*>& slices, Eigen::Index r, Vector& u,
                    Fn&& fn) {
    const std::size_t N = slices.size();
    std::vector<int> idx(N, 0);
    std::vector<Eigen::Index> off(N, 0);
    Eigen::Index o = 0;
    for (std::size_t i = 0; i < N; ++i) {
        off[i] = o;
        o += slices[i]->action_dim;
    }
    auto next_nonzero = [&](std::size_t i, int from) {
        const auto* s = slices[i];
        int a = from;
        while (a < s->atom_count && s->weight(a, r) == 0.0) ++a;
        return a;
    };
    for (std::size_t i = 0; i < N; ++i) {
        idx[i] = next_nonzero(i, 0);
        if (idx[i] >= slices[i]->atom_count) return;
    }
    while (true) {
        double w = 1.0;
        for (std::size_t i = 0; i < N; ++i) {
            const auto* s = slices[i];
            u.segment(off[i], s->action_dim) = s->atom(idx[i], r);
            w *= s->weight(idx[i], r);
        }
        fn(w);
        std::size_t i = 0;
        for (; i < N; ++i) {
            idx[i] = next_nonzero(i, idx[i] + 1);
            if (idx[i] < slices[i]->atom_count) break;
            idx[i] = next_nonzero(i, 0);
        }
        if (i == N) return;
    }
}

inline std::vector<const DmMeasureSlice*> pointers(const ActionSlice& s) {
    std::vector<const DmMeasureSlice*> out;
    for (const auto& d : s.dm) out.push_back(&d);
    return out;
}

/// Relaxed action at a single point: per DM a list of (weight, atom).
struct RelaxedAction {
    struct Atom {
        double weight;
        Vector action;
    };
    std::vector<std::vector<Atom>> dm;

    static RelaxedAction dirac(const TeamProblem& p, const Vector& u) {
        RelaxedAction ra;
        for (std::size_t i = 0; i < p.dm_count(); ++i)
            ra.dm.push_back({{1.0, u.segment(p.action_offset[i], p.subsystems[i].action_dim)}});
        return ra;
    }

    void validate(const TeamProblem& p) const {
        if (dm.size() != p.dm_count()) throw ModelError("relaxed action: wrong number of DMs");
        for (std::size_t i = 0; i < dm.size(); ++i) {
            double s = 0.0;
            for (const auto& a : dm[i]) {
                if (a.action.size() != p.subsystems[i].action_dim)
                    throw ModelError("relaxed action: atom dimension mismatch for DM " + std::to_string(i));
                if (a.weight < 0.0) throw ModelError("relaxed action: negative weight for DM " + std::to_string(i));
                s += a.weight;
            }
            if (std::abs(s - 1.0) > 1e-12)
                throw ModelError("relaxed action: weights of DM " + std::to_string(i) +
                                 " sum to " + std::to_string(s) + ", not 1");
        }
    }

    ActionSlice to_slice() const {
        ActionSlice s;
        for (const auto& atoms : dm) {
            DmMeasureSlice d;
            d.action_dim = static_cast<int>(atoms.front().action.size());
            d.atom_count = static_cast<int>(atoms.size());
            d.atoms.resize(static_cast<Eigen::Index>(d.action_dim) * d.atom_count, 1);
            if (d.atom_count > 1) d.weights.resize(d.atom_count, 1);
            for (int a = 0; a < d.atom_count; ++a) {
                d.atoms.col(0).segment(static_cast<Eigen::Index>(a) * d.action_dim, d.action_dim) =
                    atoms[static_cast<std::size_t>(a)].action;
                if (d.atom_count > 1) d.weights(a, 0) = atoms[static_cast<std::size_t>(a)].weight;
            }
            s.dm.push_back(std::move(d));
        }
        return s;
    }
};

enum class Coefficient { drift, diffusion, running_cost };

/// Measure average of f, sigma or l at (t, x): sum over atom combinations
/// of the product weight times the map. Returned as n x 1, n x m or 1 x 1.
inline Matrix relaxed_coefficient(const TeamProblem& p, Coefficient which, double t, const Vector& x,
                                  const RelaxedAction& ra) {
    ra.validate(p);
    const ActionSlice slice = ra.to_slice();
    Vector u(p.d);
    Matrix acc;
    Vector f(p.n);
    Matrix s(p.n, p.m);
    switch (which) {
        case Coefficient::drift: acc = Matrix::Zero(p.n, 1); break;
        case Coefficient::diffusion: acc = Matrix::Zero(p.n, p.m); break;
        case Coefficient::running_cost: acc = Matrix::Zero(1, 1); break;
    }
    for_each_combo(pointers(slice), 0, u, [&](double w) {
        switch (which) {
            case Coefficient::drift:
                p.drift(t, x, u, f);
                acc.col(0) += w * f;
                break;
            case Coefficient::diffusion:
                p.diffusion(t, x, u, s);
                acc += w * s;
                break;
            case Coefficient::running_cost: acc(0, 0) += w * p.running_cost(t, x, u); break;
        }
    });
    return acc;
}

}  // namespace teamsmp
