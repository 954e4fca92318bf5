#pragma once

// Information variables of each decision maker and the polynomial feature
// bases built on top of them. Variables at step k are computed by the same
// recursion during simulation and when re-derived from a stored ensemble.

#include "teamsmp/model.hpp"

#include <cmath>
#include <set>
#include <string>
#include <vector>

namespace teamsmp {

struct TimeGrid {
    int steps = 1;
    double horizon = 1.0;

    TimeGrid() = default;
    TimeGrid(int k, double t) : steps(k), horizon(t) {
        if (k < 1) throw ModelError("time grid needs at least one step");
        if (!(t > 0.0)) throw ModelError("time grid horizon must be positive");
    }

    double dt() const { return horizon / steps; }
    // t_K is exactly the horizon.
    double node(int k) const { return k >= steps ? horizon : k * dt(); }
};

/// Layout of one DM's information variables.
///
/// NIS order: [x0 of source subsystems when x0 is random] [W(t_k)] [Y_rate(t_k) per rate],
/// with Y(t) = int_0^t exp(-rate (t - s)) dW(s).
/// FIS order: [z(t_k)] [S_rate(t_k) per rate], with S(t) = int_0^t exp(-rate (t - s)) z(s) ds.
struct InfoLayout {
    InfoKind kind = InfoKind::fis;
    std::vector<int> coords;  // state coordinates (FIS) or noise coordinates (NIS)
    std::vector<int> initial_coords;
    Matrix observation;
    std::vector<double> rates;
    int base_dim = 0;
    int dim = 0;
    std::vector<std::string> tags;

    int memory_dim() const { return static_cast<int>(rates.size()) * base_dim; }
};

inline InfoLayout make_layout(const TeamProblem& p, const InformationStructure& is, std::size_t dm) {
    InfoLayout L;
    L.kind = is.kind;
    if (is.memory == Memory::full_path_features) L.rates = is.path_rates;
    auto rate_tag = [](double r) {
        std::string s = std::to_string(r);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    if (is.kind == InfoKind::nis) {
        L.coords = p.selected_noise_coordinates(is);
        L.base_dim = static_cast<int>(L.coords.size());
        if (p.initial.is_random()) {
            for (int s : is.sources)
                for (int j = 0; j < p.subsystems[s].state_dim; ++j) {
                    const int c = p.state_offset[s] + j;
                    if (p.initial.stddev[c] > 0.0) L.initial_coords.push_back(c);
                }
        }
        for (int c : L.initial_coords) L.tags.push_back("x0[" + std::to_string(c) + "]");
        for (int c : L.coords) L.tags.push_back("W[" + std::to_string(c) + "]");
        for (double r : L.rates)
            for (int c : L.coords) L.tags.push_back("Y(" + rate_tag(r) + ")[" + std::to_string(c) + "]");
    } else {
        L.coords = p.selected_state_coordinates(is);
        L.observation = is.observation;
        L.base_dim = is.observation.size() > 0 ? static_cast<int>(is.observation.rows())
                                               : static_cast<int>(L.coords.size());
        std::string zname = "z";
        if (is.observation.size() > 0) zname += std::to_string(dm);
        for (int j = 0; j < L.base_dim; ++j) {
            L.tags.push_back(is.observation.size() > 0
                                 ? zname + "[" + std::to_string(j) + "]"
                                 : "x[" + std::to_string(L.coords[static_cast<std::size_t>(j)]) + "]");
        }
        for (double r : L.rates)
            for (int j = 0; j < L.base_dim; ++j)
                L.tags.push_back("S(" + rate_tag(r) + ")" + L.tags[static_cast<std::size_t>(j)]);
    }
    L.dim = static_cast<int>(L.initial_coords.size()) + L.base_dim + L.memory_dim();
    return L;
}

inline InfoLayout make_layout(const TeamProblem& p, std::size_t dm) { return make_layout(p, p.info[dm], dm); }

/// Running path state for one DM over all paths (columns).
struct InfoTracker {
    InfoLayout layout;
    Matrix x0;      // |initial_coords| x M
    Matrix level;   // NIS: W(t_k) restricted to coords
    Matrix memory;  // rates * base_dim x M

    InfoTracker(InfoLayout L, const Matrix& x_initial)
        : layout(std::move(L)) {
        const auto M = x_initial.cols();
        x0.resize(static_cast<Eigen::Index>(layout.initial_coords.size()), M);
        for (std::size_t j = 0; j < layout.initial_coords.size(); ++j)
            x0.row(static_cast<Eigen::Index>(j)) = x_initial.row(layout.initial_coords[j]);
        level = Matrix::Zero(layout.kind == InfoKind::nis ? layout.base_dim : 0, M);
        memory = Matrix::Zero(layout.memory_dim(), M);
    }

    Matrix current_base(const Matrix& x) const {
        Matrix z(layout.base_dim, x.cols());
        if (layout.kind == InfoKind::nis) return level;
        for (std::size_t j = 0; j < layout.coords.size(); ++j)
            if (layout.observation.size() == 0)
                z.row(static_cast<Eigen::Index>(j)) = x.row(layout.coords[j]);
        if (layout.observation.size() > 0) {
            Matrix sel(static_cast<Eigen::Index>(layout.coords.size()), x.cols());
            for (std::size_t j = 0; j < layout.coords.size(); ++j)
                sel.row(static_cast<Eigen::Index>(j)) = x.row(layout.coords[j]);
            z.noalias() = layout.observation * sel;
        }
        return z;
    }

    // Variables at the current step given the current states x (n x M).
    Matrix variables(const Matrix& x) const {
        Matrix v(layout.dim, x.cols());
        const auto ni = static_cast<Eigen::Index>(layout.initial_coords.size());
        if (ni > 0) v.topRows(ni) = x0;
        v.middleRows(ni, layout.base_dim) = current_base(x);
        if (layout.memory_dim() > 0) v.bottomRows(layout.memory_dim()) = memory;
        return v;
    }

    // Moves from t_k to t_{k+1} using x(t_k) and the increment dW_k.
    void advance(const Matrix& x, const Matrix& dW, double dt) {
        const int b = layout.base_dim;
        if (layout.kind == InfoKind::nis) {
            Matrix inc(b, dW.cols());
            for (std::size_t j = 0; j < layout.coords.size(); ++j)
                inc.row(static_cast<Eigen::Index>(j)) = dW.row(layout.coords[j]);
            for (std::size_t r = 0; r < layout.rates.size(); ++r) {
                const double decay = std::exp(-layout.rates[r] * dt);
                auto blk = memory.middleRows(static_cast<Eigen::Index>(r) * b, b);
                blk = decay * blk + inc;
            }
            level += inc;
        } else if (!layout.rates.empty()) {
            const Matrix z = current_base(x);
            for (std::size_t r = 0; r < layout.rates.size(); ++r) {
                const double decay = std::exp(-layout.rates[r] * dt);
                auto blk = memory.middleRows(static_cast<Eigen::Index>(r) * b, b);
                blk = decay * (blk + dt * z);
            }
        }
    }
};

inline int basis_size(Basis b, int vars) {
    switch (b) {
        case Basis::polynomial_deg1: return 1 + vars;
        case Basis::polynomial_deg2: return 1 + vars + vars * (vars + 1) / 2;
        default: return -1;
    }
}

/// Expands variables (v x M, one column per path) into features (M x p).
/// Column 0 is always the intercept for the polynomial bases.
inline Matrix expand_basis(const Matrix& vars, Basis basis,
                           const std::function<Matrix(const Matrix&)>& custom = {}) {
    const auto v = static_cast<int>(vars.rows());
    const auto M = vars.cols();
    if (basis == Basis::custom) {
        if (!custom) throw ModelError("custom basis requested without a feature function");
        Matrix F = custom(vars.transpose());
        if (F.rows() != M) throw ModelError("custom basis returned wrong number of rows");
        return F;
    }
    Matrix F(M, basis_size(basis, v));
    F.col(0).setOnes();
    for (int a = 0; a < v; ++a) F.col(1 + a) = vars.row(a).transpose();
    if (basis == Basis::polynomial_deg2) {
        int c = 1 + v;
        for (int a = 0; a < v; ++a)
            for (int b = a; b < v; ++b)
                F.col(c++) = (vars.row(a).array() * vars.row(b).array()).matrix().transpose();
    }
    return F;
}

// Gradient of each polynomial feature with respect to the variables at one
// point; rows = features, cols = variables.
inline Matrix basis_gradient(const Eigen::Ref<const Vector>& v, Basis basis) {
    const auto nv = static_cast<int>(v.size());
    Matrix G = Matrix::Zero(basis_size(basis, nv), nv);
    for (int a = 0; a < nv; ++a) G(1 + a, a) = 1.0;
    if (basis == Basis::polynomial_deg2) {
        int c = 1 + nv;
        for (int a = 0; a < nv; ++a)
            for (int b = a; b < nv; ++b) {
                G(c, a) += v[b];
                G(c, b) += v[a];
                ++c;
            }
    }
    return G;
}

/// Variables of the full-information filtration: the state plus every path
/// statistic some DM's strategy may depend on that is not a function of x(t_k).
struct FullInfoLayout {
    // (dm, row) pairs pulled from the DM variable blocks, deduplicated by tag
    std::vector<std::pair<std::size_t, int>> extra;
    std::vector<std::string> tags;
    int n = 0;

    int dim() const { return n + static_cast<int>(extra.size()); }
};

inline FullInfoLayout make_full_layout(const TeamProblem& p) {
    FullInfoLayout F;
    F.n = p.n;
    std::set<std::string> seen;
    for (int j = 0; j < p.n; ++j) {
        F.tags.push_back("x[" + std::to_string(j) + "]");
        seen.insert(F.tags.back());
    }
    for (std::size_t i = 0; i < p.dm_count(); ++i) {
        const auto L = make_layout(p, i);
        const int skip = L.kind == InfoKind::fis ? L.base_dim : 0;
        for (int r = skip; r < L.dim; ++r) {
            const auto& tag = L.tags[static_cast<std::size_t>(r)];
            if (seen.insert(tag).second) {
                F.extra.emplace_back(i, r);
                F.tags.push_back(tag);
            }
        }
    }
    return F;
}

}  // namespace teamsmp
