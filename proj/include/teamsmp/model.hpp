#pragma once

// Distributed decision problems: subsystems, action boxes, information
// structures, the evaluable coefficient maps and their state derivatives.

#include "teamsmp/rng.hpp"
#include "teamsmp/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace teamsmp {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double clamp(double v) const { return std::clamp(v, lo, hi); }
    double center() const { return 0.5 * (lo + hi); }
};

struct SubsystemSpec {
    int state_dim = 1;
    int action_dim = 1;
    int noise_dim = 1;
    std::vector<Interval> action_box;  // one interval per action coordinate

    void validate(std::size_t index) const {
        const auto where = "subsystem " + std::to_string(index);
        if (state_dim < 1 || action_dim < 1 || noise_dim < 1)
            throw ModelError(where + ": state_dim, action_dim and noise_dim must be >= 1");
        if (action_box.size() != static_cast<std::size_t>(action_dim))
            throw ModelError(where + ": action_box needs " + std::to_string(action_dim) +
                             " intervals, got " + std::to_string(action_box.size()));
        for (const auto& iv : action_box) {
            if (!(iv.lo <= iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
                throw ModelError(where + ": action_box requires finite lo <= hi");
        }
    }
};

enum class InfoKind { nis, fis };
enum class Memory { markov_current, full_path_features };
enum class Basis { polynomial_deg1, polynomial_deg2, custom };

inline const char* to_string(InfoKind k) { return k == InfoKind::nis ? "NIS" : "FIS"; }
inline const char* to_string(Memory m) {
    return m == Memory::markov_current ? "markov_current" : "full_path_features";
}
inline const char* to_string(Basis b) {
    switch (b) {
        case Basis::polynomial_deg1: return "polynomial_deg1";
        case Basis::polynomial_deg2: return "polynomial_deg2";
        default: return "custom";
    }
}

/// What one decision maker sees.
///
/// NIS: the Brownian paths of the listed subsystems (plus their initial
/// states when those are random). FIS: z = h(x) where h selects the state
/// coordinates of the listed subsystems, optionally followed by a linear map.
/// With full_path_features the current value is augmented by exponentially
/// weighted path summaries, one per entry of path_rates.
struct InformationStructure {
    InfoKind kind = InfoKind::fis;
    std::vector<int> sources;
    Memory memory = Memory::markov_current;
    std::vector<double> path_rates{1.0, 4.0};
    Matrix observation;  // FIS only; empty means plain coordinate selection
    Basis basis = Basis::polynomial_deg2;
    std::function<Matrix(const Matrix&)> custom_basis;  // rows = paths, for Basis::custom

    void validate(std::size_t dm, std::size_t subsystem_count, int selected_dim) const {
        const auto where = "info structure of DM " + std::to_string(dm);
        if (sources.empty()) throw ModelError(where + ": sources must be nonempty");
        for (int s : sources) {
            if (s < 0 || static_cast<std::size_t>(s) >= subsystem_count)
                throw ModelError(where + ": source index " + std::to_string(s) + " out of range");
        }
        if (kind == InfoKind::fis && observation.size() > 0) {
            if (observation.cols() != selected_dim)
                throw ModelError(where + ": observation map needs " + std::to_string(selected_dim) +
                                 " columns, got " + std::to_string(observation.cols()));
            if (observation.rows() < 1)
                throw ModelError(where + ": observation map output dimension must be >= 1");
        }
        if (memory == Memory::full_path_features) {
            for (double r : path_rates)
                if (!(r >= 0.0) || !std::isfinite(r))
                    throw ModelError(where + ": path_rates must be finite and nonnegative");
        }
        if (basis == Basis::custom && !custom_basis)
            throw ModelError(where + ": custom basis requested without a feature function");
    }
};

struct InitialState {
    Vector mean;
    Vector stddev;  // empty or all zero means fixed initial state

    bool is_random() const { return stddev.size() > 0 && (stddev.array() > 0.0).any(); }
};

using DriftMap = std::function<void(double, VecIn, VecIn, VecOut)>;
using DiffusionMap = std::function<void(double, VecIn, VecIn, MatOut)>;
using RunningCostMap = std::function<double(double, VecIn, VecIn)>;
using TerminalCostMap = std::function<double(VecIn)>;
using DriftJacobianMap = std::function<void(double, VecIn, VecIn, MatOut)>;
// Output is n x (n*m); column block j holds d sigma / d x_j.
using DiffusionJacobianMap = std::function<void(double, VecIn, VecIn, MatOut)>;
using RunningGradientMap = std::function<void(double, VecIn, VecIn, VecOut)>;
using TerminalGradientMap = std::function<void(VecIn, VecOut)>;
using HamiltonianMap = std::function<double(double, VecIn, VecIn, MatIn, VecIn)>;

enum class FamilyTag { linear_quadratic, bilinear, cascade_ss, custom };

inline const char* to_string(FamilyTag t) {
    switch (t) {
        case FamilyTag::linear_quadratic: return "linear_quadratic";
        case FamilyTag::bilinear: return "bilinear";
        case FamilyTag::cascade_ss: return "cascade_ss";
        default: return "custom";
    }
}

// User-supplied maps for FamilyTag::custom. Missing derivative maps are
// replaced by central finite differences.
struct CustomMaps {
    std::string name;
    DriftMap drift;
    DiffusionMap diffusion;
    RunningCostMap running_cost;
    TerminalCostMap terminal_cost;
    DriftJacobianMap drift_jac_x;
    DiffusionJacobianMap diffusion_jac_x;
    RunningGradientMap running_cost_grad_x;
    TerminalGradientMap terminal_cost_grad_x;
    bool diffusion_state_independent = false;
    bool diffusion_control_independent = false;
    bool control_quadratic = false;  // H is a polynomial of degree <= 2 in u
};

/// Coefficient arrays of a built-in family.
///
/// linear_quadratic: f = A x + B u, sigma = diag-block(noise_scale) (or
/// diffusion_matrix), l = x'Qx + q'x + u'Ru, phi = x'Gx + g'x.
/// bilinear: adds sum_l u_l N_l x to the drift and scales row a of sigma by
/// (1 + e_a x_a) with e = noise_state_gain.
/// cascade_ss: linear_quadratic restricted to the two-subsystem cascade where
/// subsystem 1 ignores subsystem 2.
struct ModelFamily {
    FamilyTag tag = FamilyTag::linear_quadratic;
    double horizon = 1.0;
    std::vector<SubsystemSpec> subsystems;
    Matrix A, B;
    Vector noise_scale;
    Matrix diffusion_matrix;
    Matrix Q_cost, R_cost, G_terminal;
    Vector q_linear, g_linear;
    std::vector<Matrix> bilinear;
    Vector noise_state_gain;
    InitialState initial;
    CustomMaps custom;
};

struct TeamProblem {
    double horizon = 1.0;
    std::vector<SubsystemSpec> subsystems;
    std::vector<InformationStructure> info;
    int n = 0, d = 0, m = 0;
    std::vector<int> state_offset, action_offset, noise_offset;

    DriftMap drift;
    DiffusionMap diffusion;
    RunningCostMap running_cost;
    TerminalCostMap terminal_cost;
    DriftJacobianMap drift_jac_x;
    DiffusionJacobianMap diffusion_jac_x;
    RunningGradientMap running_cost_grad_x;
    TerminalGradientMap terminal_cost_grad_x;
    HamiltonianMap hamiltonian;  // fused <f,psi> + tr(Q'sigma) + l

    InitialState initial;
    bool diffusion_state_independent = false;
    bool diffusion_control_independent = false;
    bool analytic_derivatives = false;
    // H(t, x, psi, Q, .) is a polynomial of degree <= 2 in the action
    bool control_quadratic = false;
    ModelFamily family;

    std::size_t dm_count() const { return subsystems.size(); }

    Vector project_action(std::size_t dm, const Vector& a) const {
        Vector out = a;
        const auto& box = subsystems[dm].action_box;
        for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = box[j].clamp(out[j]);
        return out;
    }

    // Coordinates x_sel seen by an FIS structure before the observation map.
    std::vector<int> selected_state_coordinates(const InformationStructure& is) const {
        std::vector<int> idx;
        for (int s : is.sources)
            for (int j = 0; j < subsystems[s].state_dim; ++j) idx.push_back(state_offset[s] + j);
        return idx;
    }

    std::vector<int> selected_noise_coordinates(const InformationStructure& is) const {
        std::vector<int> idx;
        for (int s : is.sources)
            for (int j = 0; j < subsystems[s].noise_dim; ++j) idx.push_back(noise_offset[s] + j);
        return idx;
    }
};

namespace detail {

inline void require_shape(const Matrix& a, Eigen::Index rows, Eigen::Index cols,
                          const std::string& name) {
    if (a.rows() != rows || a.cols() != cols) {
        std::ostringstream os;
        os << "dimension mismatch in " << name << ": expected " << rows << "x" << cols << ", got "
           << a.rows() << "x" << a.cols();
        throw ModelError(os.str());
    }
}

inline void require_length(const Vector& v, Eigen::Index len, const std::string& name) {
    if (v.size() != len) {
        std::ostringstream os;
        os << "dimension mismatch in " << name << ": expected length " << len << ", got "
           << v.size();
        throw ModelError(os.str());
    }
}

// a' M b without temporaries
inline double bilinear_form(VecIn a, const Matrix& M, VecIn b) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
        double c = 0.0;
        for (Eigen::Index i = 0; i < M.rows(); ++i) c += a[i] * M(i, j);
        s += c * b[j];
    }
    return s;
}

inline double quad_form(const Matrix& M, VecIn x) { return bilinear_form(x, M, x); }

inline double fd_step(double x) { return std::max(1e-6, 1e-6 * std::abs(x)); }

// Central-difference replacements for missing derivative maps.
inline DriftJacobianMap fd_drift_jacobian(DriftMap f, int n) {
    return [f = std::move(f), n](double t, VecIn x, VecIn u, MatOut out) {
        Vector xp = x, xm = x, fp(n), fm(n);
        for (int j = 0; j < n; ++j) {
            const double h = fd_step(x[j]);
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
            f(t, xp, u, fp);
            f(t, xm, u, fm);
            out.col(j) = (fp - fm) / (2.0 * h);
            xp[j] = xm[j] = x[j];
        }
    };
}

inline DiffusionJacobianMap fd_diffusion_jacobian(DiffusionMap s, int n, int m) {
    return [s = std::move(s), n, m](double t, VecIn x, VecIn u, MatOut out) {
        Vector xp = x, xm = x;
        Matrix sp(n, m), sm(n, m);
        for (int j = 0; j < n; ++j) {
            const double h = fd_step(x[j]);
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
            s(t, xp, u, sp);
            s(t, xm, u, sm);
            out.middleCols(j * m, m) = (sp - sm) / (2.0 * h);
            xp[j] = xm[j] = x[j];
        }
    };
}

inline RunningGradientMap fd_running_gradient(RunningCostMap l, int n) {
    return [l = std::move(l), n](double t, VecIn x, VecIn u, VecOut out) {
        Vector xp = x, xm = x;
        for (int j = 0; j < n; ++j) {
            const double h = fd_step(x[j]);
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
            out[j] = (l(t, xp, u) - l(t, xm, u)) / (2.0 * h);
            xp[j] = xm[j] = x[j];
        }
    };
}

inline TerminalGradientMap fd_terminal_gradient(TerminalCostMap phi, int n) {
    return [phi = std::move(phi), n](VecIn x, VecOut out) {
        Vector xp = x, xm = x;
        for (int j = 0; j < n; ++j) {
            const double h = fd_step(x[j]);
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
            out[j] = (phi(xp) - phi(xm)) / (2.0 * h);
            xp[j] = xm[j] = x[j];
        }
    };
}

inline HamiltonianMap composed_hamiltonian(const TeamProblem& p) {
    return [drift = p.drift, diffusion = p.diffusion, cost = p.running_cost, n = p.n, m = p.m](
               double t, VecIn x, VecIn psi, MatIn Q, VecIn u) {
        Vector f(n);
        Matrix s(n, m);
        drift(t, x, u, f);
        diffusion(t, x, u, s);
        return f.dot(psi) + (Q.array() * s.array()).sum() + cost(t, x, u);
    };
}

inline Matrix block_noise(const std::vector<SubsystemSpec>& subs, const Vector& scale, int n,
                          int m) {
    Matrix S = Matrix::Zero(n, m);
    int r = 0, c = 0;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        const int k = std::min(subs[i].state_dim, subs[i].noise_dim);
        for (int j = 0; j < k; ++j) S(r + j, c + j) = scale[static_cast<Eigen::Index>(i)];
        r += subs[i].state_dim;
        c += subs[i].noise_dim;
    }
    return S;
}

}  // namespace detail

/// Assembles a TeamProblem from a family description and one information
/// structure per decision maker.
inline TeamProblem build_problem(const ModelFamily& family,
                                 const std::vector<InformationStructure>& info) {
    TeamProblem p;
    p.family = family;
    p.horizon = family.horizon;
    p.subsystems = family.subsystems;
    p.info = info;
    if (!(family.horizon > 0.0) || !std::isfinite(family.horizon))
        throw ModelError("horizon must be a positive finite number");
    if (family.subsystems.empty()) throw ModelError("at least one subsystem is required");
    if (info.size() != family.subsystems.size())
        throw ModelError("dimension mismatch in info: expected " +
                         std::to_string(family.subsystems.size()) +
                         " information structures, got " + std::to_string(info.size()));
    for (std::size_t i = 0; i < p.subsystems.size(); ++i) {
        p.subsystems[i].validate(i);
        p.state_offset.push_back(p.n);
        p.action_offset.push_back(p.d);
        p.noise_offset.push_back(p.m);
        p.n += p.subsystems[i].state_dim;
        p.d += p.subsystems[i].action_dim;
        p.m += p.subsystems[i].noise_dim;
    }
    for (std::size_t i = 0; i < info.size(); ++i) {
        int sel = 0;
        for (int s : info[i].sources)
            if (s >= 0 && static_cast<std::size_t>(s) < p.subsystems.size())
                sel += p.subsystems[s].state_dim;
        info[i].validate(i, p.subsystems.size(), sel);
    }

    const int n = p.n, d = p.d, m = p.m;
    p.initial = family.initial;
    if (p.initial.mean.size() == 0) p.initial.mean = Vector::Zero(n);
    detail::require_length(p.initial.mean, n, "initial_state.mean");
    if (p.initial.stddev.size() > 0) {
        detail::require_length(p.initial.stddev, n, "initial_state.std");
        if ((p.initial.stddev.array() < 0.0).any())
            throw ModelError("initial_state.std must be nonnegative");
    }

    if (family.tag == FamilyTag::custom) {
        const auto& c = family.custom;
        if (!c.drift || !c.diffusion || !c.running_cost || !c.terminal_cost)
            throw ModelError("custom family requires drift, diffusion, running_cost and terminal_cost");
        p.drift = c.drift;
        p.diffusion = c.diffusion;
        p.running_cost = c.running_cost;
        p.terminal_cost = c.terminal_cost;
        p.drift_jac_x = c.drift_jac_x ? c.drift_jac_x : detail::fd_drift_jacobian(c.drift, n);
        p.diffusion_jac_x =
            c.diffusion_jac_x ? c.diffusion_jac_x : detail::fd_diffusion_jacobian(c.diffusion, n, m);
        p.running_cost_grad_x = c.running_cost_grad_x
                                    ? c.running_cost_grad_x
                                    : detail::fd_running_gradient(c.running_cost, n);
        p.terminal_cost_grad_x = c.terminal_cost_grad_x
                                     ? c.terminal_cost_grad_x
                                     : detail::fd_terminal_gradient(c.terminal_cost, n);
        p.diffusion_state_independent = c.diffusion_state_independent;
        p.diffusion_control_independent = c.diffusion_control_independent;
        p.control_quadratic = c.control_quadratic;
        p.analytic_derivatives = c.drift_jac_x && c.diffusion_jac_x && c.running_cost_grad_x &&
                                 c.terminal_cost_grad_x;
        p.hamiltonian = detail::composed_hamiltonian(p);
        return p;
    }

    detail::require_shape(family.A, n, n, "A");
    detail::require_shape(family.B, n, d, "B");
    detail::require_shape(family.Q_cost, n, n, "Q_cost");
    detail::require_shape(family.R_cost, d, d, "R_cost");
    detail::require_shape(family.G_terminal, n, n, "G_terminal");
    const Vector q_lin = family.q_linear.size() ? family.q_linear : Vector::Zero(n);
    const Vector g_lin = family.g_linear.size() ? family.g_linear : Vector::Zero(n);
    detail::require_length(q_lin, n, "q_linear");
    detail::require_length(g_lin, n, "g_linear");

    Matrix S;
    if (family.diffusion_matrix.size() > 0) {
        detail::require_shape(family.diffusion_matrix, n, m, "diffusion_matrix");
        S = family.diffusion_matrix;
    } else {
        detail::require_length(family.noise_scale, static_cast<Eigen::Index>(p.subsystems.size()),
                               "noise_scale");
        S = detail::block_noise(p.subsystems, family.noise_scale, n, m);
    }

    if (family.tag == FamilyTag::cascade_ss) {
        if (p.subsystems.size() != 2)
            throw ModelError("cascade_ss requires exactly two subsystems");
        const int n1 = p.subsystems[0].state_dim, d1 = p.subsystems[0].action_dim;
        const int m1 = p.subsystems[0].noise_dim;
        if (!family.A.block(0, n1, n1, n - n1).isZero(0.0))
            throw ModelError("cascade_ss: A must not feed x2 into subsystem 1");
        if (!family.B.block(0, d1, n1, d - d1).isZero(0.0))
            throw ModelError("cascade_ss: B must not feed u2 into subsystem 1");
        if (!S.block(0, m1, n1, m - m1).isZero(0.0))
            throw ModelError("cascade_ss: diffusion_matrix must not feed W2 into subsystem 1");
    }

    const Matrix A = family.A, B = family.B, Qc = family.Q_cost, Rc = family.R_cost,
                 Gt = family.G_terminal;
    const Matrix Qs = 0.5 * (Qc + Qc.transpose());
    const Matrix Rs = 0.5 * (Rc + Rc.transpose());
    const Matrix Gs = 0.5 * (Gt + Gt.transpose());

    p.running_cost = [Qc, Rc, q_lin](double, VecIn x, VecIn u) {
        return detail::quad_form(Qc, x) + q_lin.dot(x) + detail::quad_form(Rc, u);
    };
    p.terminal_cost = [Gt, g_lin](VecIn x) { return detail::quad_form(Gt, x) + g_lin.dot(x); };
    p.control_quadratic = true;
    p.running_cost_grad_x = [Qs, q_lin](double, VecIn x, VecIn, VecOut out) {
        out.noalias() = 2.0 * (Qs * x);
        out += q_lin;
    };
    p.terminal_cost_grad_x = [Gs, g_lin](VecIn x, VecOut out) {
        out.noalias() = 2.0 * (Gs * x);
        out += g_lin;
    };
    p.analytic_derivatives = true;

    if (family.tag == FamilyTag::bilinear) {
        if (family.bilinear.size() != static_cast<std::size_t>(d))
            throw ModelError("dimension mismatch in bilinear: expected " + std::to_string(d) +
                             " matrices, got " + std::to_string(family.bilinear.size()));
        for (std::size_t l = 0; l < family.bilinear.size(); ++l)
            detail::require_shape(family.bilinear[l], n, n, "bilinear[" + std::to_string(l) + "]");
        const Vector e = family.noise_state_gain.size() ? family.noise_state_gain : Vector::Zero(n);
        detail::require_length(e, n, "noise_state_gain");
        const auto N = family.bilinear;
        p.drift = [A, B, N](double, VecIn x, VecIn u, VecOut out) {
            out.noalias() = A * x;
            out.noalias() += B * u;
            for (std::size_t l = 0; l < N.size(); ++l) out.noalias() += u[l] * N[l] * x;
        };
        p.drift_jac_x = [A, N](double, VecIn, VecIn u, MatOut out) {
            out = A;
            for (std::size_t l = 0; l < N.size(); ++l) out += u[l] * N[l];
        };
        p.diffusion = [S, e](double, VecIn x, VecIn, MatOut out) {
            out = (Vector::Ones(x.size()) + e.cwiseProduct(x)).asDiagonal() * S;
        };
        p.diffusion_jac_x = [S, e, n, m](double, VecIn, VecIn, MatOut out) {
            out.setZero();
            for (int j = 0; j < n; ++j) out.block(j, j * m, 1, m) = e[j] * S.row(j);
        };
        p.diffusion_state_independent = e.isZero(0.0);
        p.diffusion_control_independent = true;
        p.hamiltonian = detail::composed_hamiltonian(p);
        return p;
    }

    p.drift = [A, B](double, VecIn x, VecIn u, VecOut out) {
        out.noalias() = A * x;
        out.noalias() += B * u;
    };
    p.drift_jac_x = [A](double, VecIn, VecIn, MatOut out) { out = A; };
    p.diffusion = [S](double, VecIn, VecIn, MatOut out) { out = S; };
    p.diffusion_jac_x = [](double, VecIn, VecIn, MatOut out) { out.setZero(); };
    p.diffusion_state_independent = true;
    p.diffusion_control_independent = true;
    // <Ax + Bu, psi> + tr(Q'S) + x'Qx + q'x + u'Ru
    p.hamiltonian = [A, B, S, Qc, Rc, q_lin](double, VecIn x, VecIn psi, MatIn Q, VecIn u) {
        return detail::bilinear_form(psi, A, x) + detail::bilinear_form(psi, B, u) +
               (Q.array() * S.array()).sum() + detail::quad_form(Qc, x) + q_lin.dot(x) +
               detail::quad_form(Rc, u);
    };
    return p;
}

/// Sampled Lipschitz and growth ratios. Advisory only.
struct AssumptionReport {
    int probes = 0;
    double bound = 0.0;
    double drift_lipschitz = 0.0;
    double drift_growth = 0.0;
    double diffusion_lipschitz = 0.0;
    double diffusion_growth = 0.0;
    double costate_growth = 0.0;
    std::vector<std::string> flags;

    bool passed() const { return flags.empty(); }
};

/// Probes the maps at random (t, x, y, u). State probes are spread over
/// radii 1 .. 10^max_log10_radius so that superlinear growth shows up.
inline AssumptionReport validate_assumptions(const TeamProblem& p, int probe_count,
                                             std::uint64_t seed, double bound = 100.0,
                                             double max_log10_radius = 3.0) {
    if (probe_count < 2) throw ModelError("validate_assumptions: probe_count must be >= 2");
    AssumptionReport rep;
    rep.probes = probe_count;
    rep.bound = bound;
    const rng::NormalStream stream(seed);
    const int n = p.n, d = p.d, m = p.m;
    Vector x(n), y(n), u(d), fx(n), fy(n), gx(n), gy(n);
    Matrix sx(n, m), sy(n, m);
    std::vector<double> z(static_cast<std::size_t>(2 * n));

    auto fail_if_nonfinite = [&](bool ok, const char* what, double t) {
        if (ok) return;
        std::ostringstream os;
        os << "non-finite " << what << " at probe t=" << t << " x=[" << x.transpose() << "] u=["
           << u.transpose() << "]";
        throw ModelError(os.str());
    };

    for (int k = 0; k < probe_count; ++k) {
        const auto path = static_cast<std::uint64_t>(k);
        const double t = p.horizon * stream.uniform(path, 0, rng::kProbe);
        const double radius = std::pow(10.0, max_log10_radius * stream.uniform(path, 1, rng::kProbe));
        stream.fill(path, 2, rng::kProbe, z, 2 * n);
        for (int j = 0; j < n; ++j) {
            x[j] = radius * z[static_cast<std::size_t>(j)];
            y[j] = x[j] + z[static_cast<std::size_t>(n + j)];
        }
        for (std::size_t i = 0, off = 0; i < p.subsystems.size(); ++i) {
            for (const auto& iv : p.subsystems[i].action_box) {
                const double w = stream.uniform(path, 3 + static_cast<std::uint32_t>(off), rng::kProbe);
                u[static_cast<Eigen::Index>(off)] = iv.lo + (iv.hi - iv.lo) * w;
                ++off;
            }
        }
        p.drift(t, x, u, fx);
        p.drift(t, y, u, fy);
        fail_if_nonfinite(fx.allFinite() && fy.allFinite(), "drift", t);
        p.diffusion(t, x, u, sx);
        p.diffusion(t, y, u, sy);
        fail_if_nonfinite(sx.allFinite() && sy.allFinite(), "diffusion", t);
        p.terminal_cost_grad_x(x, gx);
        p.running_cost_grad_x(t, x, u, gy);
        fail_if_nonfinite(gx.allFinite() && gy.allFinite(), "cost gradient", t);

        const double dxy = (x - y).norm();
        const double grow = 1.0 + x.norm();
        if (dxy > 0.0) {
            rep.drift_lipschitz = std::max(rep.drift_lipschitz, (fx - fy).norm() / dxy);
            rep.diffusion_lipschitz = std::max(rep.diffusion_lipschitz, (sx - sy).norm() / dxy);
        }
        rep.drift_growth = std::max(rep.drift_growth, fx.norm() / grow);
        rep.diffusion_growth = std::max(rep.diffusion_growth, sx.norm() / grow);
        rep.costate_growth = std::max(rep.costate_growth, (gx + gy).norm() / grow);
    }
    auto flag = [&](double v, const char* name) {
        if (v > bound) {
            std::ostringstream os;
            os << name << " ratio " << v << " exceeds bound " << bound;
            rep.flags.push_back(os.str());
        }
    };
    flag(rep.drift_lipschitz, "drift Lipschitz");
    flag(rep.drift_growth, "drift growth");
    flag(rep.diffusion_lipschitz, "diffusion Lipschitz");
    flag(rep.diffusion_growth, "diffusion growth");
    flag(rep.costate_growth, "costate growth");
    return rep;
}

}  // namespace teamsmp
