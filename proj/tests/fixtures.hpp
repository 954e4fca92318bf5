#pragma once

// Model fixtures shared by the test binaries.

#include "teamsmp/model.hpp"

#include <cmath>
#include <vector>

namespace fixtures {

using teamsmp::Matrix;
using teamsmp::Vector;

inline teamsmp::SubsystemSpec scalar_subsystem(double box = 5.0) {
    teamsmp::SubsystemSpec s;
    s.action_box = {{-box, box}};
    return s;
}

inline teamsmp::InformationStructure fis(std::vector<int> sources,
                                         teamsmp::Basis basis = teamsmp::Basis::polynomial_deg2) {
    teamsmp::InformationStructure is;
    is.kind = teamsmp::InfoKind::fis;
    is.sources = std::move(sources);
    is.basis = basis;
    return is;
}

inline teamsmp::InformationStructure nis(std::vector<int> sources,
                                         teamsmp::Memory memory = teamsmp::Memory::markov_current) {
    teamsmp::InformationStructure is;
    is.kind = teamsmp::InfoKind::nis;
    is.sources = std::move(sources);
    is.memory = memory;
    return is;
}

/// dx = (a x + b u) dt + s dW, cost q x^2 + r u^2 and g x(T)^2.
inline teamsmp::ModelFamily scalar_lq(double a, double b, double s, double q, double r, double g,
                                      double T = 1.0, double x0 = 1.0, double x0_std = 0.0, double box = 5.0) {
    teamsmp::ModelFamily f;
    f.tag = teamsmp::FamilyTag::linear_quadratic;
    f.horizon = T;
    f.subsystems = {scalar_subsystem(box)};
    f.A = Matrix::Constant(1, 1, a);
    f.B = Matrix::Constant(1, 1, b);
    f.noise_scale = Vector::Constant(1, s);
    f.Q_cost = Matrix::Constant(1, 1, q);
    f.R_cost = Matrix::Constant(1, 1, r);
    f.G_terminal = Matrix::Constant(1, 1, g);
    f.initial.mean = Vector::Constant(1, x0);
    f.initial.stddev = Vector::Constant(1, x0_std);
    return f;
}

/// Two coupled scalar subsystems, one DM each.
inline teamsmp::ModelFamily coupled_lq(double box = 5.0) {
    teamsmp::ModelFamily f;
    f.tag = teamsmp::FamilyTag::linear_quadratic;
    f.horizon = 1.0;
    f.subsystems = {scalar_subsystem(box), scalar_subsystem(box)};
    f.A.resize(2, 2);
    f.A << -0.5, 0.6, 0.4, -0.3;
    f.B = Matrix::Identity(2, 2);
    f.noise_scale = Vector::Ones(2);
    f.Q_cost.resize(2, 2);
    f.Q_cost << 1.0, 0.5, 0.5, 1.0;
    f.R_cost = Matrix::Identity(2, 2);
    f.G_terminal = 0.5 * Matrix::Identity(2, 2);
    f.initial.mean = Vector(2);
    f.initial.mean << 1.0, -0.5;
    return f;
}

/// dx = (a x + u x) dt + (s + c x) dW with quadratic costs.
inline teamsmp::ModelFamily scalar_bilinear(double a = -0.5, double n = 1.0, double s = 0.5, double c = 0.2) {
    teamsmp::ModelFamily f = scalar_lq(a, 0.0, s, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 2.0);
    f.tag = teamsmp::FamilyTag::bilinear;
    f.B = Matrix::Constant(1, 1, 0.5);
    f.bilinear = {Matrix::Constant(1, 1, n)};
    f.noise_state_gain = Vector::Constant(1, c);
    return f;
}

inline double tanh_gain(double t) { return std::tanh(1.0 - t); }

}  // namespace fixtures
