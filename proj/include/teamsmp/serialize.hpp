#pragma once

// JSON and CSV views of solver results. Key order is fixed by insertion.

#include "teamsmp/baselines.hpp"
#include "teamsmp/config.hpp"
#include "teamsmp/optimize.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

namespace teamsmp {

inline ojson to_json(const DmStrategy& s) {
    ojson j;
    j["mode"] = to_string(s.mode);
    j["basis"] = to_string(s.basis);
    if (s.mode == StrategyMode::regular) {
        ojson steps = ojson::array();
        for (const auto& c : s.regular.coef) steps.push_back(to_json(c));
        j["coefficients"] = steps;
    } else {
        const auto& r = s.relaxed;
        j["atoms"] = to_json(r.atoms);
        j["bins"] = r.bins;
        ojson edges = ojson::array(), weights = ojson::array();
        for (const auto& e : r.edges) edges.push_back(to_json(e));
        for (const auto& w : r.weights) weights.push_back(to_json(w));
        j["edges"] = edges;
        j["weights"] = weights;
    }
    return j;
}

inline ojson to_json(const StrategyProfile& p) {
    ojson j;
    j["steps"] = p.steps;
    ojson dms = ojson::array();
    for (const auto& s : p.dm) dms.push_back(to_json(s));
    j["dm"] = dms;
    return j;
}

inline ojson to_json(const IterationRecord& r) {
    ojson j;
    j["iteration"] = r.iteration;
    j["dm"] = r.dm;
    j["cost"] = r.cost;
    j["standard_error"] = r.standard_error;
    j["gaps"] = r.gaps;
    j["team_gap"] = r.team_gap;
    j["noise_floor"] = r.noise_floor;
    j["damping"] = r.damping;
    j["accepted"] = r.accepted;
    return j;
}

inline ojson to_json(const GapReport& g) {
    ojson dms = ojson::array();
    for (const auto& d : g.dm)
        dms.push_back({{"gap", d.gap}, {"standard_error", d.standard_error}, {"noise_floor", d.noise_floor},
                       {"per_step", d.per_step}});
    return {{"team_gap", g.team_gap}, {"dm", dms}};
}

inline ojson to_json(const AssumptionReport& r) {
    return {{"probes", r.probes},
            {"bound", r.bound},
            {"drift_lipschitz", r.drift_lipschitz},
            {"drift_growth", r.drift_growth},
            {"diffusion_lipschitz", r.diffusion_lipschitz},
            {"diffusion_growth", r.diffusion_growth},
            {"costate_growth", r.costate_growth},
            {"flags", r.flags}};
}

inline ojson to_json(const SufficiencyReport& r) {
    return {{"probes", r.probes},
            {"min_eig_hamiltonian_x", r.min_eig_hamiltonian_x},
            {"min_eig_hamiltonian_u", r.min_eig_hamiltonian_u},
            {"min_eig_terminal", r.min_eig_terminal},
            {"threshold", r.threshold},
            {"flags", r.flags}};
}

inline ojson to_json(const GateauxReport& r) {
    return {{"adjoint_derivative", r.adjoint_derivative},
            {"base_cost", r.base_cost},
            {"epsilons", r.epsilons},
            {"finite_difference", r.finite_difference},
            {"relative_discrepancy", r.relative_discrepancy}};
}

inline ojson to_json(const RiccatiSolution& s) {
    ojson j;
    j["steps"] = s.grid.steps;
    j["horizon"] = s.grid.horizon;
    j["value"] = s.value;
    j["halving_change"] = s.halving_change;
    j["P0"] = to_json(s.P.front());
    j["p0"] = to_json(s.linear.front());
    j["c0"] = s.offset.front();
    ojson nodes = ojson::array();
    for (std::size_t k = 0; k < s.P.size(); ++k) {
        ojson n;
        n["t"] = s.grid.node(static_cast<int>(k));
        n["P"] = to_json(s.P[k]);
        n["p"] = to_json(s.linear[k]);
        n["c"] = s.offset[k];
        n["gain"] = to_json(s.gain[k]);
        n["feedforward"] = to_json(s.feedforward[k]);
        nodes.push_back(n);
    }
    j["nodes"] = nodes;
    return j;
}

inline ojson to_json(const TreeSlot& s) { return {{"dm", s.dm}, {"period", s.period}, {"cell", s.cell}}; }

/// One row per iteration record.
inline void write_convergence_csv(std::ostream& os, const std::vector<IterationRecord>& h, std::size_t dms) {
    os << "iteration,dm,cost,standard_error,team_gap,noise_floor,damping,accepted";
    for (std::size_t i = 0; i < dms; ++i) os << ",gap_" << i;
    os << '\n' << std::setprecision(17);
    for (const auto& r : h) {
        os << r.iteration << ',' << r.dm << ',' << r.cost << ',' << r.standard_error << ',' << r.team_gap << ','
           << r.noise_floor << ',' << r.damping << ',' << (r.accepted ? 1 : 0);
        for (std::size_t i = 0; i < dms; ++i) os << ',' << (i < r.gaps.size() ? r.gaps[i] : 0.0);
        os << '\n';
    }
}

inline void write_json_file(const std::string& path, const ojson& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

}  // namespace teamsmp
