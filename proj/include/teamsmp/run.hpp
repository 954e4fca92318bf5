#pragma once

// Orchestration of one configured run and its artifacts.
//
// run.json layout (keys in this order): format, status, mode, input_hash,
// config, results, timing. Everything except the timing block is a pure
// function of the configuration.

#include "teamsmp/hash.hpp"
#include "teamsmp/serialize.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>

namespace teamsmp {

enum ExitStatus : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitDivergence = 3 };

namespace detail {

inline PbpConfig pbp_config(const RunConfig& c) {
    const auto& x = c.numerics;
    PbpConfig cfg;
    cfg.max_iters = x.max_iters;
    cfg.gap_tol = x.gap_tol;
    cfg.paths = x.paths;
    cfg.steps = x.steps;
    cfg.seed = c.seed;
    cfg.damping = x.damping;
    cfg.hamiltonian.grid_points = x.atoms;
    cfg.hamiltonian.regression.ridge_relative = x.ridge_relative;
    cfg.hamiltonian.regression.two_fold = x.two_fold;
    cfg.adjoint.regression = cfg.hamiltonian.regression;
    cfg.simulation.workers = x.workers;
    return cfg;
}

inline StrategyProfile starting_profile(const RunConfig& c, const TeamProblem& p) {
    const auto& x = c.numerics;
    if (x.strategy_mode == StrategyMode::relaxed) {
        if (x.initial_strategy == "riccati")
            throw ConfigError("numerics.initial_strategy", "riccati start requires regular strategies", 0);
        return initial_profile(p, x.steps, StrategyMode::relaxed, x.atoms, x.bins);
    }
    if (x.initial_strategy == "riccati")
        return riccati_profile(p, solve_riccati(c.family, TimeGrid(x.steps, p.horizon)));
    return initial_profile(p, x.steps, StrategyMode::regular);
}

inline StrategyProfile direction_profile(const RunConfig& c, const TeamProblem& p) {
    std::vector<Vector> acts;
    std::size_t off = 0;
    const auto& dir = c.numerics.direction;
    if (!dir.empty() && dir.size() != static_cast<std::size_t>(p.d))
        throw ConfigError("numerics.direction", "needs " + std::to_string(p.d) + " entries (one per action coordinate)", 0);
    for (const auto& s : p.subsystems) {
        Vector a = Vector::Ones(s.action_dim);
        if (!dir.empty())
            for (int j = 0; j < s.action_dim; ++j) a[j] = dir[off + static_cast<std::size_t>(j)];
        off += static_cast<std::size_t>(s.action_dim);
        acts.push_back(a);
    }
    return constant_profile(p, c.numerics.steps, acts);
}

// Forward ensemble, read from or stored in the cache when one is configured.
inline PathEnsemble cached_forward(const RunConfig& c, const TeamProblem& p, const StrategyProfile& s,
                                   const TimeGrid& grid, ojson& info) {
    const SimulationOptions sim{c.numerics.workers};
    const StrategyControl control(p, s);
    if (c.output.cache_dir.empty()) return simulate_forward(p, control, grid, c.numerics.paths, c.seed, sim);
    ojson key;
    key["problem"] = config_echo(c)["problem"];
    key["steps"] = grid.steps;
    key["paths"] = c.numerics.paths;
    key["seed"] = c.seed;
    key["strategy"] = to_json(s);
    const std::string digest = hash::sha256_hex(key.dump());
    const auto path = std::filesystem::path(c.output.cache_dir) / (digest + ".ens");
    info = {{"key", digest}, {"hit", false}};
    if (std::filesystem::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        PathEnsemble e = read_ensemble_binary(in);
        info["hit"] = true;
        return e;
    }
    PathEnsemble e = simulate_forward(p, control, grid, c.numerics.paths, c.seed, sim);
    std::filesystem::create_directories(c.output.cache_dir);
    std::ofstream out(path, std::ios::binary);
    write_ensemble_binary(out, e);
    return e;
}

inline void write_optional_csvs(const RunConfig& c, const std::filesystem::path& dir, const PathEnsemble& e,
                                const AdjointEnsemble* a) {
    if (c.output.ensemble_csv) {
        std::ofstream os(dir / "ensemble.csv");
        write_ensemble_csv(os, e);
    }
    if (c.output.adjoint_csv && a) {
        std::ofstream os(dir / "adjoint.csv");
        write_adjoint_csv(os, *a);
    }
}

// FIS features stand in for noise-history information only when the
// diffusion is constant and invertible; otherwise the iteration is heuristic.
inline ojson information_regime(const RunConfig& c, const TeamProblem& p) {
    bool fis = false;
    for (const auto& is : p.info) fis |= is.kind == InfoKind::fis;
    const Matrix S = diffusion_of(c.family, p.n, p.m);
    const bool constant = p.diffusion_state_independent;
    const bool invertible = S.rows() == S.cols() && Eigen::FullPivLU<Matrix>(S).isInvertible();
    return {{"uses_fis", fis},
            {"diffusion_constant", constant},
            {"diffusion_invertible", invertible},
            {"heuristic", fis && !(constant && invertible)}};
}

inline ojson solve_mode(const RunConfig& c, const TeamProblem& p, const std::filesystem::path& dir, ojson& timing) {
    const PbpConfig cfg = pbp_config(c);
    const PbpResult res = person_by_person_solve(p, starting_profile(c, p), cfg);
    ojson r;
    r["status"] = res.status;
    r["converged"] = res.converged;
    r["iterations"] = res.iterations;
    r["cost"] = {{"mean", res.cost.mean}, {"standard_error", res.cost.standard_error}};
    r["final_gaps"] = to_json(res.final_gaps);
    r["information_regime"] = information_regime(c, p);
    ojson hist = ojson::array();
    ojson secs = ojson::array();
    for (const auto& h : res.history) {
        hist.push_back(to_json(h));
        secs.push_back(h.wall_seconds);
    }
    r["history"] = hist;
    r["strategy"] = to_json(res.profile);
    timing["iteration_wall_seconds"] = secs;
    {
        std::ofstream os(dir / "convergence.csv");
        write_convergence_csv(os, res.history, p.dm_count());
    }
    if (c.output.ensemble_csv || c.output.adjoint_csv || !c.output.cache_dir.empty()) {
        const TimeGrid grid(c.numerics.steps, p.horizon);
        ojson cache;
        const PathEnsemble e = cached_forward(c, p, res.profile, grid, cache);
        if (!cache.is_null()) r["cache"] = cache;
        if (c.output.adjoint_csv) {
            const AdjointEnsemble a = solve_adjoint(p, StrategyControl(p, res.profile), e, cfg.adjoint);
            write_optional_csvs(c, dir, e, &a);
        } else {
            write_optional_csvs(c, dir, e, nullptr);
        }
    }
    return r;
}

inline ojson evaluate_mode(const RunConfig& c, const TeamProblem& p, const std::filesystem::path& dir) {
    const PbpConfig cfg = pbp_config(c);
    const TimeGrid grid(c.numerics.steps, p.horizon);
    const StrategyProfile s = starting_profile(c, p);
    ojson cache;
    const PathEnsemble e = cached_forward(c, p, s, grid, cache);
    const StrategyControl control(p, s);
    const auto slices = record_slices(control, e);
    const AdjointEnsemble a = solve_adjoint(p, slices, e, cfg.adjoint);
    const CostEstimate J = summarize_cost(e.path_cost);
    ojson r;
    r["cost"] = {{"mean", J.mean}, {"standard_error", J.standard_error}};
    r["gaps"] = to_json(stationarity_gap(p, s, e, a, slices, cfg.hamiltonian));
    r["information_regime"] = information_regime(c, p);
    r["strategy"] = to_json(s);
    if (!cache.is_null()) r["cache"] = cache;
    write_optional_csvs(c, dir, e, &a);
    return r;
}

inline ojson check_mode(const RunConfig& c, const TeamProblem& p) {
    const auto& x = c.numerics;
    const PbpConfig cfg = pbp_config(c);
    const TimeGrid grid(x.steps, p.horizon);
    const StrategyProfile base = starting_profile(c, p);
    ojson r;
    r["assumptions"] = to_json(validate_assumptions(p, x.probe_count, c.seed, x.assumption_bound));
    r["sufficiency"] = to_json(check_sufficiency(p, x.probe_count, c.seed));
    if (base.dm.front().mode == StrategyMode::regular) {
        const StrategyProfile dir = direction_profile(c, p);
        r["gateaux"] = to_json(gateaux_identity_check(p, base, dir, x.epsilons, grid, x.paths, c.seed, cfg.adjoint,
                                                      cfg.simulation));
        const auto v = variational_check(p, base, dir, x.epsilons, grid, x.paths, c.seed, cfg.simulation);
        r["variational"] = {{"epsilons", v.epsilons}, {"residual", v.residual}};
    }
    return r;
}

inline ojson oracle_mode(const RunConfig& c, const TeamProblem& p, const std::filesystem::path& dir) {
    const TimeGrid grid(c.numerics.steps, p.horizon);
    const RiccatiSolution sol = solve_riccati(c.family, grid);
    write_json_file((dir / "riccati.json").string(), to_json(sol));
    ojson r;
    r["riccati_file"] = "riccati.json";
    r["value"] = sol.value;
    r["P0"] = to_json(sol.P.front());
    r["halving_change"] = sol.halving_change;
    try {
        const StrategyProfile prof = riccati_profile(p, sol);
        const CostEstimate J = evaluate_cost(p, prof, grid, c.numerics.paths, c.seed, {c.numerics.workers});
        r["comparison"] = {{"monte_carlo_cost", J.mean},
                           {"standard_error", J.standard_error},
                           {"riccati_value", sol.value},
                           {"z_score", J.standard_error > 0 ? (J.mean - sol.value) / J.standard_error : 0.0}};
    } catch (const ModelError& e) {
        r["comparison"] = {{"skipped", e.what()}};
    }
    return r;
}

inline DiscreteTreeProblem tree_problem(const RunConfig& c, const TeamProblem& p) {
    DiscreteTreeProblem t;
    t.problem = p;
    t.periods = c.tree.periods;
    t.dt = c.tree.dt;
    t.x0 = c.tree.x0;
    t.actions = c.tree.actions;
    t.validate();
    return t;
}

inline ojson tree_mode(const RunConfig& c, const TeamProblem& p, const std::filesystem::path& dir) {
    const DiscreteTreeProblem t = tree_problem(c, p);
    const TreeEnumerator en(t);
    const TeamOptimum opt = enumerate_team_optimum(t);
    ojson tree;
    ojson slots = ojson::array();
    for (const auto& s : en.slots()) slots.push_back(to_json(s));
    tree["slots"] = slots;
    tree["profile_count"] = static_cast<std::uint64_t>(en.profile_count());
    tree["min_cost"] = opt.min_cost;
    ojson optimal = ojson::array();
    for (auto id : opt.optimal) {
        const auto prof = en.decode(id);
        optimal.push_back({{"id", id}, {"actions", prof}, {"smp_verified", verify_discrete_smp(t, prof).passed}});
    }
    tree["optimal"] = optimal;
    if (en.profile_count() <= 1e5) {
        ojson st = ojson::array();
        for (auto id : pbp_stationary_profiles(t))
            st.push_back({{"id", id}, {"cost", opt.costs[static_cast<std::size_t>(id)]}});
        tree["pbp_stationary"] = st;
    }
    const auto mc = tree_cost_mc(t, en.decode(opt.optimal.front()), c.numerics.paths, c.seed);
    tree["monte_carlo"] = {{"samples", c.numerics.paths}, {"mean", mc.first}, {"standard_error", mc.second}};
    write_json_file((dir / "tree.json").string(), tree);
    ojson r;
    r["tree_file"] = "tree.json";
    r["profile_count"] = tree["profile_count"];
    r["min_cost"] = opt.min_cost;
    r["optimal_count"] = opt.optimal.size();
    r["monte_carlo"] = tree["monte_carlo"];
    return r;
}

inline int write_error(const std::filesystem::path& dir, int status, ojson err, std::ostream& log) {
    err["status"] = status;
    log << "error: " << err.value("message", std::string("unknown")) << '\n';
    try {
        std::filesystem::create_directories(dir);
        write_json_file((dir / "error.json").string(), err);
    } catch (const std::exception& e) {
        log << "error: could not write error.json: " << e.what() << '\n';
    }
    return status;
}

}  // namespace detail

/// Executes the configured mode and writes its artifacts into c.output.dir.
inline int run(const RunConfig& c, std::ostream& log = std::cerr) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const std::filesystem::path dir(c.output.dir);
    try {
        std::filesystem::create_directories(dir);
        const TeamProblem p = problem_from(c);
        const ojson echo = config_echo(c);
        ojson j;
        j["format"] = "teamsmp-run/1";
        j["status"] = "ok";
        j["mode"] = to_string(c.mode);
        j["input_hash"] = hash::git_blob_hash(echo.dump());
        j["config"] = echo;
        ojson timing;
        switch (c.mode) {
            case RunMode::team_pbp: j["results"] = detail::solve_mode(c, p, dir, timing); break;
            case RunMode::evaluate_only: j["results"] = detail::evaluate_mode(c, p, dir); break;
            case RunMode::checks_only: j["results"] = detail::check_mode(c, p); break;
            case RunMode::oracle: j["results"] = detail::oracle_mode(c, p, dir); break;
            case RunMode::tree: j["results"] = detail::tree_mode(c, p, dir); break;
        }
        timing["total_wall_seconds"] = std::chrono::duration<double>(clock::now() - start).count();
        j["timing"] = timing;
        write_json_file((dir / "run.json").string(), j);
        log << "wrote " << (dir / "run.json").string() << '\n';
        return kExitOk;
    } catch (const ConfigError& e) {
        return detail::write_error(dir, kExitConfig,
                                   {{"kind", "config"}, {"field", e.field()}, {"line", e.line()}, {"message", e.what()}},
                                   log);
    } catch (const ModelError& e) {
        return detail::write_error(dir, kExitConfig, {{"kind", "model"}, {"message", e.what()}}, log);
    } catch (const PbpDivergence& e) {
        const auto dump = dir / "divergence_iterate.json";
        write_json_file(dump.string(), {{"iteration", e.iteration()},
                                        {"path", e.path()},
                                        {"step", e.step()},
                                        {"strategy", to_json(e.last_profile())}});
        return detail::write_error(dir, kExitDivergence,
                                   {{"kind", "divergence"}, {"message", e.what()}, {"iterate_dump", dump.string()}},
                                   log);
    } catch (const DivergenceError& e) {
        return detail::write_error(dir, kExitDivergence,
                                   {{"kind", "divergence"}, {"message", e.what()}, {"path", e.path()}, {"step", e.step()}},
                                   log);
    } catch (const RegressionError& e) {
        return detail::write_error(dir, kExitFailure,
                                   {{"kind", "regression"}, {"message", e.what()}, {"step", e.step()}}, log);
    } catch (const std::exception& e) {
        return detail::write_error(dir, kExitFailure, {{"kind", "internal"}, {"message", e.what()}}, log);
    }
}

}  // namespace teamsmp
