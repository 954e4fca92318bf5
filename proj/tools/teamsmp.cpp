// Command-line front end: one verb per run mode.

#include "teamsmp/run.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Seed override (beats TEAMSMP_SEED and the file)");
    cmd->add_option("--out", o.out, "Output directory override");
    cmd->add_option("--mode", o.mode, "Strategy mode override")->check(CLI::IsMember({"regular", "relaxed"}));
}

int execute(teamsmp::RunMode mode, const Options& o) {
    teamsmp::RunConfig c;
    try {
        c = teamsmp::load_config(o.config, o.seed);
    } catch (const teamsmp::ConfigError& e) {
        const std::string dir = o.out.value_or(".");
        std::filesystem::create_directories(dir);
        teamsmp::write_json_file(dir + "/error.json", {{"kind", "config"},
                                                       {"field", e.field()},
                                                       {"line", e.line()},
                                                       {"message", e.what()},
                                                       {"status", teamsmp::kExitConfig}});
        std::cerr << "error: " << e.what() << '\n';
        return teamsmp::kExitConfig;
    }
    c.mode = mode;
    if (o.out) c.output.dir = *o.out;
    if (o.mode) c.numerics.strategy_mode = *o.mode == "relaxed" ? teamsmp::StrategyMode::relaxed
                                                                : teamsmp::StrategyMode::regular;
    if (mode == teamsmp::RunMode::tree && !c.tree.present) {
        std::cerr << "error: tree: the configuration has no tree block\n";
        return teamsmp::kExitConfig;
    }
    return teamsmp::run(c);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Team-optimal decentralized stochastic control via the maximum principle"};
    app.require_subcommand(1);
    struct Verb {
        const char* name;
        const char* help;
        teamsmp::RunMode mode;
    };
    const Verb verbs[] = {
        {"solve", "Person-by-person optimization", teamsmp::RunMode::team_pbp},
        {"evaluate", "Cost and stationarity gaps of the initial strategy", teamsmp::RunMode::evaluate_only},
        {"oracle", "Riccati baseline for linear-quadratic problems", teamsmp::RunMode::oracle},
        {"check", "Assumption, sufficiency and Gateaux identity checks", teamsmp::RunMode::checks_only},
        {"tree", "Exhaustive enumeration on a binary scenario tree", teamsmp::RunMode::tree},
    };
    Options opts;
    std::optional<teamsmp::RunMode> chosen;
    for (const auto& v : verbs) {
        auto* cmd = app.add_subcommand(v.name, v.help);
        add_common(cmd, opts);
        cmd->callback([&chosen, mode = v.mode] { chosen = mode; });
    }
    CLI11_PARSE(app, argc, argv);
    return execute(*chosen, opts);
}
