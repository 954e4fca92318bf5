#include "teamsmp/run.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using teamsmp::ojson;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("teamsmp_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int cli(const std::string& args, const std::string& env = "env -u TEAMSMP_SEED") {
    const std::string cmd = env + " '" + std::string(TEAMSMP_CLI) + "' " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

ojson read_json(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    return ojson::parse(in);
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "config.yaml";
    std::ofstream(p) << text;
    return p;
}

std::string configs(const std::string& name) { return std::string(TEAMSMP_CONFIGS) + "/" + name; }

// Scalar LQ with one FIS decision maker; q and the numerics are spliced in.
std::string scalar_yaml(double q, double g, const std::string& numerics, bool with_seed = true) {
    std::ostringstream os;
    os << "mode: team_pbp\n";
    if (with_seed) os << "seed: 42\n";
    os << "problem:\n"
          "  family: linear_quadratic\n"
          "  horizon: 1.0\n"
          "  subsystems:\n"
          "    - {state_dim: 1, action_dim: 1, noise_dim: 1, action_box: [[-5, 5]]}\n"
          "  A: [[0.0]]\n"
          "  B: [[1.0]]\n"
          "  noise_scale: [1.0]\n"
       << "  Q_cost: [[" << q << "]]\n"
       << "  R_cost: [[1.0]]\n"
       << "  G_terminal: [[" << g << "]]\n"
       << "  initial_state: {mean: [1.0]}\n"
          "  info:\n"
          "    - {kind: FIS, sources: [0]}\n"
          "numerics:\n"
       << numerics;
    return os.str();
}

const char* kSmallNumerics = "  steps: 20\n  paths: 2000\n  max_iters: 5\n";

}  // namespace

TEST_CASE("oracle verb writes the Riccati solution of the scalar problem", "[cli]") {
    const auto out = scratch("oracle");
    REQUIRE(cli("oracle --config " + configs("centralized_lq.yaml") + " --out " + out.string()) == 0);
    const ojson ric = read_json(out / "riccati.json");
    CHECK(ric["P0"][0][0].get<double>() == Catch::Approx(std::tanh(1.0)).epsilon(1e-6));
    CHECK(ric["nodes"].size() == 101);
    const ojson run = read_json(out / "run.json");
    CHECK(run["mode"] == "oracle");
    const auto& cmp = run["results"]["comparison"];
    CHECK(std::abs(cmp["z_score"].get<double>()) < 4.0);
}

TEST_CASE("evaluate verb reports zero cost for a zero-cost problem", "[cli]") {
    const auto out = scratch("evaluate_zero");
    const auto cfg = write_config(out, scalar_yaml(0.0, 0.0, kSmallNumerics));
    REQUIRE(cli("evaluate --config " + cfg.string() + " --out " + (out / "run").string()) == 0);
    const ojson run = read_json(out / "run" / "run.json");
    CHECK(run["results"]["cost"]["mean"].get<double>() == 0.0);
    CHECK(run["results"]["cost"]["standard_error"].get<double>() == 0.0);
}

TEST_CASE("run.json starts with the fixed key order", "[cli]") {
    const auto out = scratch("keys");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.0, kSmallNumerics));
    REQUIRE(cli("evaluate --config " + cfg.string() + " --out " + (out / "run").string()) == 0);
    const ojson run = read_json(out / "run" / "run.json");
    std::vector<std::string> keys;
    for (auto it = run.begin(); it != run.end(); ++it) keys.push_back(it.key());
    CHECK(keys == std::vector<std::string>{"format", "status", "mode", "input_hash", "config", "results", "timing"});
    CHECK(run["input_hash"].get<std::string>().size() == 40);
}

TEST_CASE("solve verb is deterministic apart from timing", "[cli]") {
    const auto out = scratch("determinism");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.5, kSmallNumerics));
    REQUIRE(cli("solve --config " + cfg.string() + " --out " + (out / "a").string()) == 0);
    REQUIRE(cli("solve --config " + cfg.string() + " --out " + (out / "b").string()) == 0);
    ojson a = read_json(out / "a" / "run.json");
    ojson b = read_json(out / "b" / "run.json");
    a.erase("timing");
    b.erase("timing");
    a["config"]["output"].erase("dir");
    b["config"]["output"].erase("dir");
    CHECK(a["results"].dump() == b["results"].dump());
    CHECK(read_text(out / "a" / "convergence.csv") == read_text(out / "b" / "convergence.csv"));
    CHECK(read_text(out / "a" / "convergence.csv").rfind("iteration,dm,cost,standard_error,team_gap", 0) == 0);
}

TEST_CASE("config echo parses back to the same configuration", "[cli]") {
    const auto out = scratch("echo");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.5, kSmallNumerics));
    REQUIRE(cli("evaluate --config " + cfg.string() + " --out " + (out / "run").string()) == 0);
    const ojson run = read_json(out / "run" / "run.json");
    const ojson echo = run["config"];
    const teamsmp::RunConfig back = teamsmp::parse_config(teamsmp::load_yaml(echo.dump()));
    CHECK(teamsmp::config_echo(back).dump() == echo.dump());
    CHECK(teamsmp::hash::git_blob_hash(echo.dump()) == run["input_hash"].get<std::string>());
}

TEST_CASE("seed precedence is flag, then environment, then file", "[cli]") {
    const auto out = scratch("seed");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.0, kSmallNumerics));
    REQUIRE(cli("evaluate --config " + cfg.string() + " --out " + (out / "file").string()) == 0);
    REQUIRE(cli("evaluate --config " + cfg.string() + " --out " + (out / "env").string(), "env TEAMSMP_SEED=99") == 0);
    REQUIRE(cli("evaluate --seed 7 --config " + cfg.string() + " --out " + (out / "flag").string(),
                "env TEAMSMP_SEED=99") == 0);
    const ojson f = read_json(out / "file" / "run.json")["config"];
    const ojson e = read_json(out / "env" / "run.json")["config"];
    const ojson g = read_json(out / "flag" / "run.json")["config"];
    CHECK(f["seed"] == 42);
    CHECK(f["seed_source"] == "config");
    CHECK(e["seed"] == 99);
    CHECK(e["seed_source"] == "env:TEAMSMP_SEED");
    CHECK(g["seed"] == 7);
    CHECK(g["seed_source"] == "flag");
}

TEST_CASE("environment seed may stand in for a missing file seed", "[cli]") {
    const auto out = scratch("seed_env_only");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.0, kSmallNumerics, false));
    CHECK(cli("evaluate --config " + cfg.string() + " --out " + (out / "run").string(), "env TEAMSMP_SEED=5") == 0);
    CHECK(read_json(out / "run" / "run.json")["config"]["seed"] == 5);
}

TEST_CASE("missing seed is a configuration error", "[cli]") {
    const auto out = scratch("seed_missing");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.0, kSmallNumerics, false));
    CHECK(cli("evaluate --config " + cfg.string() + " --out " + (out / "run").string()) == 2);
    const ojson err = read_json(out / "run" / "error.json");
    CHECK(err["kind"] == "config");
    CHECK(err["field"] == "seed");
    CHECK(err["status"] == 2);
}

TEST_CASE("unknown keys are rejected with their line", "[cli]") {
    const auto out = scratch("unknown_key");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.0, "  steps: 20\n  stepz: 10\n"));
    CHECK(cli("evaluate --config " + cfg.string() + " --out " + (out / "run").string()) == 2);
    const ojson err = read_json(out / "run" / "error.json");
    CHECK(err["field"] == "numerics.stepz");
    CHECK(err["line"] == 19);
}

TEST_CASE("invalid values name the field and line", "[cli]") {
    const auto out = scratch("bad_value");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.0, "  steps: 20\n  damping: 1.5\n"));
    CHECK(cli("evaluate --config " + cfg.string() + " --out " + (out / "run").string()) == 2);
    const ojson err = read_json(out / "run" / "error.json");
    CHECK(err["field"] == "numerics.damping");
    CHECK(err["line"] == 19);
}

TEST_CASE("malformed YAML reports the parser line", "[cli]") {
    const auto out = scratch("malformed");
    const auto cfg = write_config(out, "seed: 1\nproblem: [unclosed\n");
    CHECK(cli("evaluate --config " + cfg.string() + " --out " + (out / "run").string()) == 2);
    const ojson err = read_json(out / "run" / "error.json");
    CHECK(err["kind"] == "config");
    CHECK(err["line"].get<int>() >= 2);
}

TEST_CASE("model errors exit with the configuration status", "[cli]") {
    const auto out = scratch("model_error");
    std::string text = scalar_yaml(1.0, 0.0, kSmallNumerics);
    text.replace(text.find("B: [[1.0]]"), 10, "B: [[1.0, 2.0]]");
    const auto cfg = write_config(out, text);
    CHECK(cli("evaluate --config " + cfg.string() + " --out " + (out / "run").string()) == 2);
    CHECK(read_json(out / "run" / "error.json")["kind"] == "model");
}

TEST_CASE("tree verb enumerates the scenario tree", "[cli]") {
    const auto out = scratch("tree");
    REQUIRE(cli("tree --config " + configs("discrete_tree.yaml") + " --out " + out.string()) == 0);
    const ojson tree = read_json(out / "tree.json");
    CHECK(tree["profile_count"] == 729);
    CHECK(tree["slots"].size() == 6);
    REQUIRE(!tree["optimal"].empty());
    for (const auto& o : tree["optimal"]) CHECK(o["smp_verified"] == true);
    const double mean = tree["monte_carlo"]["mean"].get<double>();
    const double se = tree["monte_carlo"]["standard_error"].get<double>();
    CHECK(std::abs(mean - tree["min_cost"].get<double>()) < 4.0 * se);
}

TEST_CASE("tree verb without a tree block is a configuration error", "[cli]") {
    const auto out = scratch("tree_missing");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.0, kSmallNumerics));
    CHECK(cli("tree --config " + cfg.string() + " --out " + (out / "run").string()) == 2);
}

TEST_CASE("check verb runs every diagnostic", "[cli]") {
    const auto out = scratch("check");
    REQUIRE(cli("check --config " + configs("bilinear.yaml") + " --out " + out.string()) == 0);
    const ojson r = read_json(out / "run.json")["results"];
    CHECK(r.contains("assumptions"));
    CHECK(r["sufficiency"]["flags"].is_array());
    CHECK(r["gateaux"]["finite_difference"].size() == 3);
    CHECK(r["variational"]["residual"].size() == 3);
}

TEST_CASE("relaxed mode flag switches the strategy representation", "[cli]") {
    const auto out = scratch("relaxed");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.0, "  steps: 10\n  paths: 2000\n  max_iters: 2\n  bins: 4\n"));
    REQUIRE(cli("solve --mode relaxed --config " + cfg.string() + " --out " + (out / "run").string()) == 0);
    const ojson run = read_json(out / "run" / "run.json");
    CHECK(run["config"]["numerics"]["strategy_mode"] == "relaxed");
    CHECK(run["results"]["strategy"]["dm"][0]["mode"] == "relaxed");
}

TEST_CASE("optional CSV outputs and the ensemble cache", "[cli]") {
    const auto out = scratch("csv");
    const std::string extra = "output:\n  ensemble_csv: true\n  adjoint_csv: true\n  cache_dir: " +
                              (out / "cache").string() + "\n";
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.0, kSmallNumerics) + extra);
    REQUIRE(cli("evaluate --config " + cfg.string() + " --out " + (out / "a").string()) == 0);
    REQUIRE(cli("evaluate --config " + cfg.string() + " --out " + (out / "b").string()) == 0);
    CHECK(read_text(out / "a" / "ensemble.csv").rfind("path,step,t,x0,u0,dW0", 0) == 0);
    CHECK(read_text(out / "a" / "adjoint.csv").rfind("path,step,t,psi0,Q0_0", 0) == 0);
    const ojson a = read_json(out / "a" / "run.json");
    const ojson b = read_json(out / "b" / "run.json");
    CHECK(a["results"]["cache"]["hit"] == false);
    CHECK(b["results"]["cache"]["hit"] == true);
    CHECK(a["results"]["cost"].dump() == b["results"]["cost"].dump());
}

TEST_CASE("FIS runs outside the constant invertible noise regime are flagged", "[cli]") {
    const auto out = scratch("regime");
    const auto cfg = write_config(out, scalar_yaml(1.0, 0.0, kSmallNumerics));
    REQUIRE(cli("evaluate --config " + cfg.string() + " --out " + (out / "lq").string()) == 0);
    const ojson lq = read_json(out / "lq" / "run.json")["results"]["information_regime"];
    CHECK(lq["uses_fis"] == true);
    CHECK(lq["heuristic"] == false);
    REQUIRE(cli("evaluate --config " + configs("bilinear.yaml") + " --out " + (out / "bilinear").string()) == 0);
    const ojson bl = read_json(out / "bilinear" / "run.json")["results"]["information_regime"];
    CHECK(bl["diffusion_constant"] == false);
    CHECK(bl["heuristic"] == true);
}
