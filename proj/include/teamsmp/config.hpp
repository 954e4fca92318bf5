#pragma once

// Run configuration: a YAML document with mode, seed, problem, numerics,
// output and (for scenario trees) tree blocks. The JSON echo written into
// run.json is itself valid input.

#include "teamsmp/model.hpp"
#include "teamsmp/strategy.hpp"

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace teamsmp {

using ojson = nlohmann::ordered_json;

/// Invalid configuration. line is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, const std::string& what, int line)
        : std::runtime_error(format(field, what, line)), field_(field), detail_(what), line_(line) {}

    const std::string& field() const { return field_; }
    const std::string& detail() const { return detail_; }
    int line() const { return line_; }

private:
    static std::string format(const std::string& field, const std::string& what, int line) {
        std::string s = field.empty() ? what : field + ": " + what;
        if (line > 0) s += " (line " + std::to_string(line) + ")";
        return s;
    }

    std::string field_, detail_;
    int line_;
};

enum class RunMode { team_pbp, evaluate_only, checks_only, oracle, tree };

inline const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::team_pbp: return "team_pbp";
        case RunMode::evaluate_only: return "evaluate_only";
        case RunMode::checks_only: return "checks_only";
        case RunMode::oracle: return "oracle";
        default: return "tree";
    }
}

struct Numerics {
    int steps = 50;
    std::size_t paths = 10000;
    int atoms = 21;
    double ridge_relative = 1e-8;
    double gap_tol = 1e-2;
    int max_iters = 50;
    double damping = 0.5;
    StrategyMode strategy_mode = StrategyMode::regular;
    int bins = 8;
    std::string initial_strategy = "zero";  // zero | riccati
    int probe_count = 64;
    double assumption_bound = 100.0;
    std::vector<double> epsilons{1e-2, 5e-3, 2.5e-3};
    std::vector<double> direction;  // constant action of the check direction; empty = all ones
    bool two_fold = false;
    int workers = 1;
};

struct OutputOptions {
    std::string dir = "out";
    bool ensemble_csv = false;
    bool adjoint_csv = false;
    std::string cache_dir;  // empty disables the ensemble cache
};

struct TreeOptions {
    bool present = false;
    int periods = 2;
    double dt = 0.5;
    Vector x0;
    std::vector<Matrix> actions;  // per DM: action_dim x atoms
};

struct RunConfig {
    RunMode mode = RunMode::team_pbp;
    std::uint64_t seed = 0;
    std::string seed_source = "config";
    ModelFamily family;
    std::vector<InformationStructure> info;
    Numerics numerics;
    OutputOptions output;
    TreeOptions tree;
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

class Reader {
public:
    Reader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.IsMap()) throw ConfigError(path_, "expected a mapping", line_of(node_));
    }

    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            const auto key = it->first.as<std::string>();
            if (!seen_.count(key)) throw ConfigError(sub(key), "unknown field", line_of(it->first));
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return static_cast<bool>(node_[key]);
    }

    YAML::Node get(const std::string& key) {
        seen_.insert(key);
        const YAML::Node n = node_[key];
        if (!n) throw ConfigError(sub(key), "required field missing", line_of(node_));
        return n;
    }

    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const YAML::Node& node() const { return node_; }

private:
    YAML::Node node_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename T>
T scalar(const YAML::Node& n, const std::string& field) {
    if (!n.IsScalar()) throw ConfigError(field, "expected a scalar", line_of(n));
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(field, "cannot convert '" + n.Scalar() + "'", line_of(n));
    }
}

inline double real(const YAML::Node& n, const std::string& field) {
    const double v = scalar<double>(n, field);
    if (!std::isfinite(v)) throw ConfigError(field, "must be finite", line_of(n));
    return v;
}

inline Vector vector_of(const YAML::Node& n, const std::string& field) {
    if (!n.IsSequence()) throw ConfigError(field, "expected a list of numbers", line_of(n));
    Vector v(static_cast<Eigen::Index>(n.size()));
    for (std::size_t i = 0; i < n.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = real(n[i], field + "[" + std::to_string(i) + "]");
    return v;
}

inline Matrix matrix_of(const YAML::Node& n, const std::string& field) {
    if (!n.IsSequence() || n.size() == 0) throw ConfigError(field, "expected a nonempty list of rows", line_of(n));
    const auto rows = n.size();
    std::size_t cols = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        if (!n[i].IsSequence()) throw ConfigError(field, "each row must be a list", line_of(n[i]));
        if (i == 0) cols = n[i].size();
        if (n[i].size() != cols)
            throw ConfigError(field, "row " + std::to_string(i) + " has " + std::to_string(n[i].size()) +
                                         " entries, expected " + std::to_string(cols), line_of(n[i]));
    }
    Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                real(n[i][j], field + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
    return M;
}

inline long long integer(const YAML::Node& n, const std::string& field, long long lo, long long hi) {
    const auto v = scalar<long long>(n, field);
    if (v < lo || v > hi)
        throw ConfigError(field, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]", line_of(n));
    return v;
}

inline double bounded(const YAML::Node& n, const std::string& field, double lo, double hi, bool open_lo = false) {
    const double v = real(n, field);
    if (v < lo || v > hi || (open_lo && v == lo)) {
        std::ostringstream os;
        os << "must be in " << (open_lo ? "(" : "[") << lo << ", " << hi << "]";
        throw ConfigError(field, os.str(), line_of(n));
    }
    return v;
}

inline SubsystemSpec parse_subsystem(const YAML::Node& n, const std::string& path) {
    Reader r(n, path);
    SubsystemSpec s;
    s.state_dim = static_cast<int>(integer(r.get("state_dim"), r.sub("state_dim"), 1, 64));
    s.action_dim = static_cast<int>(integer(r.get("action_dim"), r.sub("action_dim"), 1, 16));
    s.noise_dim = static_cast<int>(integer(r.get("noise_dim"), r.sub("noise_dim"), 1, 64));
    const auto box = r.get("action_box");
    const Matrix b = matrix_of(box, r.sub("action_box"));
    if (b.cols() != 2) throw ConfigError(r.sub("action_box"), "each interval is [lo, hi]", line_of(box));
    if (b.rows() != s.action_dim)
        throw ConfigError(r.sub("action_box"), "needs one interval per action coordinate", line_of(box));
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
        if (b(j, 0) > b(j, 1)) throw ConfigError(r.sub("action_box"), "lo must not exceed hi", line_of(box));
        s.action_box.push_back({b(j, 0), b(j, 1)});
    }
    return s;
}

inline InformationStructure parse_info(const YAML::Node& n, const std::string& path) {
    Reader r(n, path);
    InformationStructure is;
    const auto kind = scalar<std::string>(r.get("kind"), r.sub("kind"));
    if (kind == "NIS" || kind == "nis") is.kind = InfoKind::nis;
    else if (kind == "FIS" || kind == "fis") is.kind = InfoKind::fis;
    else throw ConfigError(r.sub("kind"), "expected NIS or FIS", line_of(r.get("kind")));
    const auto src = r.get("sources");
    if (!src.IsSequence() || src.size() == 0) throw ConfigError(r.sub("sources"), "expected a nonempty list", line_of(src));
    for (std::size_t i = 0; i < src.size(); ++i)
        is.sources.push_back(static_cast<int>(integer(src[i], r.sub("sources"), 0, 1 << 20)));
    if (r.has("memory")) {
        const auto mem = scalar<std::string>(r.get("memory"), r.sub("memory"));
        if (mem == "markov_current") is.memory = Memory::markov_current;
        else if (mem == "full_path_features") is.memory = Memory::full_path_features;
        else throw ConfigError(r.sub("memory"), "expected markov_current or full_path_features", line_of(r.get("memory")));
    }
    if (r.has("path_rates")) {
        const Vector v = vector_of(r.get("path_rates"), r.sub("path_rates"));
        is.path_rates.assign(v.data(), v.data() + v.size());
        for (double x : is.path_rates)
            if (x < 0.0) throw ConfigError(r.sub("path_rates"), "rates must be nonnegative", line_of(r.get("path_rates")));
    }
    if (r.has("basis")) {
        const auto b = scalar<std::string>(r.get("basis"), r.sub("basis"));
        if (b == "polynomial_deg1") is.basis = Basis::polynomial_deg1;
        else if (b == "polynomial_deg2") is.basis = Basis::polynomial_deg2;
        else throw ConfigError(r.sub("basis"), "expected polynomial_deg1 or polynomial_deg2", line_of(r.get("basis")));
    }
    if (r.has("observation")) {
        if (is.kind != InfoKind::fis)
            throw ConfigError(r.sub("observation"), "only FIS structures take an observation map", line_of(r.get("observation")));
        is.observation = matrix_of(r.get("observation"), r.sub("observation"));
    }
    return is;
}

inline FamilyTag parse_family_tag(const YAML::Node& n, const std::string& field) {
    const auto s = scalar<std::string>(n, field);
    if (s == "linear_quadratic") return FamilyTag::linear_quadratic;
    if (s == "bilinear") return FamilyTag::bilinear;
    if (s == "cascade_ss") return FamilyTag::cascade_ss;
    throw ConfigError(field, "expected linear_quadratic, bilinear or cascade_ss", line_of(n));
}

inline void parse_problem(const YAML::Node& n, RunConfig& c) {
    Reader r(n, "problem");
    auto& f = c.family;
    f.tag = parse_family_tag(r.get("family"), r.sub("family"));
    f.horizon = bounded(r.get("horizon"), r.sub("horizon"), 0.0, 1e6, true);
    const auto subs = r.get("subsystems");
    if (!subs.IsSequence() || subs.size() == 0)
        throw ConfigError(r.sub("subsystems"), "expected a nonempty list", line_of(subs));
    for (std::size_t i = 0; i < subs.size(); ++i)
        f.subsystems.push_back(parse_subsystem(subs[i], r.sub("subsystems") + "[" + std::to_string(i) + "]"));
    f.A = matrix_of(r.get("A"), r.sub("A"));
    f.B = matrix_of(r.get("B"), r.sub("B"));
    if (r.has("noise_scale")) f.noise_scale = vector_of(r.get("noise_scale"), r.sub("noise_scale"));
    if (r.has("diffusion_matrix")) f.diffusion_matrix = matrix_of(r.get("diffusion_matrix"), r.sub("diffusion_matrix"));
    if (f.noise_scale.size() == 0 && f.diffusion_matrix.size() == 0)
        throw ConfigError(r.sub("noise_scale"), "noise_scale or diffusion_matrix is required", line_of(n));
    f.Q_cost = matrix_of(r.get("Q_cost"), r.sub("Q_cost"));
    f.R_cost = matrix_of(r.get("R_cost"), r.sub("R_cost"));
    f.G_terminal = matrix_of(r.get("G_terminal"), r.sub("G_terminal"));
    if (r.has("q_linear")) f.q_linear = vector_of(r.get("q_linear"), r.sub("q_linear"));
    if (r.has("g_linear")) f.g_linear = vector_of(r.get("g_linear"), r.sub("g_linear"));
    if (r.has("bilinear")) {
        const auto b = r.get("bilinear");
        if (!b.IsSequence()) throw ConfigError(r.sub("bilinear"), "expected a list of matrices", line_of(b));
        for (std::size_t l = 0; l < b.size(); ++l)
            f.bilinear.push_back(matrix_of(b[l], r.sub("bilinear") + "[" + std::to_string(l) + "]"));
    }
    if (r.has("noise_state_gain")) f.noise_state_gain = vector_of(r.get("noise_state_gain"), r.sub("noise_state_gain"));
    if (r.has("initial_state")) {
        Reader s(r.get("initial_state"), r.sub("initial_state"));
        f.initial.mean = vector_of(s.get("mean"), s.sub("mean"));
        if (s.has("std")) f.initial.stddev = vector_of(s.get("std"), s.sub("std"));
    }
    const auto info = r.get("info");
    if (!info.IsSequence()) throw ConfigError(r.sub("info"), "expected a list", line_of(info));
    for (std::size_t i = 0; i < info.size(); ++i)
        c.info.push_back(parse_info(info[i], r.sub("info") + "[" + std::to_string(i) + "]"));
}

inline void parse_numerics(const YAML::Node& n, Numerics& x) {
    Reader r(n, "numerics");
    if (r.has("steps")) x.steps = static_cast<int>(integer(r.get("steps"), r.sub("steps"), 1, 100000));
    if (r.has("paths")) x.paths = static_cast<std::size_t>(integer(r.get("paths"), r.sub("paths"), 1, 100000000));
    if (r.has("atoms")) x.atoms = static_cast<int>(integer(r.get("atoms"), r.sub("atoms"), 1, 1001));
    if (r.has("ridge_relative")) x.ridge_relative = bounded(r.get("ridge_relative"), r.sub("ridge_relative"), 0.0, 1.0);
    if (r.has("gap_tol")) x.gap_tol = bounded(r.get("gap_tol"), r.sub("gap_tol"), 0.0, 1e6);
    if (r.has("max_iters")) x.max_iters = static_cast<int>(integer(r.get("max_iters"), r.sub("max_iters"), 0, 100000));
    if (r.has("damping")) x.damping = bounded(r.get("damping"), r.sub("damping"), 0.0, 1.0, true);
    if (r.has("strategy_mode")) {
        const auto s = scalar<std::string>(r.get("strategy_mode"), r.sub("strategy_mode"));
        if (s == "regular") x.strategy_mode = StrategyMode::regular;
        else if (s == "relaxed") x.strategy_mode = StrategyMode::relaxed;
        else throw ConfigError(r.sub("strategy_mode"), "expected regular or relaxed", line_of(r.get("strategy_mode")));
    }
    if (r.has("bins")) x.bins = static_cast<int>(integer(r.get("bins"), r.sub("bins"), 1, 1000));
    if (r.has("initial_strategy")) {
        x.initial_strategy = scalar<std::string>(r.get("initial_strategy"), r.sub("initial_strategy"));
        if (x.initial_strategy != "zero" && x.initial_strategy != "riccati")
            throw ConfigError(r.sub("initial_strategy"), "expected zero or riccati", line_of(r.get("initial_strategy")));
    }
    if (r.has("probe_count")) x.probe_count = static_cast<int>(integer(r.get("probe_count"), r.sub("probe_count"), 2, 10000000));
    if (r.has("assumption_bound"))
        x.assumption_bound = bounded(r.get("assumption_bound"), r.sub("assumption_bound"), 0.0, 1e300, true);
    if (r.has("epsilons")) {
        const Vector v = vector_of(r.get("epsilons"), r.sub("epsilons"));
        x.epsilons.assign(v.data(), v.data() + v.size());
        for (double e : x.epsilons)
            if (!(e > 0.0 && e <= 1.0)) throw ConfigError(r.sub("epsilons"), "each epsilon must be in (0, 1]", line_of(r.get("epsilons")));
    }
    if (r.has("direction")) {
        const Vector v = vector_of(r.get("direction"), r.sub("direction"));
        x.direction.assign(v.data(), v.data() + v.size());
    }
    if (r.has("two_fold")) x.two_fold = scalar<bool>(r.get("two_fold"), r.sub("two_fold"));
    if (r.has("workers")) x.workers = static_cast<int>(integer(r.get("workers"), r.sub("workers"), 1, 1024));
}

inline void parse_output(const YAML::Node& n, OutputOptions& o) {
    Reader r(n, "output");
    if (r.has("dir")) o.dir = scalar<std::string>(r.get("dir"), r.sub("dir"));
    if (r.has("ensemble_csv")) o.ensemble_csv = scalar<bool>(r.get("ensemble_csv"), r.sub("ensemble_csv"));
    if (r.has("adjoint_csv")) o.adjoint_csv = scalar<bool>(r.get("adjoint_csv"), r.sub("adjoint_csv"));
    if (r.has("cache_dir")) o.cache_dir = scalar<std::string>(r.get("cache_dir"), r.sub("cache_dir"));
}

inline void parse_tree(const YAML::Node& n, TreeOptions& t) {
    Reader r(n, "tree");
    t.present = true;
    t.periods = static_cast<int>(integer(r.get("periods"), r.sub("periods"), 1, 3));
    t.dt = bounded(r.get("dt"), r.sub("dt"), 0.0, 1e6, true);
    t.x0 = vector_of(r.get("x0"), r.sub("x0"));
    const auto a = r.get("actions");
    if (!a.IsSequence()) throw ConfigError(r.sub("actions"), "expected one matrix per DM", line_of(a));
    for (std::size_t i = 0; i < a.size(); ++i)
        t.actions.push_back(matrix_of(a[i], r.sub("actions") + "[" + std::to_string(i) + "]"));
}

inline RunMode parse_mode(const std::string& s, const std::string& field, int line) {
    if (s == "team_pbp") return RunMode::team_pbp;
    if (s == "evaluate_only") return RunMode::evaluate_only;
    if (s == "checks_only") return RunMode::checks_only;
    if (s == "oracle") return RunMode::oracle;
    if (s == "tree") return RunMode::tree;
    throw ConfigError(field, "expected team_pbp, evaluate_only, checks_only, oracle or tree", line);
}

}  // namespace detail

inline RunMode parse_run_mode(const std::string& s) { return detail::parse_mode(s, "mode", 0); }

/// Parses and validates a configuration document. The seed may be absent
/// only when `seed_override` supplies it.
inline RunConfig parse_config(const YAML::Node& root, std::optional<std::uint64_t> seed_override = {}) {
    RunConfig c;
    {
        detail::Reader r(root, "");
        if (r.has("mode")) c.mode = detail::parse_mode(detail::scalar<std::string>(r.get("mode"), "mode"), "mode",
                                                       detail::line_of(r.get("mode")));
        if (r.has("seed")) {
            c.seed = detail::scalar<std::uint64_t>(r.get("seed"), "seed");
        } else if (!seed_override) {
            throw ConfigError("seed", "required field missing (no clock-based seeding)", 0);
        }
        if (r.has("seed_source")) c.seed_source = detail::scalar<std::string>(r.get("seed_source"), "seed_source");
        detail::parse_problem(r.get("problem"), c);
        if (r.has("numerics")) detail::parse_numerics(r.get("numerics"), c.numerics);
        if (r.has("output")) detail::parse_output(r.get("output"), c.output);
        if (r.has("tree")) detail::parse_tree(r.get("tree"), c.tree);
    }
    if (c.mode == RunMode::tree && !c.tree.present) throw ConfigError("tree", "tree mode needs a tree block", 0);
    if (c.info.size() != c.family.subsystems.size())
        throw ConfigError("problem.info", "needs one information structure per subsystem", 0);
    return c;
}

inline YAML::Node load_yaml(const std::string& text) {
    try {
        return YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("", "parse error: " + e.msg, e.mark.line + 1);
    }
}

inline YAML::Node load_yaml_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path, 0);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_yaml(ss.str());
}

/// Applies the seed precedence: command-line flag, then TEAMSMP_SEED, then the file.
inline RunConfig load_config(const std::string& path, std::optional<std::uint64_t> flag_seed = {}) {
    std::optional<std::uint64_t> env_seed;
    if (const char* s = std::getenv("TEAMSMP_SEED")) {
        char* end = nullptr;
        const auto v = std::strtoull(s, &end, 10);
        if (end == s || *end != '\0') throw ConfigError("TEAMSMP_SEED", "not an unsigned integer", 0);
        env_seed = v;
    }
    RunConfig c = parse_config(load_yaml_file(path), flag_seed ? flag_seed : env_seed);
    if (flag_seed) {
        c.seed = *flag_seed;
        c.seed_source = "flag";
    } else if (env_seed) {
        c.seed = *env_seed;
        c.seed_source = "env:TEAMSMP_SEED";
    }
    return c;
}

inline ojson to_json(const Matrix& m) {
    ojson a = ojson::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ojson row = ojson::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(row);
    }
    return a;
}

inline ojson to_json(const Vector& v) {
    ojson a = ojson::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

/// Every knob with its effective value.
inline ojson config_echo(const RunConfig& c) {
    const auto& f = c.family;
    ojson j;
    j["mode"] = to_string(c.mode);
    j["seed"] = c.seed;
    j["seed_source"] = c.seed_source;
    ojson p;
    p["family"] = to_string(f.tag);
    p["horizon"] = f.horizon;
    ojson subs = ojson::array();
    for (const auto& s : f.subsystems) {
        ojson box = ojson::array();
        for (const auto& iv : s.action_box) box.push_back({iv.lo, iv.hi});
        subs.push_back({{"state_dim", s.state_dim}, {"action_dim", s.action_dim}, {"noise_dim", s.noise_dim},
                        {"action_box", box}});
    }
    p["subsystems"] = subs;
    p["A"] = to_json(f.A);
    p["B"] = to_json(f.B);
    if (f.noise_scale.size()) p["noise_scale"] = to_json(f.noise_scale);
    if (f.diffusion_matrix.size()) p["diffusion_matrix"] = to_json(f.diffusion_matrix);
    p["Q_cost"] = to_json(f.Q_cost);
    p["R_cost"] = to_json(f.R_cost);
    p["G_terminal"] = to_json(f.G_terminal);
    int n = 0;
    for (const auto& s : f.subsystems) n += s.state_dim;
    p["q_linear"] = to_json(f.q_linear.size() ? f.q_linear : Vector::Zero(n));
    p["g_linear"] = to_json(f.g_linear.size() ? f.g_linear : Vector::Zero(n));
    if (f.tag == FamilyTag::bilinear) {
        ojson b = ojson::array();
        for (const auto& m : f.bilinear) b.push_back(to_json(m));
        p["bilinear"] = b;
        p["noise_state_gain"] = to_json(f.noise_state_gain.size() ? f.noise_state_gain : Vector::Zero(n));
    }
    p["initial_state"] = {{"mean", to_json(f.initial.mean.size() ? f.initial.mean : Vector::Zero(n))},
                          {"std", to_json(f.initial.stddev.size() ? f.initial.stddev : Vector::Zero(n))}};
    ojson info = ojson::array();
    for (const auto& is : c.info) {
        ojson e;
        e["kind"] = to_string(is.kind);
        e["sources"] = is.sources;
        e["memory"] = to_string(is.memory);
        e["path_rates"] = is.path_rates;
        e["basis"] = to_string(is.basis);
        if (is.observation.size()) e["observation"] = to_json(is.observation);
        info.push_back(e);
    }
    p["info"] = info;
    j["problem"] = p;
    const auto& x = c.numerics;
    j["numerics"] = {{"steps", x.steps},
                     {"paths", x.paths},
                     {"atoms", x.atoms},
                     {"ridge_relative", x.ridge_relative},
                     {"gap_tol", x.gap_tol},
                     {"max_iters", x.max_iters},
                     {"damping", x.damping},
                     {"strategy_mode", to_string(x.strategy_mode)},
                     {"bins", x.bins},
                     {"initial_strategy", x.initial_strategy},
                     {"probe_count", x.probe_count},
                     {"assumption_bound", x.assumption_bound},
                     {"epsilons", x.epsilons},
                     {"direction", x.direction},
                     {"two_fold", x.two_fold},
                     {"workers", x.workers}};
    j["output"] = {{"dir", c.output.dir},
                   {"ensemble_csv", c.output.ensemble_csv},
                   {"adjoint_csv", c.output.adjoint_csv},
                   {"cache_dir", c.output.cache_dir}};
    if (c.tree.present) {
        ojson acts = ojson::array();
        for (const auto& a : c.tree.actions) acts.push_back(to_json(a));
        j["tree"] = {{"periods", c.tree.periods}, {"dt", c.tree.dt}, {"x0", to_json(c.tree.x0)}, {"actions", acts}};
    }
    return j;
}

inline TeamProblem problem_from(const RunConfig& c) { return build_problem(c.family, c.info); }

}  // namespace teamsmp
