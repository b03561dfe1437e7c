#ifndef LLMO_EXPERIMENT_HPP
#define LLMO_EXPERIMENT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <future>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "llmo/agents.hpp"
#include "llmo/baselines.hpp"
#include "llmo/errors.hpp"
#include "llmo/grid.hpp"
#include "llmo/http_agent.hpp"
#include "llmo/markov.hpp"
#include "llmo/markov_mc.hpp"
#include "llmo/optimizer.hpp"
#include "llmo/population.hpp"
#include "llmo/prompt.hpp"
#include "llmo/rewards.hpp"
#include "llmo/rng.hpp"
#include "llmo/trace.hpp"

namespace llmo {

enum class Scenario { IfcEe, IfcSe, BcSe, MmimoEe, SyntheticGrid };
enum class ConstraintMode { None, Language, Penalty };
enum class AgentKind { Synthetic, Random, Http };

inline const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::IfcEe: return "ifc-ee";
        case Scenario::IfcSe: return "ifc-se";
        case Scenario::BcSe: return "bc-se";
        case Scenario::MmimoEe: return "mmimo-ee";
        case Scenario::SyntheticGrid: return "synthetic-grid";
    }
    return "?";
}

inline const char* constraint_name(ConstraintMode c) {
    switch (c) {
        case ConstraintMode::None: return "none";
        case ConstraintMode::Language: return "language";
        case ConstraintMode::Penalty: return "penalty";
    }
    return "?";
}

inline const char* agent_kind_name(AgentKind k) {
    switch (k) {
        case AgentKind::Synthetic: return "synthetic";
        case AgentKind::Random: return "random";
        case AgentKind::Http: return "http";
    }
    return "?";
}

// One experiment, fully specified: what to optimize, who proposes actions,
// how memory is sampled, and where artifacts land. Loadable from JSON; the
// canonical form hashes to the tag embedded in every output file.
struct ExperimentConfig {
    Scenario scenario = Scenario::SyntheticGrid;
    SamplerKind sampler = SamplerKind::Elitist;
    ConstraintMode constraint = ConstraintMode::None;
    AgentKind agent_kind = AgentKind::Synthetic;
    std::size_t agents = 1;  // ensemble size L
    double epsilon = 0.1;    // exploring agent: chance of a uniform row
    std::size_t width = 1;   // exploring agent: per-dimension step radius
    std::size_t population = 5;
    std::size_t dims = 1;
    std::size_t horizon = 50;
    std::size_t grid_levels = 10;
    std::vector<std::uint64_t> seeds{1};
    std::uint64_t channel_seed = 7;
    std::size_t mmimo_samples = 100;
    std::size_t mc_trajectories = 0;  // theory verification only; 0 skips
    std::vector<std::size_t> l_sweep;
    std::vector<std::string> baselines;
    std::string output_dir = "runs/out";
    bool dump_populations = false;
    // http agent connection; the credential is named, never stored
    std::string http_endpoint = "http://127.0.0.1:8080";
    std::string http_path = "/v1/chat/completions";
    std::string http_model = "gpt-4o";
    std::string api_key_env;
    double temperature = 1.0;
    double timeout_seconds = 30.0;
    std::size_t max_attempts = 3;
    double backoff_seconds = 0.25;

    // Fields that define the experiment's identity. Artifact hashes cover
    // exactly these, so renaming the output directory or adding analysis
    // extras never severs a directory from its own traces.
    nlohmann::json identity() const {
        return nlohmann::json{
            {"scenario", scenario_name(scenario)},
            {"sampler", sampler_name(sampler)},
            {"constraint", constraint_name(constraint)},
            {"population", population},
            {"dims", dims},
            {"horizon", horizon},
            {"grid_levels", grid_levels},
            {"seeds", seeds},
            {"channel_seed", channel_seed},
            {"mmimo_samples", mmimo_samples},
            {"agent",
             {{"kind", agent_kind_name(agent_kind)},
              {"count", agents},
              {"epsilon", epsilon},
              {"width", width},
              {"endpoint", http_endpoint},
              {"path", http_path},
              {"model", http_model},
              {"api_key_env", api_key_env},
              {"temperature", temperature}}},
        };
    }

    nlohmann::json canonical() const {
        nlohmann::json j = identity();
        j["mc_trajectories"] = mc_trajectories;
        j["l_sweep"] = l_sweep;
        j["baselines"] = baselines;
        j["output_dir"] = output_dir;
        j["dump_populations"] = dump_populations;
        j["agent"]["timeout_seconds"] = timeout_seconds;
        j["agent"]["max_attempts"] = max_attempts;
        j["agent"]["backoff_seconds"] = backoff_seconds;
        return j;
    }

    std::string hash() const { return hash_hex(fnv1a64(identity().dump())); }

    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (population == 0) out.push_back("population must be positive");
        if (dims == 0) out.push_back("dims must be positive");
        if (horizon == 0) out.push_back("horizon must be positive");
        if (agents == 0) out.push_back("agent count must be positive");
        if (grid_levels < 2) out.push_back("grid_levels must be at least 2");
        if (seeds.empty()) out.push_back("at least one seed is required");
        if (!(epsilon >= 0.0 && epsilon <= 1.0)) out.push_back("epsilon must lie in [0, 1]");
        if (width == 0) out.push_back("width must be positive");
        if (scenario == Scenario::MmimoEe && dims != 3)
            out.push_back("mmimo-ee requires dims == 3 (antennas, users, power)");
        if (constraint != ConstraintMode::None && scenario != Scenario::BcSe)
            out.push_back("constraint modes apply to the bc-se scenario only");
        if (scenario == Scenario::SyntheticGrid && agent_kind == AgentKind::Http)
            out.push_back("synthetic-grid rewards live on a lattice; use a lattice agent");
        if (agent_kind == AgentKind::Http && http_endpoint.empty())
            out.push_back("http agents need an endpoint");
        if (agent_kind == AgentKind::Http && (http_path.empty() || http_path.front() != '/'))
            out.push_back("http path must be absolute");
        if (!(temperature >= 0.0)) out.push_back("temperature must be non-negative");
        if (!(timeout_seconds > 0.0)) out.push_back("timeout_seconds must be positive");
        if (!(backoff_seconds >= 0.0)) out.push_back("backoff_seconds must be non-negative");
        if (max_attempts == 0) out.push_back("max_attempts must be positive");
        if (mmimo_samples == 0) out.push_back("mmimo_samples must be positive");
        if (output_dir.empty()) out.push_back("output_dir must not be empty");
        for (std::size_t l : l_sweep)
            if (l == 0) out.push_back("l_sweep entries must be positive");
        for (const std::string& b : baselines)
            if (b != "ga" && b != "bo" && b != "random")
                out.push_back("unknown baseline '" + b + "' (expected ga, bo, or random)");
        return out;
    }

    void validate() const {
        const auto list = problems();
        if (list.empty()) return;
        std::string msg = "invalid configuration:";
        for (const auto& p : list) msg += "\n  - " + p;
        throw ValidationError(msg);
    }
};

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& into, const char* want,
                const std::string& scope, std::vector<std::string>& errors) {
    if (!j.contains(key)) return;
    try {
        into = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        errors.push_back(scope + "'" + key + "' must be " + want);
    }
}

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& known,
                       const std::string& scope, std::vector<std::string>& errors) {
    for (const auto& item : j.items())
        if (!known.count(item.key()))
            errors.push_back(scope + "unknown key '" + item.key() + "'");
}

template <class Enum>
void read_enum(const nlohmann::json& j, const char* key,
               const std::vector<std::pair<const char*, Enum>>& table, Enum& into,
               const std::string& scope, std::vector<std::string>& errors) {
    if (!j.contains(key)) return;
    std::string word;
    read_field(j, key, word, "a string", scope, errors);
    for (const auto& [name, value] : table)
        if (word == name) {
            into = value;
            return;
        }
    std::string options;
    for (const auto& [name, value] : table) options += std::string(options.empty() ? "" : ", ") + name;
    errors.push_back(scope + "'" + key + "' must be one of: " + options);
}

}  // namespace detail

// Parses and validates in one pass; every problem is reported together so a
// bad config never needs more than one round trip to fix.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("configuration root must be a JSON object");
    std::vector<std::string> errors;
    ExperimentConfig c;

    static const std::set<std::string> top{
        "scenario",     "sampler",   "constraint",      "population", "dims",
        "horizon",      "grid_levels", "seeds",         "channel_seed", "mmimo_samples",
        "mc_trajectories", "l_sweep", "baselines",      "output_dir", "dump_populations",
        "agent"};
    detail::check_keys(j, top, "", errors);

    detail::read_enum<Scenario>(j, "scenario",
                                {{"ifc-ee", Scenario::IfcEe},
                                 {"ifc-se", Scenario::IfcSe},
                                 {"bc-se", Scenario::BcSe},
                                 {"mmimo-ee", Scenario::MmimoEe},
                                 {"synthetic-grid", Scenario::SyntheticGrid}},
                                c.scenario, "", errors);
    detail::read_enum<SamplerKind>(
        j, "sampler", {{"elitist", SamplerKind::Elitist}, {"lifo", SamplerKind::Lifo}},
        c.sampler, "", errors);
    detail::read_enum<ConstraintMode>(j, "constraint",
                                      {{"none", ConstraintMode::None},
                                       {"language", ConstraintMode::Language},
                                       {"penalty", ConstraintMode::Penalty}},
                                      c.constraint, "", errors);
    detail::read_field(j, "population", c.population, "an unsigned integer", "", errors);
    detail::read_field(j, "dims", c.dims, "an unsigned integer", "", errors);
    detail::read_field(j, "horizon", c.horizon, "an unsigned integer", "", errors);
    detail::read_field(j, "grid_levels", c.grid_levels, "an unsigned integer", "", errors);
    detail::read_field(j, "seeds", c.seeds, "an array of unsigned integers", "", errors);
    detail::read_field(j, "channel_seed", c.channel_seed, "an unsigned integer", "", errors);
    detail::read_field(j, "mmimo_samples", c.mmimo_samples, "an unsigned integer", "", errors);
    detail::read_field(j, "mc_trajectories", c.mc_trajectories, "an unsigned integer", "",
                       errors);
    detail::read_field(j, "l_sweep", c.l_sweep, "an array of unsigned integers", "", errors);
    detail::read_field(j, "baselines", c.baselines, "an array of strings", "", errors);
    detail::read_field(j, "output_dir", c.output_dir, "a string", "", errors);
    detail::read_field(j, "dump_populations", c.dump_populations, "a boolean", "", errors);

    if (j.contains("agent")) {
        const nlohmann::json& a = j.at("agent");
        if (!a.is_object()) {
            errors.push_back("'agent' must be an object");
        } else {
            static const std::set<std::string> agent_keys{
                "kind",        "count",       "epsilon",         "width",
                "endpoint",    "path",        "model",           "api_key_env",
                "temperature", "timeout_seconds", "max_attempts", "backoff_seconds"};
            detail::check_keys(a, agent_keys, "agent: ", errors);
            detail::read_enum<AgentKind>(a, "kind",
                                         {{"synthetic", AgentKind::Synthetic},
                                          {"random", AgentKind::Random},
                                          {"http", AgentKind::Http}},
                                         c.agent_kind, "agent: ", errors);
            detail::read_field(a, "count", c.agents, "an unsigned integer", "agent: ", errors);
            detail::read_field(a, "epsilon", c.epsilon, "a number", "agent: ", errors);
            detail::read_field(a, "width", c.width, "an unsigned integer", "agent: ", errors);
            detail::read_field(a, "endpoint", c.http_endpoint, "a string", "agent: ", errors);
            detail::read_field(a, "path", c.http_path, "a string", "agent: ", errors);
            detail::read_field(a, "model", c.http_model, "a string", "agent: ", errors);
            detail::read_field(a, "api_key_env", c.api_key_env, "a string", "agent: ", errors);
            detail::read_field(a, "temperature", c.temperature, "a number", "agent: ", errors);
            detail::read_field(a, "timeout_seconds", c.timeout_seconds, "a number", "agent: ",
                               errors);
            detail::read_field(a, "max_attempts", c.max_attempts, "an unsigned integer",
                               "agent: ", errors);
            detail::read_field(a, "backoff_seconds", c.backoff_seconds, "a number", "agent: ",
                               errors);
        }
    }

    for (const auto& p : c.problems()) errors.push_back(p);
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ValidationError(msg);
    }
    return c;
}

inline ExperimentConfig config_from_text(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("configuration is not valid JSON");
    return config_from_json(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    return config_from_text(read_text(path));
}

// `key=value` or `nested.key=value` applied onto the raw JSON before
// parsing; the value is read as JSON when it parses, as a string otherwise.
inline void apply_override(nlohmann::json& j, const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ValidationError("override must look like key=value: " + spec);
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw ValidationError("override has an empty key segment: " + spec);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

// ---------------------------------------------------------------------------
// Scenario wiring.

struct ScenarioBundle {
    RewardFn reward;         // what the optimizer maximizes
    RewardFn box_reward;     // same objective, defined on the whole box (for baselines)
    ViolationFn violation;   // null when the scenario carries no constraint series
    Bounds bounds;
    GridSpec grid;           // proposal lattice for lattice agents
    std::optional<double> optimum;   // exhaustive lattice maximum when tractable
    std::string constraint_sentence; // appended to prompts in language mode
};

inline ScenarioBundle build_scenario(const ExperimentConfig& c) {
    ScenarioBundle b;
    switch (c.scenario) {
        case Scenario::IfcEe:
        case Scenario::IfcSe: {
            const auto model =
                std::make_shared<IfcModel>(IfcModel::rayleigh(c.dims, c.channel_seed));
            b.bounds = Bounds::uniform(c.dims, 0.0, 1.0);
            if (c.scenario == Scenario::IfcEe)
                b.reward = [model](const ActionVector& a) { return ifc_ee(*model, a.values); };
            else
                b.reward = [model](const ActionVector& a) { return ifc_se(*model, a.values); };
            b.grid = GridSpec::uniform(c.grid_levels, c.dims, c.population, b.bounds);
            b.box_reward = b.reward;
            break;
        }
        case Scenario::BcSe: {
            const auto model =
                std::make_shared<BcModel>(BcModel::rayleigh(c.dims, c.channel_seed));
            b.bounds = Bounds::uniform(c.dims, 0.0, 1.0);
            if (c.constraint == ConstraintMode::Penalty)
                b.reward = [model](const ActionVector& a) { return bc_penalized(*model, a.values); };
            else
                b.reward = [model](const ActionVector& a) { return bc_se(*model, a.values); };
            if (c.constraint == ConstraintMode::Language)
                b.constraint_sentence = PromptTemplate::sum_power_constraint(c.dims);
            b.violation = [](const ActionVector& a) { return sum_power_violation(a.values); };
            b.grid = GridSpec::uniform(c.grid_levels, c.dims, c.population, b.bounds);
            b.box_reward = b.reward;
            break;
        }
        case Scenario::MmimoEe: {
            MmimoModel model;
            model.samples = c.mmimo_samples;
            model.seed = c.channel_seed;
            b.bounds = Bounds{{1.0, 1.0, model.p_min_dbm},
                              {double(model.m_max), double(model.k_max), model.p_max_dbm}};
            b.grid.levels = {model.m_max, model.k_max, 51};
            b.grid.bounds = b.bounds;
            b.grid.P = c.population;
            b.grid.validate();
            b.reward = [model](const ActionVector& a) {
                const long M = std::lround(a.values[0]);
                const long K = std::lround(a.values[1]);
                if (K > M) return -1.0;  // infeasible beam assignment
                return mmimo_ee(model, static_cast<std::size_t>(M),
                                static_cast<std::size_t>(K), a.values[2]);
            };
            b.violation = [](const ActionVector& a) {
                return std::max(0.0, double(std::lround(a.values[1]) - std::lround(a.values[0])));
            };
            b.box_reward = b.reward;
            break;
        }
        case Scenario::SyntheticGrid: {
            b.bounds = Bounds::uniform(c.dims, 0.0, 1.0);
            b.grid = GridSpec::uniform(c.grid_levels, c.dims, c.population, b.bounds);
            const std::uint64_t n = b.grid.action_count();
            if (n > 1000000) throw CapacityError("synthetic grid has too many cells");
            auto values = std::make_shared<std::vector<double>>();
            Rng rng(c.channel_seed);
            values->reserve(n);
            for (std::uint64_t i = 0; i < n; ++i) values->push_back(rng.uniform01());
            const GridSpec grid = b.grid;
            b.reward = [grid, values](const ActionVector& a) {
                return (*values)[grid.encode_action(a)];
            };
            // Baselines roam the box; snap them to the nearest cell.
            b.box_reward = [grid, values](const ActionVector& a) {
                std::uint64_t id = 0;
                for (std::size_t d = 0; d < grid.dims(); ++d) {
                    const double lo = grid.bounds.lo[d], hi = grid.bounds.hi[d];
                    const double step = (hi - lo) / double(grid.levels[d] - 1);
                    const long l = std::clamp<long>(std::lround((a.values[d] - lo) / step), 0,
                                                    long(grid.levels[d] - 1));
                    id = id * grid.levels[d] + std::uint64_t(l);
                }
                return (*values)[id];
            };
            break;
        }
    }
    if (c.agent_kind != AgentKind::Http && b.grid.action_count() <= 20000) {
        const RewardTable table =
            grid_reward_table(b.reward, b.bounds, b.grid.levels, 20000);
        b.optimum = table.best;
    }
    return b;
}

inline std::vector<std::shared_ptr<Agent>> make_agents(const ExperimentConfig& c,
                                                       const ScenarioBundle& b,
                                                       std::uint64_t run_seed,
                                                       bool allow_network) {
    std::vector<std::shared_ptr<Agent>> out;
    const Rng base(run_seed);
    for (std::size_t l = 0; l < c.agents; ++l) {
        const std::uint64_t agent_seed = base.stream(100 + l).u64();
        switch (c.agent_kind) {
            case AgentKind::Synthetic:
                out.push_back(std::make_shared<ExploringGridAgent>(
                    b.grid, c.epsilon, c.width, agent_seed, "explore-" + std::to_string(l)));
                break;
            case AgentKind::Random:
                out.push_back(std::make_shared<UniformRandomAgent>(
                    b.grid, agent_seed, "random-" + std::to_string(l)));
                break;
            case AgentKind::Http: {
                if (!allow_network)
                    throw ValidationError(
                        "http agents are disabled by default; pass --allow-network to contact " +
                        c.http_endpoint);
                HttpAgentConfig hc;
                hc.endpoint = c.http_endpoint;
                hc.path = c.http_path;
                hc.model = c.http_model;
                hc.api_key_env = c.api_key_env;
                hc.temperature = c.temperature;
                hc.population = c.population;
                hc.dims = c.dims;
                hc.bounds = b.bounds;
                hc.max_attempts = c.max_attempts;
                hc.backoff_seconds = c.backoff_seconds;
                hc.timeout_seconds = c.timeout_seconds;
                if (!b.constraint_sentence.empty()) hc.prompt.constraint = b.constraint_sentence;
                hc.label = "http-" + std::to_string(l);
                out.push_back(std::make_shared<HttpChatAgent>(hc));
                break;
            }
        }
    }
    return out;
}

inline RunResult run_single(const ExperimentConfig& c, const ScenarioBundle& b,
                            std::uint64_t seed, bool allow_network = false) {
    RunConfig rc;
    rc.population = c.population;
    rc.dims = c.dims;
    rc.bounds = b.bounds;
    rc.horizon = c.horizon;
    rc.sampler = c.sampler;
    rc.record_populations = c.dump_populations;
    auto agents = make_agents(c, b, seed, allow_network);
    Rng init_rng = Rng(seed).stream(0);
    Population x0 = c.agent_kind == AgentKind::Http
                        ? uniform_population(b.bounds, c.population, init_rng)
                        : uniform_grid_population(b.grid, init_rng);
    return run_llmo(rc, b.reward, b.violation, agents, std::move(x0));
}

// Seeds are independent chains, so they fan out onto threads; collecting in
// seed order keeps every artifact byte-reproducible.
inline std::vector<RunResult> run_all_seeds(const ExperimentConfig& c,
                                            const ScenarioBundle& b, bool allow_network) {
    std::vector<std::future<RunResult>> futures;
    futures.reserve(c.seeds.size());
    for (std::uint64_t seed : c.seeds)
        futures.push_back(std::async(std::launch::async, [&c, &b, seed, allow_network] {
            return run_single(c, b, seed, allow_network);
        }));
    std::vector<RunResult> out;
    out.reserve(futures.size());
    for (auto& f : futures) out.push_back(f.get());
    return out;
}

// ---------------------------------------------------------------------------
// Experiment driver.

struct ExperimentSummary {
    std::string config_hash;
    std::filesystem::path directory;
    std::vector<std::string> files;  // artifact names, in creation order
    double final_mean_best = 0.0;
    std::optional<double> optimum;
    std::size_t optimum_hits = 0;  // seeds whose final best matches the optimum
};

namespace detail {

inline nlohmann::json populations_json(const RunResult& r, const std::string& hash,
                                       std::uint64_t seed) {
    nlohmann::json pops = nlohmann::json::array();
    for (std::size_t t = 0; t < r.populations.size(); ++t) {
        nlohmann::json actions = nlohmann::json::array();
        for (const ActionVector& a : r.populations[t].actions) actions.push_back(a.values);
        pops.push_back({{"t", t}, {"actions", actions}, {"rewards", r.populations[t].rewards}});
    }
    return nlohmann::json{{"config_hash", hash}, {"seed", seed}, {"populations", pops}};
}

// Round-aligned best-so-far curve for a reference optimizer given the same
// evaluation budget as the main loop (population rows at t=0, then
// agents x population rows per iteration).
inline std::vector<double> baseline_curve(const ExperimentConfig& c, const ScenarioBundle& b,
                                          const std::string& name, std::uint64_t seed) {
    const std::size_t per_round = std::max<std::size_t>(1, c.agents * c.population);
    if (name == "random") {
        const BaselineResult r = brute_force_optimize(
            b.bounds, b.box_reward, c.population + c.horizon * per_round, seed);
        std::vector<double> curve(c.horizon + 1);
        for (std::size_t t = 0; t <= c.horizon; ++t) {
            const std::size_t idx =
                std::min(c.population - 1 + t * per_round, r.best_trace.size() - 1);
            curve[t] = r.best_trace[idx];
        }
        return curve;
    }
    if (name == "ga") {
        GaConfig g;
        g.population = std::max<std::size_t>(2, per_round);
        g.generations = c.horizon;
        g.seed = seed;
        return ga_optimize(b.bounds, b.box_reward, g).best_trace;
    }
    BoConfig bo;
    bo.initial_samples = std::max<std::size_t>(2, c.population);
    bo.iterations = c.horizon;
    bo.batch = per_round;
    bo.seed = seed;
    return bo_optimize(b.bounds, b.box_reward, bo).best_trace;
}

}  // namespace detail

inline ExperimentSummary run_experiment(const ExperimentConfig& c, bool allow_network = false) {
    c.validate();
    const ScenarioBundle bundle = build_scenario(c);
    const std::string hash = c.hash();
    const std::filesystem::path dir(c.output_dir);
    std::filesystem::create_directories(dir);

    ExperimentSummary summary;
    summary.config_hash = hash;
    summary.directory = dir;
    summary.optimum = bundle.optimum;

    // A directory belongs to one configuration; refuse to write into another's.
    const std::filesystem::path cfg_path = dir / "config.json";
    if (std::filesystem::exists(cfg_path)) {
        const nlohmann::json existing =
            nlohmann::json::parse(read_text(cfg_path), nullptr, false);
        if (existing.is_discarded() || !existing.contains("config_hash") ||
            existing.at("config_hash").get<std::string>() != hash)
            throw ValidationError("output directory " + dir.string() +
                                  " holds artifacts from a different configuration; refusing "
                                  "to mix traces");
    }
    nlohmann::json cfg = c.canonical();
    cfg["config_hash"] = hash;
    cfg["format_version"] = 1;
    write_text_atomic(cfg_path, cfg.dump(2) + "\n");
    summary.files.push_back("config.json");

    const std::vector<RunResult> runs = run_all_seeds(c, bundle, allow_network);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const std::uint64_t seed = c.seeds[i];
        const std::string trace_name = "trace_" + std::to_string(seed) + ".csv";
        write_trace_csv(dir / trace_name, runs[i].trace, hash);
        summary.files.push_back(trace_name);
        if (c.dump_populations) {
            const std::string pop_name = "populations_" + std::to_string(seed) + ".json";
            write_text_atomic(dir / pop_name,
                              detail::populations_json(runs[i], hash, seed).dump(2) + "\n");
            summary.files.push_back(pop_name);
        }
    }

    const std::size_t T = c.horizon;
    std::vector<double> mean_best(T + 1), min_best(T + 1), max_best(T + 1);
    std::vector<double> mean_viol(T + 1, 0.0), max_viol(T + 1, 0.0);
    double observed_best = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t <= T; ++t) {
        double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
        double vsum = 0.0, vmax = 0.0;
        for (const RunResult& r : runs) {
            const IterationRecord& rec = r.trace.at(t);
            sum += rec.best_reward;
            lo = std::min(lo, rec.best_reward);
            hi = std::max(hi, rec.best_reward);
            if (std::isfinite(rec.violation)) {
                vsum += rec.violation;
                vmax = std::max(vmax, rec.violation);
            }
        }
        mean_best[t] = sum / double(runs.size());
        min_best[t] = lo;
        max_best[t] = hi;
        mean_viol[t] = vsum / double(runs.size());
        max_viol[t] = vmax;
        observed_best = std::max(observed_best, hi);
    }
    summary.final_mean_best = mean_best[T];
    if (bundle.optimum) {
        for (const RunResult& r : runs)
            if (r.best.reward >= *bundle.optimum - 1e-12) ++summary.optimum_hits;
    }

    CsvTable best;
    best.header = "t,mean_best_reward,min_best_reward,max_best_reward";
    for (std::size_t t = 0; t <= T; ++t)
        best.rows.push_back({double(t), mean_best[t], min_best[t], max_best[t]});
    write_table_csv(dir / "aggregate_best.csv", best, hash);
    summary.files.push_back("aggregate_best.csv");

    // Gap curve against the exhaustive optimum when known, else against the
    // best reward ever observed. Written only when the fit is possible.
    const double reference = bundle.optimum.value_or(observed_best);
    std::vector<double> gaps(T + 1);
    for (std::size_t t = 0; t <= T; ++t) gaps[t] = reference - mean_best[t];
    if (gaps[0] > 0.0) {
        try {
            const SemilogFit fit = fit_semilog(gaps, 0);
            CsvTable gap;
            gap.header = "t,gap,gamma,predicted_gap";
            for (std::size_t t = 0; t <= T; ++t) {
                const double gamma =
                    t == 0 ? 1.0
                           : (gaps[t] > 0.0 ? std::pow(gaps[t] / gaps[0], 1.0 / double(t)) : 0.0);
                const double predicted =
                    std::pow(10.0, fit.intercept + fit.slope * double(t));
                gap.rows.push_back({double(t), gaps[t], gamma, predicted});
            }
            write_table_csv(dir / "aggregate_gap.csv", gap, hash);
            summary.files.push_back("aggregate_gap.csv");
        } catch (const FitError&) {
            // Too few positive gaps to fit; the gap artifact is skipped.
        }
    }

    if (bundle.violation) {
        CsvTable viol;
        viol.header = "t,mean_violation,max_violation";
        for (std::size_t t = 0; t <= T; ++t)
            viol.rows.push_back({double(t), mean_viol[t], max_viol[t]});
        write_table_csv(dir / "aggregate_violation.csv", viol, hash);
        summary.files.push_back("aggregate_violation.csv");
    }

    if (!c.l_sweep.empty()) {
        CsvTable acr;
        acr.header = "L,slope,r_squared";
        for (std::size_t L : c.l_sweep) {
            ExperimentConfig cl = c;
            cl.agents = L;
            std::vector<double> lmean(T + 1, 0.0);
            double lbest = -std::numeric_limits<double>::infinity();
            for (const RunResult& r : run_all_seeds(cl, bundle, allow_network)) {
                for (std::size_t t = 0; t <= T; ++t) {
                    lmean[t] += r.trace[t].best_reward / double(c.seeds.size());
                    lbest = std::max(lbest, r.trace[t].best_reward);
                }
            }
            const double ref = bundle.optimum.value_or(lbest);
            std::vector<double> lgaps(T + 1);
            for (std::size_t t = 0; t <= T; ++t) lgaps[t] = ref - lmean[t];
            try {
                const SemilogFit fit = fit_semilog(lgaps, 0);
                acr.rows.push_back({double(L), fit.slope, fit.r_squared});
            } catch (const FitError&) {
                // Gap closed too quickly for a rate estimate; no row for this L.
            }
        }
        write_table_csv(dir / "acr_vs_l.csv", acr, hash);
        summary.files.push_back("acr_vs_l.csv");
    }

    for (const std::string& name : c.baselines) {
        std::vector<double> mean(T + 1, 0.0);
        for (std::uint64_t seed : c.seeds) {
            const std::vector<double> curve = detail::baseline_curve(c, bundle, name, seed);
            for (std::size_t t = 0; t <= T; ++t) mean[t] += curve[t] / double(c.seeds.size());
        }
        std::vector<IterationRecord> rows(T + 1);
        for (std::size_t t = 0; t <= T; ++t) {
            rows[t].t = t;
            rows[t].best_reward = mean[t];
            rows[t].mean_reward = mean[t];
        }
        const std::string file = "baseline_" + name + ".csv";
        write_trace_csv(dir / file, rows, hash);
        summary.files.push_back(file);
    }

    return summary;
}

// ---------------------------------------------------------------------------
// Rate analysis over a directory of traces.

struct RateReport {
    std::string config_hash;
    std::size_t traces = 0;
    double reference = 0.0;
    double final_mean_best = 0.0;
    SemilogFit fit;
    bool reliable = false;  // fit quality clears the reporting bar
};

inline RateReport analyze_rates(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    if (!std::filesystem::is_directory(dir))
        throw ValidationError(dir.string() + " is not a directory");
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("trace_", 0) == 0 && name.size() > 4 &&
            name.substr(name.size() - 4) == ".csv")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no trace files found in " + dir.string());

    std::vector<TraceFile> traces;
    for (const auto& f : files) {
        TraceFile t = read_trace_csv(f);
        if (!traces.empty() && t.config_hash != traces.front().config_hash)
            throw ValidationError("config hash mismatch between " + files.front().string() +
                                  " and " + f.string() + "; refusing to mix traces");
        if (!traces.empty() && t.records.size() != traces.front().records.size())
            throw ShapeError("trace length mismatch in " + f.string());
        traces.push_back(std::move(t));
    }

    const std::size_t n = traces.front().records.size();
    if (n == 0) throw ShapeError("traces are empty");
    std::vector<double> mean(n, 0.0);
    double reference = -std::numeric_limits<double>::infinity();
    for (const TraceFile& t : traces)
        for (std::size_t i = 0; i < n; ++i) {
            mean[i] += t.records[i].best_reward / double(traces.size());
            reference = std::max(reference, t.records[i].best_reward);
        }
    std::vector<double> gaps(n);
    for (std::size_t i = 0; i < n; ++i) gaps[i] = reference - mean[i];

    RateReport report;
    report.config_hash = traces.front().config_hash;
    report.traces = traces.size();
    report.reference = reference;
    report.final_mean_best = mean.back();
    report.fit = fit_semilog(gaps, 0);
    report.reliable = report.fit.r_squared >= 0.99;

    const nlohmann::json j{{"config_hash", report.config_hash},
                           {"traces", report.traces},
                           {"reference", report.reference},
                           {"final_mean_best", report.final_mean_best},
                           {"slope", report.fit.slope},
                           {"intercept", report.fit.intercept},
                           {"r_squared", report.fit.r_squared},
                           {"points", report.fit.points},
                           {"reliable", report.reliable}};
    write_text_atomic(dir / "rate_report.json", j.dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// Theory verification: builds the exact chain for a lattice world and checks
// the structural and rate predictions against it.

struct TheoryReport {
    std::string config_hash;
    std::size_t states = 0;
    double q_max = 0.0;
    bool eigen_proper = false;
    bool elitist_structure_ok = false;
    bool lifo_all_positive = false;
    double elitist_optimal_mass = 0.0;       // after 1000 steps
    double lifo_stationary_optimal_mass = 0.0;
    double max_gamma_error = 0.0;            // |gamma_t - q_max| under the eigen start
    double max_step_ratio_error = 0.0;       // |gap_t/gap_{t-1} - q_max|
    double max_power_law_error = 0.0;        // |q_max(L) - q_max(1)^L|
    double max_slope_ratio_error = 0.0;      // |slope_L / (L slope_1) - 1|
    bool mc_checked = false;
    bool mc_consistent = true;
    double mc_max_z = 0.0;

    bool pass() const {
        return elitist_structure_ok && lifo_all_positive &&
               elitist_optimal_mass >= 1.0 - 1e-6 &&
               lifo_stationary_optimal_mass < 1.0 - 1e-3 && max_gamma_error < 1e-10 &&
               max_step_ratio_error < 1e-10 && max_power_law_error < 1e-12 &&
               max_slope_ratio_error < 0.05 && (!mc_checked || mc_consistent);
    }
};

inline TheoryReport verify_theory(const ExperimentConfig& c) {
    c.validate();
    if (c.scenario != Scenario::SyntheticGrid)
        throw ValidationError("theory verification runs on the synthetic-grid scenario");
    if (c.horizon < 10)
        throw ValidationError("theory verification needs a horizon of at least 10");
    const ScenarioBundle bundle = build_scenario(c);

    auto space = std::make_shared<StateSpace>(enumerate_and_order(bundle.grid, bundle.reward));
    Rng policy_rng(c.seeds.front());
    const Matrix lambda = random_positive_policy(space->size(), policy_rng);

    TheoryReport report;
    report.config_hash = c.hash();
    report.states = space->size();

    const TransitionModel elitist =
        build_single_transition(*space, lambda, SamplerKind::Elitist);
    const TransitionModel lifo = build_single_transition(*space, lambda, SamplerKind::Lifo);
    report.elitist_structure_ok = check_structure(elitist).elitist_ok();
    report.lifo_all_positive = check_structure(lifo).lifo_ok();

    const std::vector<double> pi0_elitist =
        initial_state_distribution(*space, SamplerKind::Elitist);
    report.elitist_optimal_mass =
        optimal_mass(elitist, propagate_series(elitist, pi0_elitist, 1000).back());
    report.lifo_stationary_optimal_mass = optimal_mass(lifo, stationary_distribution(lifo));

    const EigenInit eigen = q_max_and_eigen_init(elitist);
    report.q_max = eigen.q_max;
    report.eigen_proper = eigen.proper;

    const auto series = propagate_series(elitist, eigen.pi0, c.horizon);
    std::vector<double> gaps(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) gaps[t] = expected_gap(*space, series[t]);
    CsvTable gamma_table;
    gamma_table.header = "t,gap,gamma,predicted_gap";
    for (std::size_t t = 1; t < gaps.size(); ++t) {
        const double gamma = std::pow(gaps[t] / gaps[0], 1.0 / double(t));
        const double predicted = gaps[0] * std::pow(eigen.q_max, double(t));
        gamma_table.rows.push_back({double(t), gaps[t], gamma, predicted});
        report.max_gamma_error = std::max(report.max_gamma_error, std::abs(gamma - eigen.q_max));
        if (gaps[t - 1] > 0.0)
            report.max_step_ratio_error = std::max(
                report.max_step_ratio_error, std::abs(gaps[t] / gaps[t - 1] - eigen.q_max));
    }

    // Ensembles of identical agents: the slow mode's weight is the one-agent
    // ensemble's raised to the ensemble size, so semilog slopes scale linearly.
    const std::vector<std::size_t> sweep =
        c.l_sweep.empty() ? std::vector<std::size_t>{1, 2, 3} : c.l_sweep;
    const double q_base =
        q_max_and_eigen_init(build_multi_transition(*space, {lambda})).q_max;
    std::vector<std::pair<std::size_t, double>> slopes;
    for (std::size_t L : sweep) {
        const TransitionModel multi =
            build_multi_transition(*space, std::vector<Matrix>(L, lambda));
        const EigenInit ei = q_max_and_eigen_init(multi);
        report.max_power_law_error = std::max(
            report.max_power_law_error, std::abs(ei.q_max - std::pow(q_base, double(L))));
        const std::vector<double> pi0 = initial_state_distribution(*space, SamplerKind::Elitist);
        const auto lseries = propagate_series(multi, pi0, c.horizon);
        std::vector<double> lgaps(lseries.size());
        for (std::size_t t = 0; t < lseries.size(); ++t)
            lgaps[t] = expected_gap(*space, lseries[t]);
        // Late window only: the slow mode must dominate before its slope is read.
        const std::size_t burn =
            std::min(std::max<std::size_t>(5, lgaps.size() / 2), lgaps.size() - 6);
        slopes.emplace_back(L, fit_semilog(lgaps, burn).slope);
    }
    const double unit = slopes.front().second / double(slopes.front().first);
    for (const auto& [L, slope] : slopes)
        report.max_slope_ratio_error = std::max(
            report.max_slope_ratio_error, std::abs(slope / (double(L) * unit) - 1.0));

    if (c.mc_trajectories > 0) {
        McConfig mc;
        mc.trajectories = c.mc_trajectories;
        mc.horizon = std::min<std::size_t>(c.horizon, 50);
        mc.seed = c.seeds.front();
        const McValidation v = monte_carlo_validate(space, lambda, c.sampler, mc);
        report.mc_checked = true;
        report.mc_consistent = v.consistent();
        report.mc_max_z = v.max_z;
    }

    const std::filesystem::path dir(c.output_dir);
    write_table_csv(dir / "gamma_series.csv", gamma_table, report.config_hash);
    const nlohmann::json j{{"config_hash", report.config_hash},
                           {"states", report.states},
                           {"q_max", report.q_max},
                           {"eigen_proper", report.eigen_proper},
                           {"elitist_structure_ok", report.elitist_structure_ok},
                           {"lifo_all_positive", report.lifo_all_positive},
                           {"elitist_optimal_mass", report.elitist_optimal_mass},
                           {"lifo_stationary_optimal_mass", report.lifo_stationary_optimal_mass},
                           {"max_gamma_error", report.max_gamma_error},
                           {"max_step_ratio_error", report.max_step_ratio_error},
                           {"max_power_law_error", report.max_power_law_error},
                           {"max_slope_ratio_error", report.max_slope_ratio_error},
                           {"mc_checked", report.mc_checked},
                           {"mc_consistent", report.mc_consistent},
                           {"mc_max_z", report.mc_max_z},
                           {"pass", report.pass()}};
    write_text_atomic(dir / "theory_report.json", j.dump(2) + "\n");
    return report;
}

}  // namespace llmo

#endif
