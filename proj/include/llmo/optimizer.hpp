#ifndef LLMO_OPTIMIZER_HPP
#define LLMO_OPTIMIZER_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "llmo/agents.hpp"
#include "llmo/errors.hpp"
#include "llmo/grid.hpp"
#include "llmo/population.hpp"
#include "llmo/rng.hpp"

namespace llmo {

using RewardFn = std::function<double(const ActionVector&)>;
using ViolationFn = std::function<double(const ActionVector&)>;

struct RunConfig {
    std::size_t population = 5;   // rows per example block
    std::size_t dims = 1;
    Bounds bounds;
    std::size_t horizon = 10;     // iterations after the initial evaluation
    std::size_t retries = 3;      // attempts per agent per iteration
    SamplerKind sampler = SamplerKind::Elitist;
    bool record_populations = false;

    void validate() const {
        if (population == 0) throw ValidationError("population size must be positive");
        if (dims == 0) throw ValidationError("dimension must be positive");
        bounds.validate();
        if (bounds.dims() != dims) throw ValidationError("bounds do not match the dimension");
        if (retries == 0) throw ValidationError("retry budget must be positive");
    }
};

struct IterationRecord {
    std::size_t t = 0;
    double best_reward = 0.0;
    double mean_reward = 0.0;
    double violation = 0.0;
    std::size_t failed_agents = 0;
    bool iteration_failed = false;  // no agent delivered; memory kept as it was
};

// Everything an external watcher needs to follow one successful iteration:
// which examples the agents saw and what came back, after evaluation.
struct IterationObservation {
    std::size_t t;
    const Population& examples;
    const Population& generated;
    const BestRecord& best;
};

using Observer = std::function<void(const IterationObservation&)>;

struct RunResult {
    BestRecord best;
    std::vector<IterationRecord> trace;   // horizon + 1 rows, t = 0 first
    std::size_t evaluations = 0;
    std::size_t failed_iterations = 0;
    std::vector<Population> populations;  // filled when record_populations is set
};

inline Population uniform_population(const Bounds& bounds, std::size_t P, Rng& rng) {
    Population pop;
    pop.actions.reserve(P);
    for (std::size_t p = 0; p < P; ++p) {
        std::vector<double> x(bounds.dims());
        for (std::size_t d = 0; d < x.size(); ++d) x[d] = rng.uniform(bounds.lo[d], bounds.hi[d]);
        pop.actions.push_back(make_action(std::move(x), bounds));
    }
    return pop;
}

inline Population uniform_grid_population(const GridSpec& grid, Rng& rng) {
    Population pop;
    pop.actions.reserve(grid.P);
    for (std::size_t p = 0; p < grid.P; ++p) {
        std::vector<double> x(grid.dims());
        for (std::size_t d = 0; d < x.size(); ++d)
            x[d] = grid.value_at(d, static_cast<std::size_t>(rng.uniform_int(grid.levels[d])));
        pop.actions.push_back(make_action(std::move(x), grid.bounds));
    }
    return pop;
}

namespace detail {

inline void evaluate_rows(Population& pop, const RewardFn& reward) {
    pop.rewards.clear();
    pop.rewards.reserve(pop.actions.size());
    for (const ActionVector& a : pop.actions) {
        const double r = reward(a);
        if (!std::isfinite(r)) throw ModelError("reward model produced a non-finite value");
        pop.rewards.push_back(r);
    }
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double mean_violation(const Population& pop, const ViolationFn& violation) {
    if (!violation) return 0.0;
    double s = 0.0;
    for (const ActionVector& a : pop.actions) s += violation(a);
    return s / static_cast<double>(pop.actions.size());
}

}  // namespace detail

// The optimization loop: evaluate the initial population, then repeatedly
// sample examples from memory, let every agent propose, evaluate, track the
// strict best, and store the round as the new memory. An iteration where
// every agent fails leaves the memory untouched and is reported in the
// trace rather than aborting the run.
inline RunResult run_llmo(const RunConfig& config, const RewardFn& reward,
                          const ViolationFn& violation,
                          const std::vector<std::shared_ptr<Agent>>& agents,
                          Population initial, const Observer& observer = nullptr) {
    config.validate();
    if (!reward) throw ValidationError("run needs a reward function");
    if (agents.empty()) throw ValidationError("run needs at least one agent");
    if (initial.actions.size() != config.population)
        throw ValidationError("initial population must have exactly P rows");
    for (const ActionVector& a : initial.actions)
        if (a.values.size() != config.dims)
            throw ValidationError("initial population dimension mismatch");

    RunResult result;
    if (!initial.evaluated()) detail::evaluate_rows(initial, reward);
    result.evaluations = initial.actions.size();
    result.best = update_best(BestRecord{}, initial, 0);

    IterationRecord init_row;
    init_row.t = 0;
    init_row.best_reward = result.best.reward;
    init_row.mean_reward = detail::mean_of(initial.rewards);
    init_row.violation = detail::mean_violation(initial, violation);
    result.trace.push_back(init_row);
    if (config.record_populations) result.populations.push_back(initial);

    MemoryBuffer memory;
    memory.new_block = std::move(initial);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t t = 1; t <= config.horizon; ++t) {
        Population examples = sample_examples(memory, config.sampler, config.population);
        IterationRecord row;
        row.t = t;
        try {
            EnsembleResult gen =
                ensemble_generate(agents, examples, config.dims, config.retries);
            detail::evaluate_rows(gen.combined, reward);
            result.evaluations += gen.combined.actions.size();
            result.best = update_best(result.best, gen.combined, static_cast<long>(t));
            row.best_reward = result.best.reward;
            row.mean_reward = detail::mean_of(gen.combined.rewards);
            row.violation = detail::mean_violation(gen.combined, violation);
            row.failed_agents = gen.failed_agents;
            if (config.record_populations) result.populations.push_back(gen.combined);
            if (observer) observer({t, examples, gen.combined, result.best});
            memory = update_memory(std::move(gen.combined), std::move(examples));
        } catch (const AgentFailure&) {
            row.best_reward = result.best.reward;
            row.mean_reward = nan;
            row.violation = nan;
            row.failed_agents = agents.size();
            row.iteration_failed = true;
            ++result.failed_iterations;
        }
        result.trace.push_back(row);
    }
    return result;
}

}  // namespace llmo

#endif
