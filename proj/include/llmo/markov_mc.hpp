#ifndef LLMO_MARKOV_MC_HPP
#define LLMO_MARKOV_MC_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "llmo/agents.hpp"
#include "llmo/markov.hpp"
#include "llmo/optimizer.hpp"
#include "llmo/rng.hpp"

namespace llmo {

// Distribution of the first example block when the initial population is
// drawn uniformly over all states: LIFO passes it through unchanged, the
// elitist sampler sorts it, folding permuted twins together.
inline std::vector<double> initial_state_distribution(const StateSpace& space,
                                                      SamplerKind sampler) {
    const std::size_t n = space.size();
    if (sampler == SamplerKind::Lifo) return uniform_distribution(n);
    std::vector<double> pi0(n, 0.0);
    const double w = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        MemoryBuffer mem;
        mem.new_block = space.decode(i);
        pi0[space.encode(elitist_sample(mem, space.grid.P))] += w;
    }
    return pi0;
}

// Exact occupancy series of the example-block chain, horizon + 1 rows.
inline std::vector<std::vector<double>> expected_occupancy(const StateSpace& space,
                                                           const Matrix& lambda,
                                                           SamplerKind sampler,
                                                           std::size_t horizon) {
    TransitionModel model = build_single_transition(space, lambda, sampler);
    return propagate_series(model, initial_state_distribution(space, sampler), horizon);
}

struct McConfig {
    std::size_t trajectories = 1000;
    std::size_t horizon = 20;  // chain steps; the run does horizon + 1 iterations
    std::uint64_t seed = 1;
    double z_threshold = 3.0;
};

// State visit counts from real optimization runs: each trajectory starts
// from its own uniform initial population and is driven by a fresh policy
// agent, and the examples fed to the agent at every iteration are binned.
inline std::vector<std::vector<std::size_t>> simulate_occupancy(
    const std::shared_ptr<const StateSpace>& space, const Matrix& lambda, SamplerKind sampler,
    const McConfig& mc) {
    require_policy(*space, lambda);
    const std::size_t n = space->size();
    std::vector<std::vector<std::size_t>> counts(mc.horizon + 1,
                                                 std::vector<std::size_t>(n, 0));
    RunConfig config;
    config.population = space->grid.P;
    config.dims = space->grid.dims();
    config.bounds = space->grid.bounds;
    config.horizon = mc.horizon + 1;
    config.sampler = sampler;
    RewardFn reward = [&space](const ActionVector& a) {
        return space->action_rewards[space->grid.encode_action(a)];
    };

    Rng base(mc.seed);
    for (std::size_t k = 0; k < mc.trajectories; ++k) {
        Rng traj = base.stream(k);
        const std::size_t start =
            static_cast<std::size_t>(traj.uniform_int(static_cast<std::uint64_t>(n)));
        auto agent = std::make_shared<SyntheticStateAgent>(space, lambda, traj.u64());
        Observer record = [&](const IterationObservation& o) {
            if (o.t <= mc.horizon + 1) ++counts[o.t - 1][space->encode(o.examples)];
        };
        RunResult res = run_llmo(config, reward, nullptr, {agent},
                                 space->decode(start, /*with_rewards=*/false), record);
        if (res.failed_iterations != 0)
            throw ModelError("policy agent failed during chain validation");
    }
    return counts;
}

struct McCell {
    std::size_t t = 0;
    std::size_t state = 0;
    double expected = 0.0;
    std::size_t count = 0;
    double z = 0.0;
};

struct McValidation {
    std::size_t trajectories = 0;
    std::size_t comparisons = 0;
    std::size_t violations = 0;
    double max_z = 0.0;
    std::vector<McCell> violating_cells;

    bool consistent() const { return violations == 0; }
};

// Binomial check per (step, state) cell. Cells with exact probability zero
// or one must match exactly; the rest get a three sigma band around the
// expected count, widened by one count so discreteness at tiny
// probabilities cannot trip it.
inline McValidation compare_occupancy(const std::vector<std::vector<std::size_t>>& counts,
                                      const std::vector<std::vector<double>>& expected,
                                      std::size_t trajectories, double z_threshold = 3.0) {
    if (counts.size() != expected.size() || counts.empty())
        throw ValidationError("occupancy tables differ in horizon");
    McValidation out;
    out.trajectories = trajectories;
    const double N = static_cast<double>(trajectories);
    for (std::size_t t = 0; t < counts.size(); ++t) {
        if (counts[t].size() != expected[t].size())
            throw ValidationError("occupancy tables differ in state count");
        for (std::size_t s = 0; s < counts[t].size(); ++s) {
            const double p = expected[t][s];
            const double c = static_cast<double>(counts[t][s]);
            ++out.comparisons;
            bool bad = false;
            double z = 0.0;
            if (p == 0.0) {
                bad = c != 0.0;
                z = bad ? std::numeric_limits<double>::infinity() : 0.0;
            } else if (p == 1.0) {
                bad = c != N;
                z = bad ? std::numeric_limits<double>::infinity() : 0.0;
            } else {
                const double sigma = std::sqrt(N * p * (1.0 - p));
                z = std::abs(c - N * p) / sigma;
                bad = std::abs(c - N * p) > std::max(z_threshold * sigma, 1.0);
                out.max_z = std::max(out.max_z, z);
            }
            if (bad) {
                ++out.violations;
                if (out.violating_cells.size() < 32)
                    out.violating_cells.push_back({t, s, p, counts[t][s], z});
            }
        }
    }
    return out;
}

inline McValidation monte_carlo_validate(const std::shared_ptr<const StateSpace>& space,
                                         const Matrix& lambda, SamplerKind sampler,
                                         const McConfig& mc) {
    const auto counts = simulate_occupancy(space, lambda, sampler, mc);
    const auto expected = expected_occupancy(*space, lambda, sampler, mc.horizon);
    return compare_occupancy(counts, expected, mc.trajectories, mc.z_threshold);
}

}  // namespace llmo

#endif
