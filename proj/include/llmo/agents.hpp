#ifndef LLMO_AGENTS_HPP
#define LLMO_AGENTS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "llmo/errors.hpp"
#include "llmo/grid.hpp"
#include "llmo/markov.hpp"
#include "llmo/matrix.hpp"
#include "llmo/population.hpp"
#include "llmo/rng.hpp"

namespace llmo {

// Probabilities proportional to exp(logit / alpha). Entries outside
// `allowed` get exactly zero; an empty `allowed` means every index. The
// max-logit shift keeps the exponentials in range.
inline std::vector<double> softmax_with_temperature(const std::vector<double>& logits,
                                                    double alpha,
                                                    const std::vector<std::size_t>& allowed = {}) {
    if (!(alpha > 0.0)) throw ValidationError("softmax temperature must be positive");
    if (logits.empty()) throw ValidationError("softmax needs at least one logit");
    std::vector<std::size_t> idx = allowed;
    if (idx.empty()) {
        idx.resize(logits.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
    }
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i : idx) {
        if (i >= logits.size()) throw ValidationError("softmax support index out of range");
        best = std::max(best, logits[i]);
    }
    if (!std::isfinite(best))
        throw DegenerateError("softmax support carries no finite logit");
    std::vector<double> probs(logits.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i : idx) {
        const double w = std::exp((logits[i] - best) / alpha);
        probs[i] = w;
        sum += w;
    }
    for (std::size_t i : idx) probs[i] /= sum;
    return probs;
}

// Indices of the k largest values, ties resolved toward the lower index.
inline std::vector<std::size_t> top_k_indices(const std::vector<double>& values, std::size_t k) {
    if (k == 0 || k > values.size())
        throw ValidationError("top-k size must be in [1, n]");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

// Column-stochastic policy from a logit table: column j is the softmax of
// logits(., j), optionally restricted to that column's top_k logits.
inline Matrix policy_from_logits(const Matrix& logits, double alpha, std::size_t top_k = 0) {
    if (logits.rows() == 0 || logits.cols() == 0)
        throw ValidationError("policy needs a non-empty logit table");
    Matrix policy(logits.rows(), logits.cols());
    std::vector<double> col(logits.rows());
    for (std::size_t j = 0; j < logits.cols(); ++j) {
        for (std::size_t i = 0; i < logits.rows(); ++i) col[i] = logits(i, j);
        std::vector<std::size_t> allowed;
        if (top_k > 0) allowed = top_k_indices(col, top_k);
        const std::vector<double> probs = softmax_with_temperature(col, alpha, allowed);
        for (std::size_t i = 0; i < logits.rows(); ++i) policy(i, j) = probs[i];
    }
    return policy;
}

// Every column strictly positive: softmax of standard normal logits.
inline Matrix random_positive_policy(std::size_t n, Rng& rng) {
    Matrix logits(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) logits(i, j) = rng.gaussian();
    return policy_from_logits(logits, 1.0);
}

// A generator of candidate populations. Implementations receive the current
// example rows (always evaluated) and return P unevaluated proposals; they
// signal failure by throwing, and the ensemble driver handles retries.
class Agent {
  public:
    virtual ~Agent() = default;
    virtual std::string name() const = 0;
    virtual Population generate(const Population& examples) = 0;
};

// Draws the next population from an explicit per-state policy over an
// enumerated grid world. This is the agent the transition matrices model
// exactly, so simulated runs and the chain algebra can be compared one to
// one.
class SyntheticStateAgent final : public Agent {
  public:
    SyntheticStateAgent(std::shared_ptr<const StateSpace> space, Matrix policy,
                        std::uint64_t seed, std::string name = "synthetic-state")
        : space_(std::move(space)), rng_(seed), name_(std::move(name)) {
        require_policy(*space_, policy);
        const std::size_t n = space_->size();
        cdf_.assign(n, std::vector<double>(n, 0.0));
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += policy(i, j);
                cdf_[j][i] = acc;
            }
            cdf_[j][n - 1] = 1.0;
        }
    }

    std::string name() const override { return name_; }

    Population generate(const Population& examples) override {
        const std::size_t j = space_->encode(examples);
        const double u = rng_.uniform01();
        const auto& col = cdf_[j];
        const std::size_t drawn =
            std::lower_bound(col.begin(), col.end(), u) - col.begin();
        return space_->decode(std::min(drawn, col.size() - 1), /*with_rewards=*/false);
    }

  private:
    std::shared_ptr<const StateSpace> space_;
    std::vector<std::vector<double>> cdf_;
    Rng rng_;
    std::string name_;
};

// Proposes P points drawn uniformly, either anywhere in the box or on the
// grid lattice.
class UniformRandomAgent final : public Agent {
  public:
    UniformRandomAgent(Bounds bounds, std::size_t population, std::uint64_t seed,
                       std::string name = "uniform-random")
        : bounds_(std::move(bounds)), population_(population), rng_(seed),
          name_(std::move(name)) {
        bounds_.validate();
        if (population_ == 0) throw ValidationError("population size must be positive");
    }

    UniformRandomAgent(GridSpec grid, std::uint64_t seed, std::string name = "uniform-grid")
        : bounds_(grid.bounds), population_(grid.P), grid_(std::move(grid)), on_grid_(true),
          rng_(seed), name_(std::move(name)) {
        grid_.validate();
    }

    std::string name() const override { return name_; }

    Population generate(const Population&) override {
        Population pop;
        pop.actions.reserve(population_);
        for (std::size_t p = 0; p < population_; ++p) {
            std::vector<double> x(bounds_.dims());
            for (std::size_t d = 0; d < bounds_.dims(); ++d)
                x[d] = on_grid_ ? grid_.value_at(d, static_cast<std::size_t>(
                                                        rng_.uniform_int(grid_.levels[d])))
                                : rng_.uniform(bounds_.lo[d], bounds_.hi[d]);
            pop.actions.push_back(make_action(std::move(x), bounds_));
        }
        return pop;
    }

  private:
    Bounds bounds_;
    std::size_t population_ = 0;
    GridSpec grid_;
    bool on_grid_ = false;
    Rng rng_;
    std::string name_;
};

// Local search on the grid: each proposed row either jumps to a uniform
// lattice point (probability epsilon) or perturbs a random example row by
// at most `width` levels per dimension, clamped to the lattice. Paired with
// elitist selection this climbs toward good regions; with LIFO selection
// there is no pressure and it drifts.
class ExploringGridAgent final : public Agent {
  public:
    ExploringGridAgent(GridSpec grid, double epsilon, std::size_t width, std::uint64_t seed,
                       std::string name = "exploring-grid")
        : grid_(std::move(grid)), epsilon_(epsilon), width_(width), rng_(seed),
          name_(std::move(name)) {
        grid_.validate();
        if (!(epsilon_ >= 0.0 && epsilon_ <= 1.0))
            throw ValidationError("exploration rate must lie in [0, 1]");
        if (width_ == 0) throw ValidationError("perturbation width must be positive");
    }

    std::string name() const override { return name_; }

    Population generate(const Population& examples) override {
        if (examples.actions.empty())
            throw ValidationError("exploring agent needs at least one example row");
        Population pop;
        pop.actions.reserve(grid_.P);
        for (std::size_t p = 0; p < grid_.P; ++p) {
            std::vector<double> x(grid_.bounds.dims());
            if (rng_.uniform01() < epsilon_) {
                for (std::size_t d = 0; d < x.size(); ++d)
                    x[d] = grid_.value_at(d, rng_.uniform_int(grid_.levels[d]));
            } else {
                const ActionVector& anchor =
                    examples.actions[rng_.uniform_int(examples.actions.size())];
                for (std::size_t d = 0; d < x.size(); ++d) {
                    const std::int64_t span = static_cast<std::int64_t>(2 * width_ + 1);
                    const std::int64_t offset =
                        static_cast<std::int64_t>(rng_.uniform_int(
                            static_cast<std::uint64_t>(span))) -
                        static_cast<std::int64_t>(width_);
                    std::int64_t level =
                        static_cast<std::int64_t>(grid_.level_of(d, anchor.values[d])) + offset;
                    level = std::clamp<std::int64_t>(
                        level, 0, static_cast<std::int64_t>(grid_.levels[d]) - 1);
                    x[d] = grid_.value_at(d, static_cast<std::uint64_t>(level));
                }
            }
            pop.actions.push_back(make_action(std::move(x), grid_.bounds));
        }
        return pop;
    }

  private:
    GridSpec grid_;
    double epsilon_ = 0.0;
    std::size_t width_ = 1;
    Rng rng_;
    std::string name_;
};

struct EnsembleResult {
    Population combined;             // rows in agent order, failed agents skipped
    std::size_t failed_agents = 0;
    std::vector<std::string> failures;  // one message per exhausted agent
};

// Collects one generation from every agent. Each agent gets `retries`
// attempts; an agent that keeps failing is dropped from this round and the
// rest proceed. Only a fully failed round is an error.
inline EnsembleResult ensemble_generate(const std::vector<std::shared_ptr<Agent>>& agents,
                                        const Population& examples, std::size_t dims,
                                        std::size_t retries = 3) {
    if (agents.empty()) throw ValidationError("ensemble needs at least one agent");
    if (retries == 0) throw ValidationError("retry budget must be positive");
    EnsembleResult out;
    for (const auto& agent : agents) {
        std::string last_error;
        bool done = false;
        for (std::size_t attempt = 0; attempt < retries && !done; ++attempt) {
            try {
                Population gen = agent->generate(examples);
                if (gen.actions.empty()) throw ValidationError("agent returned no actions");
                for (const ActionVector& a : gen.actions)
                    if (a.values.size() != dims)
                        throw ShapeError("agent returned a row of wrong dimension");
                for (ActionVector& a : gen.actions)
                    out.combined.actions.push_back(std::move(a));
                done = true;
            } catch (const Error& e) {
                last_error = e.what();
            }
        }
        if (!done) {
            ++out.failed_agents;
            out.failures.push_back(agent->name() + ": " + last_error);
        }
    }
    if (out.failed_agents == agents.size())
        throw AgentFailure(AgentFailure::Kind::Api,
                           "every agent failed; first: " + out.failures.front(),
                           static_cast<int>(retries));
    return out;
}

}  // namespace llmo

#endif
