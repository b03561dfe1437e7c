#ifndef LLMO_MARKOV_HPP
#define LLMO_MARKOV_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "llmo/errors.hpp"
#include "llmo/grid.hpp"
#include "llmo/matrix.hpp"
#include "llmo/population.hpp"

namespace llmo {

// One state of the finite chain: an ordered tuple of P grid actions with
// their rewards. States are ranked by their reward lists sorted descending,
// compared lexicographically, best first. Ties are broken so that the
// representative whose rows are already in descending reward order comes
// first (that is the only arrangement selection can produce), and then by
// raw id so the order is total.
struct StateInfo {
    std::uint64_t raw = 0;
    std::vector<std::uint64_t> action_ids;
    std::vector<double> row_rewards;
    std::vector<double> sorted_rewards;  // descending

    double best_reward() const { return sorted_rewards.front(); }
};

struct StateSpace {
    GridSpec grid;
    std::vector<double> action_rewards;     // indexed by action id
    std::vector<StateInfo> states;          // canonical order, best first
    std::vector<std::uint32_t> order_of_raw;
    std::size_t optimal_count = 0;
    double r_star = 0.0;

    std::size_t size() const { return states.size(); }

    std::size_t encode(const Population& pop) const {
        return order_of_raw[grid.encode_state(pop)];
    }

    Population decode(std::size_t ordered_index, bool with_rewards = true) const {
        const StateInfo& s = states.at(ordered_index);
        Population pop;
        pop.actions.reserve(grid.P);
        for (std::uint64_t aid : s.action_ids) pop.actions.push_back(grid.action_at(aid));
        if (with_rewards) pop.rewards = s.row_rewards;
        return pop;
    }
};

// Enumerates every population on the grid and fixes the canonical order.
// The default ceiling keeps dense transition matrices affordable.
inline StateSpace enumerate_and_order(
    const GridSpec& grid, const std::function<double(const ActionVector&)>& reward,
    std::uint64_t cap = 10000) {
    grid.validate();
    const std::uint64_t n_states = grid.state_count();
    if (n_states > cap)
        throw CapacityError("state space has " + std::to_string(n_states) +
                            " states, cap is " + std::to_string(cap));

    StateSpace space;
    space.grid = grid;
    const std::uint64_t n_actions = grid.action_count();
    space.action_rewards.reserve(n_actions);
    for (std::uint64_t aid = 0; aid < n_actions; ++aid) {
        const double r = reward(grid.action_at(aid));
        if (!std::isfinite(r)) throw ModelError("reward model produced a non-finite value");
        space.action_rewards.push_back(r);
    }
    space.r_star = *std::max_element(space.action_rewards.begin(), space.action_rewards.end());

    space.states.reserve(n_states);
    for (std::uint64_t raw = 0; raw < n_states; ++raw) {
        StateInfo s;
        s.raw = raw;
        s.action_ids = grid.decode_state_actions(raw);
        s.row_rewards.reserve(grid.P);
        for (std::uint64_t aid : s.action_ids) s.row_rewards.push_back(space.action_rewards[aid]);
        s.sorted_rewards = s.row_rewards;
        std::sort(s.sorted_rewards.begin(), s.sorted_rewards.end(), std::greater<>());
        space.states.push_back(std::move(s));
    }

    std::sort(space.states.begin(), space.states.end(), [](const StateInfo& a, const StateInfo& b) {
        for (std::size_t k = 0; k < a.sorted_rewards.size(); ++k)
            if (a.sorted_rewards[k] != b.sorted_rewards[k])
                return a.sorted_rewards[k] > b.sorted_rewards[k];
        for (std::size_t k = 0; k < a.row_rewards.size(); ++k)
            if (a.row_rewards[k] != b.row_rewards[k]) return a.row_rewards[k] > b.row_rewards[k];
        return a.raw < b.raw;
    });

    space.order_of_raw.assign(n_states, 0);
    for (std::size_t i = 0; i < space.states.size(); ++i)
        space.order_of_raw[space.states[i].raw] = static_cast<std::uint32_t>(i);
    space.optimal_count = 0;
    for (const StateInfo& s : space.states)
        if (s.best_reward() == space.r_star) ++space.optimal_count;
    return space;
}

// Column-stochastic chain over the ordered states; column j is the
// distribution of successors of state j.
struct TransitionModel {
    Matrix matrix;
    std::size_t optimal_count = 0;
    SamplerKind sampler = SamplerKind::Elitist;
    std::size_t agents = 1;

    std::size_t size() const { return matrix.rows(); }
    Matrix block_opt_opt() const { return matrix.block(0, optimal_count, 0, optimal_count); }
    Matrix block_opt_rest() const { return matrix.block(0, optimal_count, optimal_count, size()); }
    Matrix block_rest_opt() const { return matrix.block(optimal_count, size(), 0, optimal_count); }
    Matrix block_rest_rest() const {
        return matrix.block(optimal_count, size(), optimal_count, size());
    }
};

inline void require_policy(const StateSpace& space, const Matrix& lambda) {
    if (lambda.rows() != space.size() || lambda.cols() != space.size())
        throw ValidationError("policy matrix does not match the state space");
    if (!is_column_stochastic(lambda))
        throw ValidationError("policy matrix is not column-stochastic");
}

// Successor under elitist selection when the agent emits population `gen`
// while the examples are `src`: the P best of the union, new rows first on
// ties. Runs the very same selection code as the optimizer loop.
inline std::size_t elitist_successor(const StateSpace& space,
                                     const std::vector<Population>& decoded,
                                     std::size_t gen, std::size_t src) {
    MemoryBuffer mem;
    mem.new_block = decoded[gen];
    mem.example_block = decoded[src];
    return space.encode(elitist_sample(mem, space.grid.P));
}

// Exact single-agent transition matrix: every generated population is
// enumerated, its selection outcome computed, and the policy mass
// accumulated. No sampling is involved.
inline TransitionModel build_single_transition(const StateSpace& space, const Matrix& lambda,
                                               SamplerKind sampler) {
    require_policy(space, lambda);
    const std::size_t n = space.size();
    TransitionModel model;
    model.matrix = Matrix(n, n);
    model.optimal_count = space.optimal_count;
    model.sampler = sampler;
    model.agents = 1;

    if (sampler == SamplerKind::Lifo) {
        // The next example block is the generation itself.
        model.matrix = lambda;
        return model;
    }

    std::vector<Population> decoded(n);
    for (std::size_t i = 0; i < n; ++i) decoded[i] = space.decode(i);
    for (std::size_t src = 0; src < n; ++src) {
        for (std::size_t gen = 0; gen < n; ++gen) {
            const double p = lambda(gen, src);
            if (p == 0.0) continue;
            model.matrix(elitist_successor(space, decoded, gen, src), src) += p;
        }
    }
    return model;
}

// Multi-agent elitist chain. Conditioned on the shared examples the agents
// draw independently, and the chain tracks the best state seen among the L
// generations and the current examples; the closed form needs only, per
// agent, the cumulative policy mass at or below each state in the canonical
// order. For heterogeneous agents the products run across the ensemble.
inline TransitionModel build_multi_transition(const StateSpace& space,
                                              const std::vector<Matrix>& lambdas) {
    if (lambdas.empty()) throw ValidationError("ensemble transition needs at least one policy");
    for (const Matrix& l : lambdas) require_policy(space, l);
    const std::size_t n = space.size();
    const std::size_t L = lambdas.size();

    TransitionModel model;
    model.matrix = Matrix(n, n);
    model.optimal_count = space.optimal_count;
    model.sampler = SamplerKind::Elitist;
    model.agents = L;

    // suffix[l][p] = mass agent l puts on states at position >= p.
    std::vector<std::vector<double>> suffix(L, std::vector<double>(n + 1, 0.0));
    for (std::size_t src = 0; src < n; ++src) {
        for (std::size_t l = 0; l < L; ++l) {
            suffix[l][n] = 0.0;
            for (std::size_t p = n; p-- > 0;)
                suffix[l][p] = suffix[l][p + 1] + lambdas[l](p, src);
        }
        auto product_at = [&](std::size_t p) {
            double prod = 1.0;
            for (std::size_t l = 0; l < L; ++l) prod *= suffix[l][p];
            return prod;
        };
        for (std::size_t dst = 0; dst < src; ++dst)
            model.matrix(dst, src) = product_at(dst) - product_at(dst + 1);
        model.matrix(src, src) = product_at(src);
    }
    return model;
}

struct StructureReport {
    bool column_stochastic = false;
    bool opt_to_rest_zero = false;       // no leak from optimal states
    bool opt_block_upper = false;
    bool rest_block_upper = false;
    bool rest_columns_reach_opt = false; // every non-optimal column has mass into the optimal set
    bool all_positive = false;
    double rest_spectral_radius = 0.0;
    bool rest_radius_below_one = false;

    bool elitist_ok() const {
        return column_stochastic && opt_to_rest_zero && opt_block_upper && rest_block_upper &&
               rest_columns_reach_opt && rest_radius_below_one;
    }
    bool lifo_ok() const { return column_stochastic && all_positive; }
};

inline StructureReport check_structure(const TransitionModel& model) {
    StructureReport rep;
    rep.column_stochastic = is_column_stochastic(model.matrix);
    const Matrix p1 = model.block_opt_opt();
    const Matrix p2 = model.block_opt_rest();
    const Matrix p3 = model.block_rest_opt();
    const Matrix p4 = model.block_rest_rest();

    rep.opt_to_rest_zero = true;
    for (std::size_t i = 0; i < p3.rows(); ++i)
        for (std::size_t j = 0; j < p3.cols(); ++j)
            if (p3(i, j) != 0.0) rep.opt_to_rest_zero = false;

    rep.opt_block_upper = is_upper_triangular_exact(p1);
    rep.rest_block_upper = is_upper_triangular_exact(p4);

    rep.rest_columns_reach_opt = true;
    for (std::size_t j = 0; j < p2.cols(); ++j) {
        bool positive = false;
        for (std::size_t i = 0; i < p2.rows(); ++i)
            if (p2(i, j) > 0.0) positive = true;
        if (!positive) rep.rest_columns_reach_opt = false;
    }

    rep.all_positive = is_entrywise_positive(model.matrix);
    rep.rest_spectral_radius = p4.rows() == 0 ? 0.0 : spectral_radius(p4);
    rep.rest_radius_below_one = rep.rest_spectral_radius < 1.0;
    return rep;
}

// State distribution pushed through the chain for `horizon` steps, with the
// mass renormalized after every multiply to absorb rounding drift. Returns
// horizon + 1 distributions, the input first.
inline std::vector<std::vector<double>> propagate_series(const TransitionModel& model,
                                                         std::vector<double> pi0,
                                                         std::size_t horizon) {
    if (pi0.size() != model.size()) throw ValidationError("initial distribution size mismatch");
    double sum = 0.0;
    for (double v : pi0) {
        if (v < 0.0) throw ValidationError("initial distribution has negative mass");
        sum += v;
    }
    if (sum <= 0.0) throw ValidationError("initial distribution has no mass");
    for (double& v : pi0) v /= sum;

    std::vector<std::vector<double>> series;
    series.reserve(horizon + 1);
    series.push_back(pi0);
    for (std::size_t t = 0; t < horizon; ++t) {
        std::vector<double> next = model.matrix.matvec(series.back());
        double s = 0.0;
        for (double v : next) s += v;
        for (double& v : next) v /= s;
        series.push_back(std::move(next));
    }
    return series;
}

inline std::vector<double> uniform_distribution(std::size_t n) {
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

inline double optimal_mass(const TransitionModel& model, const std::vector<double>& pi) {
    double m = 0.0;
    for (std::size_t i = 0; i < model.optimal_count; ++i) m += pi[i];
    return m;
}

// Fixed point of the chain by iteration; positive chains converge fast.
inline std::vector<double> stationary_distribution(const TransitionModel& model,
                                                   double tol = 1e-13,
                                                   std::size_t max_iter = 100000) {
    std::vector<double> pi = uniform_distribution(model.size());
    for (std::size_t it = 0; it < max_iter; ++it) {
        std::vector<double> next = model.matrix.matvec(pi);
        double s = 0.0;
        for (double v : next) s += v;
        for (double& v : next) v /= s;
        double diff = 0.0;
        for (std::size_t i = 0; i < pi.size(); ++i) diff += std::abs(next[i] - pi[i]);
        pi = std::move(next);
        if (diff < tol) return pi;
    }
    return pi;
}

// Expected best in-state reward under a distribution.
inline double mean_best_reward(const StateSpace& space, const std::vector<double>& pi) {
    double m = 0.0;
    for (std::size_t i = 0; i < space.size(); ++i) m += pi[i] * space.states[i].best_reward();
    return m;
}

// Expected optimality gap, summed state by state. The direct sum of
// nonnegative terms keeps full relative precision even when the gap has
// decayed far below the reward scale, which the difference
// r_star - mean_best_reward would not.
inline double expected_gap(const StateSpace& space, const std::vector<double>& pi) {
    double g = 0.0;
    for (std::size_t i = 0; i < space.size(); ++i)
        g += pi[i] * (space.r_star - space.states[i].best_reward());
    return g;
}

inline std::vector<double> gap_series(const StateSpace& space,
                                      const std::vector<std::vector<double>>& pis) {
    std::vector<double> gaps;
    gaps.reserve(pis.size());
    for (const auto& pi : pis) gaps.push_back(expected_gap(space, pi));
    return gaps;
}

// Average convergence rate: the per-step geometric mean of the optimality
// gap's decay, measured from the start.
inline std::vector<double> acr_series(const StateSpace& space,
                                      const std::vector<std::vector<double>>& pis) {
    const std::vector<double> gaps = gap_series(space, pis);
    if (gaps.empty() || gaps.front() == 0.0)
        throw DegenerateError("convergence rate undefined when the initial gap is zero");
    std::vector<double> acr;
    acr.reserve(gaps.size() > 0 ? gaps.size() - 1 : 0);
    for (std::size_t t = 1; t < gaps.size(); ++t)
        acr.push_back(std::pow(gaps[t] / gaps.front(), 1.0 / static_cast<double>(t)));
    return acr;
}

struct EigenInit {
    double q_max = 0.0;
    std::vector<double> pi0;     // full length, zero mass on optimal states
    bool proper = true;          // false when the delta fallback was used
    std::size_t argmax_state = 0;
};

// Slowest mode of the non-optimal block. For an elitist chain that block is
// upper triangular, so q_max is its largest diagonal entry and the matching
// eigenvector comes from back-substitution; seeding the chain with it makes
// the optimality gap decay by exactly q_max each step. If the eigenvector
// is ambiguous the start collapses to a point mass on the argmax state and
// the report says so.
inline EigenInit q_max_and_eigen_init(const TransitionModel& model) {
    const std::size_t n = model.size();
    const std::size_t n_opt = model.optimal_count;
    if (n_opt >= n) throw DegenerateError("no non-optimal states: every state is optimal");
    const Matrix q3 = model.block_rest_rest();
    if (!is_upper_triangular_exact(q3))
        throw ValidationError("rate analysis needs an elitist (upper-triangular) chain");
    const std::size_t m = q3.rows();

    EigenInit out;
    // First index attaining the maximum, so every denominator in the
    // back-substitution below is strictly positive.
    std::size_t k = 0;
    for (std::size_t i = 0; i < m; ++i)
        if (q3(i, i) > q3(k, k)) k = i;
    for (std::size_t i = 0; i < k; ++i)
        if (q3(i, i) == q3(k, k)) {
            k = i;
            break;
        }
    out.q_max = q3(k, k);
    out.argmax_state = n_opt + k;

    std::vector<double> v(m, 0.0);
    v[k] = 1.0;
    bool proper = true;
    for (std::size_t j = k; j-- > 0;) {
        double num = 0.0;
        for (std::size_t i = j + 1; i <= k; ++i) num += q3(j, i) * v[i];
        const double den = out.q_max - q3(j, j);
        if (den <= 1e-14 * std::max(1.0, out.q_max)) {
            if (num > 0.0) {
                proper = false;
                break;
            }
            v[j] = 0.0;
        } else {
            v[j] = num / den;
        }
    }
    if (!proper) {
        std::fill(v.begin(), v.end(), 0.0);
        v[k] = 1.0;
    }
    out.proper = proper;
    double sum = 0.0;
    for (double x : v) sum += x;
    out.pi0.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) out.pi0[n_opt + i] = v[i] / sum;
    return out;
}

struct SemilogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
};

// Least squares of log10(values) against the step index. Only positive
// values carry information; fewer than five usable points is an error, not
// a guess.
inline SemilogFit fit_semilog(const std::vector<double>& values, std::size_t first_index = 0) {
    std::vector<double> xs, ys;
    for (std::size_t t = first_index; t < values.size(); ++t) {
        if (values[t] > 0.0 && std::isfinite(values[t])) {
            xs.push_back(static_cast<double>(t));
            ys.push_back(std::log10(values[t]));
        }
    }
    if (xs.size() < 5)
        throw FitError("semilog fit needs at least 5 positive points, found " +
                       std::to_string(xs.size()));
    const double n = static_cast<double>(xs.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw FitError("semilog fit needs more than one distinct step");
    SemilogFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.points = xs.size();
    if (syy == 0.0) {
        fit.r_squared = 1.0;
    } else {
        const double ss_res = syy - fit.slope * fit.slope * sxx;
        fit.r_squared = 1.0 - std::max(0.0, ss_res) / syy;
    }
    return fit;
}

}  // namespace llmo

#endif
