#ifndef LLMO_BASELINES_HPP
#define LLMO_BASELINES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "llmo/errors.hpp"
#include "llmo/optimizer.hpp"
#include "llmo/population.hpp"
#include "llmo/rewards.hpp"
#include "llmo/rng.hpp"

namespace llmo {

struct BaselineResult {
    ActionVector best_action;
    double best_reward = -std::numeric_limits<double>::infinity();
    std::vector<double> best_trace;  // best so far, one entry per round
    std::size_t evaluations = 0;
};

// ---------------------------------------------------------------------------
// Random search.

inline BaselineResult brute_force_optimize(const Bounds& bounds, const RewardFn& reward,
                                           std::size_t samples, std::uint64_t seed) {
    bounds.validate();
    if (!reward) throw ValidationError("search needs a reward function");
    if (samples == 0) throw ValidationError("sample budget must be positive");
    Rng rng(seed);
    BaselineResult out;
    for (std::size_t i = 0; i < samples; ++i) {
        std::vector<double> x(bounds.dims());
        for (std::size_t d = 0; d < x.size(); ++d) x[d] = rng.uniform(bounds.lo[d], bounds.hi[d]);
        const double r = reward(ActionVector{x});
        ++out.evaluations;
        if (r > out.best_reward) {
            out.best_reward = r;
            out.best_action = ActionVector{std::move(x)};
        }
        out.best_trace.push_back(out.best_reward);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Genetic algorithm.

// Gene-wise mix of two parents: mask true takes the first parent.
inline std::vector<double> uniform_crossover(const std::vector<double>& a,
                                             const std::vector<double>& b,
                                             const std::vector<bool>& mask) {
    if (a.size() != b.size() || a.size() != mask.size())
        throw ValidationError("crossover operands must have equal length");
    std::vector<double> child(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) child[i] = mask[i] ? a[i] : b[i];
    return child;
}

struct GaConfig {
    std::size_t population = 20;
    std::size_t generations = 50;
    double parent_fraction = 0.3;  // share of the population eligible as parents
    double mutation_rate = 0.1;    // per-gene chance of a uniform resample
    std::uint64_t seed = 1;

    void validate() const {
        if (population < 2) throw ValidationError("ga needs at least two individuals");
        if (!(parent_fraction > 0.0 && parent_fraction <= 1.0))
            throw ValidationError("parent fraction must lie in (0, 1]");
        if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0))
            throw ValidationError("mutation rate must lie in [0, 1]");
    }
};

// Elitist generational GA: the best individual survives unchanged, the rest
// are bred from the top fraction by binary tournament, uniform crossover,
// and per-gene uniform mutation.
inline BaselineResult ga_optimize(const Bounds& bounds, const RewardFn& reward,
                                  const GaConfig& config) {
    bounds.validate();
    config.validate();
    if (!reward) throw ValidationError("search needs a reward function");
    Rng rng(config.seed);
    const std::size_t N = config.population;
    const std::size_t D = bounds.dims();

    std::vector<std::vector<double>> pop(N, std::vector<double>(D));
    std::vector<double> fit(N);
    BaselineResult out;
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t d = 0; d < D; ++d) pop[i][d] = rng.uniform(bounds.lo[d], bounds.hi[d]);
        fit[i] = reward(ActionVector{pop[i]});
        ++out.evaluations;
    }

    auto record_best = [&] {
        for (std::size_t i = 0; i < N; ++i)
            if (fit[i] > out.best_reward) {
                out.best_reward = fit[i];
                out.best_action = ActionVector{pop[i]};
            }
        out.best_trace.push_back(out.best_reward);
    };
    record_best();

    const std::size_t pool =
        std::max<std::size_t>(2, static_cast<std::size_t>(
                                     std::lround(config.parent_fraction * double(N))));
    std::vector<std::size_t> rank(N);
    for (std::size_t gen = 0; gen < config.generations; ++gen) {
        std::iota(rank.begin(), rank.end(), std::size_t{0});
        std::stable_sort(rank.begin(), rank.end(),
                         [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });
        auto tournament = [&]() -> const std::vector<double>& {
            const std::size_t a = rank[rng.uniform_int(pool)];
            const std::size_t b = rank[rng.uniform_int(pool)];
            return fit[a] >= fit[b] ? pop[a] : pop[b];
        };
        std::vector<std::vector<double>> next;
        std::vector<double> next_fit;
        next.reserve(N);
        next_fit.reserve(N);
        next.push_back(pop[rank[0]]);  // elite, not re-evaluated
        next_fit.push_back(fit[rank[0]]);
        while (next.size() < N) {
            const std::vector<double>& pa = tournament();
            const std::vector<double>& pb = tournament();
            std::vector<bool> mask(D);
            for (std::size_t d = 0; d < D; ++d) mask[d] = rng.uniform01() < 0.5;
            std::vector<double> child = uniform_crossover(pa, pb, mask);
            for (std::size_t d = 0; d < D; ++d)
                if (rng.uniform01() < config.mutation_rate)
                    child[d] = rng.uniform(bounds.lo[d], bounds.hi[d]);
            next_fit.push_back(reward(ActionVector{child}));
            next.push_back(std::move(child));
            ++out.evaluations;
        }
        pop = std::move(next);
        fit = std::move(next_fit);
        record_best();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bayesian optimization on a bagged tree surrogate.

namespace detail {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;
};

class RegressionTree {
  public:
    void fit(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
             std::vector<std::size_t> idx, std::size_t max_depth, std::size_t min_leaf) {
        nodes_.clear();
        build(xs, ys, std::move(idx), max_depth, min_leaf);
    }

    double predict(const std::vector<double>& x) const {
        int node = 0;
        while (nodes_[node].feature >= 0)
            node = x[nodes_[node].feature] <= nodes_[node].threshold ? nodes_[node].left
                                                                     : nodes_[node].right;
        return nodes_[node].value;
    }

  private:
    int build(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
              std::vector<std::size_t> idx, std::size_t depth, std::size_t min_leaf) {
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        double mean = 0.0;
        for (std::size_t i : idx) mean += ys[i];
        mean /= double(idx.size());
        nodes_[self].value = mean;
        if (depth == 0 || idx.size() < 2 * min_leaf) return self;

        // Best split by squared error, scanning sorted prefix sums.
        double best_gain = 0.0;
        int best_feature = -1;
        double best_threshold = 0.0;
        double base = 0.0;
        for (std::size_t i : idx) base += (ys[i] - mean) * (ys[i] - mean);
        const std::size_t dims = xs[idx[0]].size();
        std::vector<std::size_t> sorted = idx;
        for (std::size_t f = 0; f < dims; ++f) {
            std::sort(sorted.begin(), sorted.end(),
                      [&](std::size_t a, std::size_t b) { return xs[a][f] < xs[b][f]; });
            double left_sum = 0.0, left_sq = 0.0;
            double total_sum = 0.0, total_sq = 0.0;
            for (std::size_t i : sorted) {
                total_sum += ys[i];
                total_sq += ys[i] * ys[i];
            }
            for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
                const double y = ys[sorted[k]];
                left_sum += y;
                left_sq += y * y;
                if (xs[sorted[k]][f] == xs[sorted[k + 1]][f]) continue;
                const std::size_t nl = k + 1, nr = sorted.size() - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double right_sum = total_sum - left_sum;
                const double right_sq = total_sq - left_sq;
                const double sse = (left_sq - left_sum * left_sum / double(nl)) +
                                   (right_sq - right_sum * right_sum / double(nr));
                const double gain = base - sse;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (xs[sorted[k]][f] + xs[sorted[k + 1]][f]);
                }
            }
        }
        if (best_feature < 0) return self;

        std::vector<std::size_t> left, right;
        for (std::size_t i : idx)
            (xs[i][best_feature] <= best_threshold ? left : right).push_back(i);
        if (left.empty() || right.empty()) return self;
        nodes_[self].feature = best_feature;
        nodes_[self].threshold = best_threshold;
        nodes_[self].left = build(xs, ys, std::move(left), depth - 1, min_leaf);
        nodes_[self].right = build(xs, ys, std::move(right), depth - 1, min_leaf);
        return self;
    }

    std::vector<TreeNode> nodes_;
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
}

// Expected improvement over the incumbent under a normal posterior.
inline double expected_improvement(double mean, double stddev, double incumbent) {
    if (stddev <= 0.0) return std::max(0.0, mean - incumbent);
    const double z = (mean - incumbent) / stddev;
    return (mean - incumbent) * normal_cdf(z) + stddev * normal_pdf(z);
}

}  // namespace detail

struct BoConfig {
    std::size_t initial_samples = 8;
    std::size_t iterations = 40;
    std::size_t batch = 1;  // evaluations per iteration, best-EI first
    std::size_t trees = 32;
    std::size_t max_depth = 6;
    std::size_t min_leaf = 2;
    std::size_t candidates = 256;
    std::uint64_t seed = 1;

    void validate() const {
        if (initial_samples < 2) throw ValidationError("bo needs at least two seed samples");
        if (trees == 0 || candidates == 0 || min_leaf == 0 || batch == 0)
            throw ValidationError("bo configuration values must be positive");
    }
};

// Sequential model-based search: a bagged ensemble of regression trees gives
// mean and spread at each candidate, and the point with the best expected
// improvement is evaluated next. When the model sees no improvement anywhere
// it falls back to a uniform draw, which keeps the search from stalling.
inline BaselineResult bo_optimize(const Bounds& bounds, const RewardFn& reward,
                                  const BoConfig& config) {
    bounds.validate();
    config.validate();
    if (!reward) throw ValidationError("search needs a reward function");
    Rng rng(config.seed);
    const std::size_t D = bounds.dims();

    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    BaselineResult out;
    auto evaluate = [&](std::vector<double> x) {
        const double r = reward(ActionVector{x});
        ++out.evaluations;
        if (r > out.best_reward) {
            out.best_reward = r;
            out.best_action = ActionVector{x};
        }
        xs.push_back(std::move(x));
        ys.push_back(r);
    };
    auto draw = [&] {
        std::vector<double> x(D);
        for (std::size_t d = 0; d < D; ++d) x[d] = rng.uniform(bounds.lo[d], bounds.hi[d]);
        return x;
    };

    for (std::size_t i = 0; i < config.initial_samples; ++i) evaluate(draw());
    out.best_trace.push_back(out.best_reward);

    std::vector<detail::RegressionTree> forest(config.trees);
    for (std::size_t it = 0; it < config.iterations; ++it) {
        for (auto& tree : forest) {
            std::vector<std::size_t> bag(xs.size());
            for (auto& b : bag) b = static_cast<std::size_t>(rng.uniform_int(xs.size()));
            tree.fit(xs, ys, std::move(bag), config.max_depth, config.min_leaf);
        }
        std::vector<std::vector<double>> pool(config.candidates);
        std::vector<double> ei(config.candidates);
        for (std::size_t c = 0; c < config.candidates; ++c) {
            pool[c] = draw();
            double mean = 0.0, sq = 0.0;
            for (const auto& tree : forest) {
                const double p = tree.predict(pool[c]);
                mean += p;
                sq += p * p;
            }
            mean /= double(config.trees);
            const double var = std::max(0.0, sq / double(config.trees) - mean * mean);
            ei[c] = detail::expected_improvement(mean, std::sqrt(var), out.best_reward);
        }
        std::vector<std::size_t> order(config.candidates);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return ei[a] > ei[b]; });
        for (std::size_t b = 0; b < config.batch; ++b)
            evaluate(b < order.size() && ei[order[b]] > 0.0 ? std::move(pool[order[b]])
                                                            : draw());
        out.best_trace.push_back(out.best_reward);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Iterative power control for the interference channel.

struct PowerControlResult {
    std::vector<double> x;
    double objective = 0.0;
    std::vector<double> objective_trace;  // one entry per iteration
    std::size_t iterations = 0;
    bool converged = false;
};

// Classic scalar weighted MMSE alternation for sum log-rate over a box.
// Receivers, error weights, and transmit amplitudes are updated in closed
// form; amplitudes are clipped to the power limits.
inline PowerControlResult wmmse_power_control(const IfcModel& model, std::vector<double> x0 = {},
                                              double tol = 1e-8, std::size_t max_iter = 1000) {
    const std::size_t D = model.links();
    if (x0.empty()) x0.assign(D, 1.0);
    check_unit_box(x0, D);

    std::vector<double> v(D), u(D), w(D);
    for (std::size_t d = 0; d < D; ++d) v[d] = std::sqrt(x0[d]);
    auto h2 = [&](std::size_t src, std::size_t dst) { return model.p_tx * model.gain[src][dst]; };

    PowerControlResult out;
    for (std::size_t it = 0; it < max_iter; ++it) {
        for (std::size_t d = 0; d < D; ++d) {
            double denom = 1.0;
            for (std::size_t s = 0; s < D; ++s) denom += h2(s, d) * v[s] * v[s];
            u[d] = std::sqrt(h2(d, d)) * v[d] / denom;
        }
        for (std::size_t d = 0; d < D; ++d)
            w[d] = 1.0 / (1.0 - u[d] * std::sqrt(h2(d, d)) * v[d]);
        double shift = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            double den = 0.0;
            for (std::size_t s = 0; s < D; ++s) den += w[s] * u[s] * u[s] * h2(d, s);
            const double vd = den > 0.0
                                  ? std::clamp(w[d] * u[d] * std::sqrt(h2(d, d)) / den, 0.0, 1.0)
                                  : 0.0;
            shift = std::max(shift, std::abs(vd - v[d]));
            v[d] = vd;
        }
        out.iterations = it + 1;
        std::vector<double> x(D);
        for (std::size_t d = 0; d < D; ++d) x[d] = v[d] * v[d];
        out.objective_trace.push_back(ifc_se(model, x));
        if (shift < tol) {
            out.converged = true;
            break;
        }
    }
    out.x.resize(D);
    for (std::size_t d = 0; d < D; ++d) out.x[d] = v[d] * v[d];
    out.objective = ifc_se(model, out.x);
    return out;
}

// Same alternation for the common-transmitter channel, where the amplitude
// update couples through one shared denominator and a sum power budget. The
// multiplier is found by bisection because the per-user caps kink the
// constraint function.
inline PowerControlResult wmmse_bc_power_control(const BcModel& model, std::vector<double> x0 = {},
                                                 double tol = 1e-8, std::size_t max_iter = 1000) {
    const std::size_t D = model.users();
    if (x0.empty()) x0.assign(D, 1.0 / double(D));
    check_unit_box(x0, D);

    std::vector<double> v(D), u(D), w(D);
    for (std::size_t d = 0; d < D; ++d) v[d] = std::sqrt(x0[d]);
    auto h2 = [&](std::size_t d) { return model.p_tx * model.gain[d]; };

    PowerControlResult out;
    for (std::size_t it = 0; it < max_iter; ++it) {
        double total = 0.0;
        for (std::size_t d = 0; d < D; ++d) total += v[d] * v[d];
        for (std::size_t d = 0; d < D; ++d)
            u[d] = std::sqrt(h2(d)) * v[d] / (1.0 + h2(d) * total);
        for (std::size_t d = 0; d < D; ++d)
            w[d] = 1.0 / (1.0 - u[d] * std::sqrt(h2(d)) * v[d]);

        double shared = 0.0;
        for (std::size_t s = 0; s < D; ++s) shared += w[s] * u[s] * u[s] * h2(s);
        auto amplitude = [&](std::size_t d, double mu) {
            return std::min(1.0, w[d] * u[d] * std::sqrt(h2(d)) / (shared + mu));
        };
        auto power_at = [&](double mu) {
            double p = 0.0;
            for (std::size_t d = 0; d < D; ++d) p += amplitude(d, mu) * amplitude(d, mu);
            return p;
        };
        double mu = 0.0;
        if (power_at(0.0) > 1.0) {
            double lo = 0.0, hi = 1.0;
            while (power_at(hi) > 1.0) hi *= 2.0;
            for (int b = 0; b < 200; ++b) {
                const double mid = 0.5 * (lo + hi);
                (power_at(mid) > 1.0 ? lo : hi) = mid;
            }
            mu = hi;
        }
        double shift = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            const double vd = amplitude(d, mu);
            shift = std::max(shift, std::abs(vd - v[d]));
            v[d] = vd;
        }
        out.iterations = it + 1;
        std::vector<double> x(D);
        for (std::size_t d = 0; d < D; ++d) x[d] = v[d] * v[d];
        out.objective_trace.push_back(bc_se(model, x));
        if (shift < tol) {
            out.converged = true;
            break;
        }
    }
    out.x.resize(D);
    for (std::size_t d = 0; d < D; ++d) out.x[d] = v[d] * v[d];
    out.objective = bc_se(model, out.x);
    return out;
}

// ---------------------------------------------------------------------------
// Ratio maximization for energy efficiency.

struct DinkelbachResult {
    std::vector<double> x;
    double ee = 0.0;
    std::vector<double> objective_trace;  // one entry per outer round
    std::size_t outer_iterations = 0;
    bool converged = false;
};

namespace detail {

// One dimensional maximization on [0, 1]: coarse scan to find the basin,
// then ternary refinement inside it.
template <class F>
double line_max(F&& f, double lo = 0.0, double hi = 1.0) {
    const int scan = 33;
    double best_x = lo, best_v = f(lo);
    for (int i = 1; i < scan; ++i) {
        const double x = lo + (hi - lo) * double(i) / double(scan - 1);
        const double v = f(x);
        if (v > best_v) {
            best_v = v;
            best_x = x;
        }
    }
    const double h = (hi - lo) / double(scan - 1);
    double a = std::max(lo, best_x - h), b = std::min(hi, best_x + h);
    for (int i = 0; i < 200; ++i) {
        const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
        if (f(m1) < f(m2))
            a = m1;
        else
            b = m2;
    }
    return 0.5 * (a + b);
}

}  // namespace detail

// Parametric ratio maximization for the sum of per-link efficiencies. Each
// round refreshes one ratio parameter per link, y_d = sqrt(f_d) / p_d, and
// maximizes the surrogate sum of 2 y_d sqrt(f_d(x)) - y_d^2 p_d(x) over the
// box by cyclic coordinate ascent. The surrogate touches the true objective
// at the current point and never exceeds it, so accepted rounds cannot
// reduce the efficiency; the loop stops when the parameters settle.
inline DinkelbachResult dinkelbach_ee(const IfcModel& model, std::vector<double> x0 = {},
                                      double tol = 1e-10, std::size_t max_outer = 500) {
    const std::size_t D = model.links();
    if (x0.empty()) x0.assign(D, 0.5);
    check_unit_box(x0, D);

    std::vector<double> x = x0, y(D, 0.0);
    auto update_ratio_params = [&] {
        const std::vector<double> rates = ifc_rates(model, x);
        double shift = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            const double next =
                std::sqrt(rates[d]) / (model.p_fix + model.p_tx * x[d]);
            shift = std::max(shift, std::abs(next - y[d]));
            y[d] = next;
        }
        return shift;
    };
    update_ratio_params();

    auto surrogate = [&](const std::vector<double>& point) {
        const std::vector<double> rates = ifc_rates(model, point);
        double v = 0.0;
        for (std::size_t d = 0; d < D; ++d)
            v += 2.0 * y[d] * std::sqrt(rates[d]) -
                 y[d] * y[d] * (model.p_fix + model.p_tx * point[d]);
        return v;
    };

    DinkelbachResult out;
    for (std::size_t outer = 0; outer < max_outer; ++outer) {
        for (int sweep = 0; sweep < 50; ++sweep) {
            double moved = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                std::vector<double> probe = x;
                probe[d] = detail::line_max([&](double t) {
                    probe[d] = t;
                    return surrogate(probe);
                });
                if (surrogate(probe) > surrogate(x)) {
                    moved = std::max(moved, std::abs(probe[d] - x[d]));
                    x[d] = probe[d];
                }
            }
            if (moved < 1e-12) break;
        }
        out.outer_iterations = outer + 1;
        out.objective_trace.push_back(ifc_ee(model, x));
        if (update_ratio_params() < tol) {
            out.converged = true;
            break;
        }
    }
    out.x = x;
    out.ee = ifc_ee(model, x);
    return out;
}

// ---------------------------------------------------------------------------
// Restart wrapper for local solvers.

// Runs `solve` from uniformly drawn starts and keeps the best outcome.
// `solve` maps a start point to (point, objective).
template <class Solve>
std::pair<std::vector<double>, double> multi_start(const Bounds& bounds, std::size_t starts,
                                                   std::uint64_t seed, Solve&& solve) {
    bounds.validate();
    if (starts == 0) throw ValidationError("restart count must be positive");
    Rng rng(seed);
    std::pair<std::vector<double>, double> best;
    best.second = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < starts; ++s) {
        std::vector<double> start(bounds.dims());
        for (std::size_t d = 0; d < start.size(); ++d)
            start[d] = rng.uniform(bounds.lo[d], bounds.hi[d]);
        auto [point, value] = solve(start);
        if (value > best.second) best = {std::move(point), value};
    }
    return best;
}

}  // namespace llmo

#endif
