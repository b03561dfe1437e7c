// Reference optimizers. Search heuristics are checked against closed-form
// expectations (order statistics of uniform draws, single-link optima) and
// against independent oracles written here: projected gradient ascent for
// stationarity and exhaustive grids for global quality.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "llmo/baselines.hpp"
#include "llmo/errors.hpp"
#include "llmo/population.hpp"
#include "llmo/rewards.hpp"

using namespace llmo;

namespace {

using BoxFn = std::function<double(const std::vector<double>&)>;

// Finite-difference gradient ascent projected onto the unit box. Started at a
// solver's output, it measures how much objective the solver left on the
// table: a stationary point admits no first-order improvement.
std::vector<double> pga_box(const BoxFn& f, std::vector<double> x, double step, int iters) {
    const double h = 1e-7;
    for (int it = 0; it < iters; ++it) {
        std::vector<double> next = x;
        for (std::size_t d = 0; d < x.size(); ++d) {
            std::vector<double> xp = x, xm = x;
            xp[d] = std::min(1.0, x[d] + h);
            xm[d] = std::max(0.0, x[d] - h);
            const double g = (f(xp) - f(xm)) / (xp[d] - xm[d]);
            next[d] = std::clamp(x[d] + step * g, 0.0, 1.0);
        }
        x = std::move(next);
    }
    return x;
}

// Euclidean projection onto the unit box intersected with a unit power budget.
std::vector<double> project_budget(std::vector<double> y) {
    auto clipped_sum = [&](double tau) {
        double s = 0.0;
        for (double v : y) s += std::clamp(v - tau, 0.0, 1.0);
        return s;
    };
    if (clipped_sum(0.0) <= 1.0) {
        for (double& v : y) v = std::clamp(v, 0.0, 1.0);
        return y;
    }
    double lo = 0.0, hi = *std::max_element(y.begin(), y.end());
    for (int b = 0; b < 100; ++b) {
        const double mid = 0.5 * (lo + hi);
        (clipped_sum(mid) > 1.0 ? lo : hi) = mid;
    }
    for (double& v : y) v = std::clamp(v - hi, 0.0, 1.0);
    return y;
}

std::vector<double> pga_budget(const BoxFn& f, std::vector<double> x, double step, int iters) {
    const double h = 1e-7;
    for (int it = 0; it < iters; ++it) {
        std::vector<double> y = x;
        for (std::size_t d = 0; d < x.size(); ++d) {
            std::vector<double> xp = x, xm = x;
            xp[d] = std::min(1.0, x[d] + h);
            xm[d] = std::max(0.0, x[d] - h);
            y[d] = x[d] + step * (f(xp) - f(xm)) / (xp[d] - xm[d]);
        }
        x = project_budget(std::move(y));
    }
    return x;
}

}  // namespace

TEST_CASE("uniform crossover follows the mask exactly") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    const std::vector<double> b{4.0, 5.0, 6.0};
    REQUIRE(uniform_crossover(a, b, {true, false, true}) == std::vector<double>{1.0, 5.0, 3.0});
    REQUIRE(uniform_crossover(a, b, {false, false, false}) == b);
    REQUIRE(uniform_crossover(a, b, {true, true, true}) == a);
    REQUIRE_THROWS_AS(uniform_crossover(a, {1.0}, {true, false, true}), ValidationError);
    REQUIRE_THROWS_AS(uniform_crossover(a, b, {true}), ValidationError);
}

TEST_CASE("random search matches the best-of-n order statistic") {
    // For reward x on [0, 1], the best of N uniform draws has mean N/(N+1)
    // and variance N/((N+1)^2 (N+2)).
    const Bounds bounds = Bounds::uniform(1, 0.0, 1.0);
    const RewardFn reward = [](const ActionVector& a) { return a.values[0]; };
    const std::size_t N = 9;
    const int repeats = 400;
    double mean = 0.0;
    for (int s = 0; s < repeats; ++s) {
        const BaselineResult r = brute_force_optimize(bounds, reward, N, 1000 + s);
        REQUIRE(r.evaluations == N);
        REQUIRE(r.best_trace.size() == N);
        REQUIRE(std::is_sorted(r.best_trace.begin(), r.best_trace.end()));
        REQUIRE(r.best_reward == r.best_trace.back());
        mean += r.best_reward;
    }
    mean /= repeats;
    const double expect = double(N) / double(N + 1);
    const double sigma = std::sqrt(double(N) / (double(N + 1) * (N + 1) * (N + 2)) / repeats);
    REQUIRE(std::abs(mean - expect) < 3.0 * sigma);
}

TEST_CASE("random search rejects empty budgets and rewards") {
    const Bounds bounds = Bounds::uniform(2, 0.0, 1.0);
    const RewardFn reward = [](const ActionVector&) { return 0.0; };
    REQUIRE_THROWS_AS(brute_force_optimize(bounds, reward, 0, 1), ValidationError);
    REQUIRE_THROWS_AS(brute_force_optimize(bounds, RewardFn{}, 5, 1), ValidationError);
}

TEST_CASE("ga spends its budget exactly and never forgets the best") {
    const Bounds bounds = Bounds::uniform(3, -2.0, 2.0);
    const RewardFn reward = [](const ActionVector& a) {
        double s = 0.0;
        for (double v : a.values) s -= v * v;
        return s;
    };
    GaConfig config;
    config.population = 12;
    config.generations = 15;
    config.seed = 7;
    const BaselineResult r = ga_optimize(bounds, reward, config);
    REQUIRE(r.evaluations == 12 + 15 * 11);  // elite is carried, not re-scored
    REQUIRE(r.best_trace.size() == 16);
    REQUIRE(std::is_sorted(r.best_trace.begin(), r.best_trace.end()));
    REQUIRE(r.best_reward == r.best_trace.back());
    REQUIRE(bounds.contains(r.best_action.values));
}

TEST_CASE("ga closes in on a sphere optimum") {
    const Bounds bounds = Bounds::uniform(2, 0.0, 1.0);
    const RewardFn reward = [](const ActionVector& a) {
        const double dx = a.values[0] - 0.3, dy = a.values[1] - 0.7;
        return -(dx * dx + dy * dy);
    };
    GaConfig config;
    config.population = 30;
    config.generations = 60;
    std::vector<double> gaps;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        config.seed = seed;
        const BaselineResult r = ga_optimize(bounds, reward, config);
        gaps.push_back(-r.best_reward);
        REQUIRE(-r.best_reward < 5e-2);
        // Must beat its own random initialization decisively.
        REQUIRE(r.best_reward > r.best_trace.front());
    }
    std::sort(gaps.begin(), gaps.end());
    REQUIRE(gaps[2] < 1e-2);  // median seed
}

TEST_CASE("ga handles a flat landscape without dividing by zero") {
    const Bounds bounds = Bounds::uniform(2, 0.0, 1.0);
    const RewardFn reward = [](const ActionVector&) { return 4.25; };
    GaConfig config;
    config.population = 8;
    config.generations = 5;
    const BaselineResult r = ga_optimize(bounds, reward, config);
    REQUIRE(r.best_reward == 4.25);
}

TEST_CASE("ga validates its configuration") {
    const Bounds bounds = Bounds::uniform(1, 0.0, 1.0);
    const RewardFn reward = [](const ActionVector& a) { return a.values[0]; };
    GaConfig config;
    config.population = 1;
    REQUIRE_THROWS_AS(ga_optimize(bounds, reward, config), ValidationError);
    config.population = 10;
    config.parent_fraction = 0.0;
    REQUIRE_THROWS_AS(ga_optimize(bounds, reward, config), ValidationError);
    config.parent_fraction = 0.3;
    config.mutation_rate = 1.5;
    REQUIRE_THROWS_AS(ga_optimize(bounds, reward, config), ValidationError);
}

TEST_CASE("regression tree reproduces a step function") {
    const std::vector<std::vector<double>> xs{{0.0}, {1.0}, {2.0}, {3.0}};
    const std::vector<double> ys{0.0, 0.0, 10.0, 10.0};
    detail::RegressionTree tree;
    tree.fit(xs, ys, {0, 1, 2, 3}, 2, 2);
    REQUIRE(tree.predict({0.5}) == 0.0);
    REQUIRE(tree.predict({2.5}) == 10.0);
    REQUIRE(tree.predict({-4.0}) == 0.0);
    REQUIRE(tree.predict({9.0}) == 10.0);
}

TEST_CASE("expected improvement hand values") {
    // Zero spread degenerates to the plain improvement.
    REQUIRE(detail::expected_improvement(2.0, 0.0, 1.0) == 1.0);
    REQUIRE(detail::expected_improvement(0.5, 0.0, 1.0) == 0.0);
    // At mean == incumbent the integral is stddev / sqrt(2 pi).
    const double ei = detail::expected_improvement(1.0, 2.0, 1.0);
    REQUIRE(std::abs(ei - 2.0 / std::sqrt(2.0 * 3.14159265358979323846)) < 1e-12);
    // More spread can only help a maximizer.
    REQUIRE(detail::expected_improvement(0.5, 1.0, 1.0) >
            detail::expected_improvement(0.5, 0.5, 1.0));
}

TEST_CASE("model-guided search finds a narrow peak") {
    const Bounds bounds = Bounds::uniform(1, 0.0, 1.0);
    const RewardFn reward = [](const ActionVector& a) {
        const double d = a.values[0] - 0.63;
        return std::exp(-50.0 * d * d);
    };
    BoConfig config;
    config.initial_samples = 8;
    config.iterations = 30;
    int close = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        config.seed = seed;
        const BaselineResult r = bo_optimize(bounds, reward, config);
        REQUIRE(r.evaluations == 38);
        REQUIRE(r.best_trace.size() == 31);
        REQUIRE(std::is_sorted(r.best_trace.begin(), r.best_trace.end()));
        if (std::abs(r.best_action.values[0] - 0.63) < 0.05) ++close;
    }
    REQUIRE(close >= 4);
}

TEST_CASE("model-guided search survives a flat landscape via random fallback") {
    const Bounds bounds = Bounds::uniform(2, 0.0, 1.0);
    const RewardFn reward = [](const ActionVector&) { return -3.0; };
    BoConfig config;
    config.initial_samples = 4;
    config.iterations = 6;
    const BaselineResult r = bo_optimize(bounds, reward, config);
    REQUIRE(r.evaluations == 10);
    REQUIRE(r.best_reward == -3.0);
}

TEST_CASE("wmmse drives a single link to full power") {
    const IfcModel m = IfcModel::from_gains({{1.0}});
    const PowerControlResult r = wmmse_power_control(m, {0.3});
    REQUIRE(r.converged);
    REQUIRE(std::abs(r.x[0] - 1.0) < 1e-6);
    REQUIRE(std::abs(r.objective - std::log(11.0)) < 1e-6);
}

TEST_CASE("wmmse does not lose rate against the full-power start") {
    const IfcModel m = IfcModel::rayleigh(3, 21);
    const std::vector<double> full(3, 1.0);
    const PowerControlResult r = wmmse_power_control(m);
    REQUIRE(r.converged);
    REQUIRE(r.objective >= ifc_se(m, full) - 1e-9);
}

TEST_CASE("wmmse lands on a stationary point of the sum rate") {
    for (std::uint64_t seed : {21, 22, 23}) {
        const IfcModel m = IfcModel::rayleigh(3, seed);
        const PowerControlResult r = wmmse_power_control(m);
        const BoxFn f = [&](const std::vector<double>& x) { return ifc_se(m, x); };
        const std::vector<double> refined = pga_box(f, r.x, 1e-3, 2000);
        REQUIRE(f(refined) - r.objective < 1e-6);
        for (std::size_t t = 1; t < r.objective_trace.size(); ++t)
            REQUIRE(r.objective_trace[t] >= r.objective_trace[t - 1] - 1e-9);
    }
}

TEST_CASE("wmmse with a shared budget stays feasible and stationary") {
    const BcModel m = BcModel::from_gains({1.5, 0.8, 0.3});
    const PowerControlResult r = wmmse_bc_power_control(m);
    REQUIRE(r.converged);
    double total = 0.0;
    for (double v : r.x) total += v;
    REQUIRE(total <= 1.0 + 1e-9);
    const BoxFn f = [&](const std::vector<double>& x) { return bc_se(m, x); };
    const std::vector<double> refined = pga_budget(f, r.x, 1e-3, 2000);
    REQUIRE(f(refined) - r.objective < 1e-6);
}

TEST_CASE("wmmse with one user spends the whole budget") {
    const BcModel m = BcModel::from_gains({0.7});
    const PowerControlResult r = wmmse_bc_power_control(m, {0.2});
    REQUIRE(r.converged);
    REQUIRE(std::abs(r.x[0] - 1.0) < 1e-6);
    REQUIRE(std::abs(r.objective - std::log(1.0 + 7.0)) < 1e-6);
}

TEST_CASE("ratio search solves the single-link efficiency in closed form") {
    // For gain 1 the efficiency ln(1 + 10x) / (1 + 10x) peaks where the
    // denominator equals e, so x* = (e - 1) / 10 and the peak value is 1/e.
    const IfcModel m = IfcModel::from_gains({{1.0}});
    const DinkelbachResult r = dinkelbach_ee(m);
    REQUIRE(r.converged);
    REQUIRE(std::abs(r.ee - 1.0 / std::exp(1.0)) < 1e-6);
    REQUIRE(std::abs(r.x[0] - (std::exp(1.0) - 1.0) / 10.0) < 1e-6);
    for (std::size_t t = 1; t < r.objective_trace.size(); ++t)
        REQUIRE(r.objective_trace[t] >= r.objective_trace[t - 1] - 1e-12);
}

TEST_CASE("huge fixed power turns efficiency into rate maximization") {
    IfcModel m = IfcModel::from_gains({{1.0}});
    m.p_fix = 1e6;
    const DinkelbachResult r = dinkelbach_ee(m);
    REQUIRE(r.x[0] > 0.999);
}

TEST_CASE("restarted ratio search matches an exhaustive grid") {
    const IfcModel m = IfcModel::from_gains({{1.0, 0.2}, {0.3, 0.8}});
    double grid_best = -1.0;
    const int n = 251;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = ifc_ee(m, {double(i) / (n - 1), double(j) / (n - 1)});
            grid_best = std::max(grid_best, v);
        }
    const Bounds bounds = Bounds::uniform(2, 0.0, 1.0);
    const auto [x, ee] = multi_start(bounds, 8, 3, [&](const std::vector<double>& start) {
        const DinkelbachResult r = dinkelbach_ee(m, start);
        REQUIRE(r.converged);
        for (std::size_t t = 1; t < r.objective_trace.size(); ++t)
            REQUIRE(r.objective_trace[t] >= r.objective_trace[t - 1] - 1e-12);
        return std::make_pair(r.x, r.ee);
    });
    REQUIRE(ee >= grid_best - 1e-3);
    check_unit_box(x, 2);
}

TEST_CASE("restarts escape the wrong basin of a bimodal objective") {
    // Two peaks; greedy hill climbing from a start below the valley stalls on
    // the lower one, so finding 1.6 requires a restart in the right basin.
    const auto f = [](double x) {
        const double a = std::exp(-100.0 * (x - 0.2) * (x - 0.2));
        const double b = 1.6 * std::exp(-100.0 * (x - 0.8) * (x - 0.8));
        return std::max(a, b);
    };
    const auto climb = [&](const std::vector<double>& start) {
        double x = start[0], step = 0.01;
        while (step > 1e-10) {
            if (f(std::clamp(x + step, 0.0, 1.0)) > f(x))
                x = std::clamp(x + step, 0.0, 1.0);
            else if (f(std::clamp(x - step, 0.0, 1.0)) > f(x))
                x = std::clamp(x - step, 0.0, 1.0);
            else
                step /= 2.0;
        }
        return std::make_pair(std::vector<double>{x}, f(x));
    };
    const Bounds bounds = Bounds::uniform(1, 0.0, 1.0);
    const auto single = climb({0.05});
    REQUIRE(single.second < 1.1);  // stuck on the small peak
    const auto [x, value] = multi_start(bounds, 20, 5, climb);
    REQUIRE(std::abs(value - 1.6) < 1e-6);
    REQUIRE(std::abs(x[0] - 0.8) < 1e-4);
    REQUIRE_THROWS_AS(multi_start(bounds, 0, 1, climb), ValidationError);
}
