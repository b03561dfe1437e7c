#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "llmo/agents.hpp"
#include "llmo/markov.hpp"
#include "llmo/rng.hpp"

using namespace llmo;

namespace {

StateSpace table_space(std::vector<double> rewards, std::size_t P) {
    const std::size_t G = rewards.size();
    GridSpec grid = GridSpec::uniform(G, 1, P, Bounds::uniform(1, 0.0, 1.0));
    return enumerate_and_order(grid, [&, rewards](const ActionVector& a) {
        return rewards[grid.level_of(0, a.values[0])];
    });
}

StateSpace random_space(std::size_t G, std::size_t P, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> rewards(G);
    for (double& r : rewards) r = rng.uniform01();
    return table_space(rewards, P);
}

// Successor of (generated, source) under elitist selection, written against
// the definition: concatenate generated rows then source rows, rank by
// reward descending with earlier rows winning ties, keep the best P.
std::size_t oracle_successor(const StateSpace& space, std::size_t gen, std::size_t src) {
    const std::size_t P = space.grid.P;
    struct Row {
        std::uint64_t action;
        double reward;
        std::size_t position;
    };
    std::vector<Row> rows;
    for (std::size_t p = 0; p < P; ++p)
        rows.push_back({space.states[gen].action_ids[p], space.states[gen].row_rewards[p], p});
    for (std::size_t p = 0; p < P; ++p)
        rows.push_back(
            {space.states[src].action_ids[p], space.states[src].row_rewards[p], P + p});
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.reward != b.reward) return a.reward > b.reward;
        return a.position < b.position;
    });
    std::uint64_t raw = 0;
    const std::uint64_t m = space.grid.action_count();
    for (std::size_t p = 0; p < P; ++p) raw = raw * m + rows[p].action;
    return space.order_of_raw[raw];
}

Matrix oracle_elitist_matrix(const StateSpace& space, const Matrix& lambda) {
    const std::size_t n = space.size();
    Matrix m(n, n);
    for (std::size_t src = 0; src < n; ++src)
        for (std::size_t gen = 0; gen < n; ++gen)
            m(oracle_successor(space, gen, src), src) += lambda(gen, src);
    return m;
}

TransitionModel manual_model(std::vector<std::vector<double>> columns, std::size_t optimal) {
    const std::size_t n = columns.size();
    TransitionModel model;
    model.matrix = Matrix(n, n);
    model.optimal_count = optimal;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) model.matrix(i, j) = columns[j][i];
    return model;
}

}  // namespace

TEST_CASE("states are ordered best first with an optimal prefix") {
    // Rewards by grid level: 0.2, 0.9, 0.5.
    StateSpace space = table_space({0.2, 0.9, 0.5}, 1);
    REQUIRE(space.size() == 3);
    REQUIRE(space.r_star == 0.9);
    REQUIRE(space.optimal_count == 1);
    REQUIRE(space.states[0].action_ids == std::vector<std::uint64_t>{1});
    REQUIRE(space.states[1].action_ids == std::vector<std::uint64_t>{2});
    REQUIRE(space.states[2].action_ids == std::vector<std::uint64_t>{0});
    for (std::size_t i = 0; i < space.size(); ++i) {
        REQUIRE(space.order_of_raw[space.states[i].raw] == i);
        REQUIRE(space.encode(space.decode(i)) == i);
    }
}

TEST_CASE("within a reward class the descending arrangement comes first") {
    // Two levels with rewards 0.3 and 0.8, populations of two rows.
    StateSpace space = table_space({0.3, 0.8}, 2);
    REQUIRE(space.size() == 4);
    // (1,1) then (1,0) then (0,1) then (0,0), raw ids 3, 2, 1, 0.
    REQUIRE(space.states[0].raw == 3);
    REQUIRE(space.states[1].raw == 2);
    REQUIRE(space.states[2].raw == 1);
    REQUIRE(space.states[3].raw == 0);
    REQUIRE(space.optimal_count == 3);

    // The permuted twin (0,1) maps into (1,0) under selection, which must
    // not move down the order.
    std::vector<Population> decoded(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) decoded[i] = space.decode(i);
    const std::size_t src = space.order_of_raw[1];   // (0,1)
    const std::size_t gen = space.order_of_raw[0];   // (0,0)
    REQUIRE(elitist_successor(space, decoded, gen, src) == space.order_of_raw[2]);
    REQUIRE(elitist_successor(space, decoded, gen, src) < src);
}

TEST_CASE("ordering keys are monotone along the order") {
    StateSpace space = random_space(4, 2, 77);
    REQUIRE(space.size() == 16);
    for (std::size_t i = 0; i + 1 < space.size(); ++i) {
        REQUIRE(space.states[i].sorted_rewards >= space.states[i + 1].sorted_rewards);
        const bool opt_i = space.states[i].best_reward() == space.r_star;
        const bool opt_next = space.states[i + 1].best_reward() == space.r_star;
        REQUIRE((opt_i || !opt_next));  // optimal states never follow non-optimal ones
    }
    REQUIRE(space.optimal_count > 0);
    REQUIRE(space.optimal_count < space.size());
}

TEST_CASE("state enumeration rejects oversized and broken models") {
    const Bounds b = Bounds::uniform(1, 0.0, 1.0);
    REQUIRE_THROWS_AS(enumerate_and_order(GridSpec::uniform(25, 1, 3, b),
                                          [](const ActionVector&) { return 0.0; }),
                      CapacityError);
    REQUIRE_THROWS_AS(enumerate_and_order(GridSpec::uniform(3, 1, 1, b),
                                          [](const ActionVector& a) {
                                              return a.values[0] == 0.0
                                                         ? std::numeric_limits<double>::infinity()
                                                         : 0.5;
                                          }),
                      ModelError);
}

TEST_CASE("two state chain propagates by hand") {
    TransitionModel model = manual_model({{1.0, 0.0}, {0.5, 0.5}}, 1);
    auto series = propagate_series(model, {0.5, 0.5}, 3);
    REQUIRE(series.size() == 4);
    REQUIRE(series[1][0] == Catch::Approx(0.75).margin(1e-15));
    REQUIRE(series[1][1] == Catch::Approx(0.25).margin(1e-15));
    REQUIRE(series[2][1] == Catch::Approx(0.125).margin(1e-15));
    REQUIRE(optimal_mass(model, series[1]) == Catch::Approx(0.75).margin(1e-15));

    auto pi = stationary_distribution(model);
    REQUIRE(pi[0] == Catch::Approx(1.0).margin(1e-10));
    REQUIRE(pi[1] == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("propagation rejects malformed starts") {
    TransitionModel model = manual_model({{1.0, 0.0}, {0.5, 0.5}}, 1);
    REQUIRE_THROWS_AS(propagate_series(model, {1.0}, 1), ValidationError);
    REQUIRE_THROWS_AS(propagate_series(model, {0.0, 0.0}, 1), ValidationError);
    REQUIRE_THROWS_AS(propagate_series(model, {1.5, -0.5}, 1), ValidationError);
}

TEST_CASE("elitist transition matches the enumeration oracle") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        StateSpace space = random_space(3, 2, 100 + seed);
        Rng rng(seed);
        Matrix lambda = random_positive_policy(space.size(), rng);
        TransitionModel model = build_single_transition(space, lambda, SamplerKind::Elitist);
        Matrix expect = oracle_elitist_matrix(space, lambda);
        for (std::size_t i = 0; i < space.size(); ++i)
            for (std::size_t j = 0; j < space.size(); ++j)
                REQUIRE(model.matrix(i, j) == expect(i, j));
        REQUIRE(is_column_stochastic(model.matrix));
    }
}

TEST_CASE("elitist selection never moves down the order") {
    StateSpace space = random_space(4, 2, 9);
    std::vector<Population> decoded(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) decoded[i] = space.decode(i);
    for (std::size_t src = 0; src < space.size(); ++src)
        for (std::size_t gen = 0; gen < space.size(); ++gen)
            REQUIRE(elitist_successor(space, decoded, gen, src) <= src);
}

TEST_CASE("elitist chain has the absorbing block structure") {
    StateSpace space = random_space(4, 2, 42);
    Rng rng(5);
    Matrix lambda = random_positive_policy(space.size(), rng);
    TransitionModel model = build_single_transition(space, lambda, SamplerKind::Elitist);
    StructureReport rep = check_structure(model);
    REQUIRE(rep.column_stochastic);
    REQUIRE(rep.opt_to_rest_zero);
    REQUIRE(rep.opt_block_upper);
    REQUIRE(rep.rest_block_upper);
    REQUIRE(rep.rest_columns_reach_opt);
    REQUIRE(rep.rest_radius_below_one);
    REQUIRE(rep.elitist_ok());
    REQUIRE_FALSE(rep.all_positive);

    // Triangular block: spectral radius is the largest diagonal entry.
    const Matrix q3 = model.block_rest_rest();
    double diag = 0.0;
    for (std::size_t i = 0; i < q3.rows(); ++i) diag = std::max(diag, q3(i, i));
    REQUIRE(rep.rest_spectral_radius == Catch::Approx(diag).margin(1e-12));
}

TEST_CASE("lifo transition is the policy itself") {
    StateSpace space = random_space(3, 2, 8);
    Rng rng(6);
    Matrix lambda = random_positive_policy(space.size(), rng);
    TransitionModel model = build_single_transition(space, lambda, SamplerKind::Lifo);
    for (std::size_t i = 0; i < space.size(); ++i)
        for (std::size_t j = 0; j < space.size(); ++j)
            REQUIRE(model.matrix(i, j) == lambda(i, j));
    StructureReport rep = check_structure(model);
    REQUIRE(rep.lifo_ok());
    REQUIRE(rep.all_positive);
    REQUIRE_FALSE(rep.opt_to_rest_zero);
}

TEST_CASE("lifo stationary point is a fixed point of the chain") {
    StateSpace space = random_space(3, 1, 21);
    Rng rng(7);
    Matrix lambda = random_positive_policy(space.size(), rng);
    TransitionModel model = build_single_transition(space, lambda, SamplerKind::Lifo);
    auto pi = stationary_distribution(model);
    auto next = model.matrix.matvec(pi);
    for (std::size_t i = 0; i < pi.size(); ++i)
        REQUIRE(next[i] == Catch::Approx(pi[i]).margin(1e-10));
    REQUIRE(optimal_mass(model, pi) < 1.0);
}

TEST_CASE("ensemble chain with one agent and single rows matches the exact chain") {
    StateSpace space = random_space(5, 1, 31);
    Rng rng(11);
    Matrix lambda = random_positive_policy(space.size(), rng);
    TransitionModel single = build_single_transition(space, lambda, SamplerKind::Elitist);
    TransitionModel multi = build_multi_transition(space, {lambda});
    for (std::size_t i = 0; i < space.size(); ++i)
        for (std::size_t j = 0; j < space.size(); ++j)
            REQUIRE(multi.matrix(i, j) == Catch::Approx(single.matrix(i, j)).margin(1e-12));
}

TEST_CASE("two agent chain on two states follows the closed form") {
    StateSpace space = table_space({0.2, 0.7}, 1);
    REQUIRE(space.size() == 2);
    const double a = 0.6, c = 0.25;
    Matrix lambda(2, 2);
    lambda(0, 0) = a;
    lambda(1, 0) = 1 - a;
    lambda(0, 1) = c;
    lambda(1, 1) = 1 - c;
    TransitionModel model = build_multi_transition(space, {lambda, lambda});
    REQUIRE(model.matrix(0, 0) == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(model.matrix(1, 0) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(model.matrix(0, 1) == Catch::Approx(1.0 - (1 - c) * (1 - c)).margin(1e-15));
    REQUIRE(model.matrix(1, 1) == Catch::Approx((1 - c) * (1 - c)).margin(1e-15));
}

TEST_CASE("identical agents raise every staying probability to the ensemble power") {
    StateSpace space = random_space(6, 1, 55);
    Rng rng(13);
    Matrix lambda = random_positive_policy(space.size(), rng);
    TransitionModel one = build_multi_transition(space, {lambda});
    for (std::size_t L : {2UL, 3UL}) {
        std::vector<Matrix> lambdas(L, lambda);
        TransitionModel many = build_multi_transition(space, lambdas);
        REQUIRE(is_column_stochastic(many.matrix));
        for (std::size_t s = 0; s < space.size(); ++s)
            REQUIRE(many.matrix(s, s) ==
                    Catch::Approx(std::pow(one.matrix(s, s), double(L))).margin(1e-12));
        StructureReport rep = check_structure(many);
        REQUIRE(rep.elitist_ok());
    }
}

TEST_CASE("heterogeneous ensembles stay column stochastic and absorbing") {
    StateSpace space = random_space(4, 1, 71);
    Rng rng(17);
    std::vector<Matrix> lambdas;
    for (int l = 0; l < 3; ++l) lambdas.push_back(random_positive_policy(space.size(), rng));
    TransitionModel model = build_multi_transition(space, lambdas);
    REQUIRE(is_column_stochastic(model.matrix));
    REQUIRE(check_structure(model).elitist_ok());
    REQUIRE(model.agents == 3);
}

TEST_CASE("slow mode extraction follows the hand example") {
    // Three states, one optimal. The non-optimal block is [[.5, .5], [0, .3]].
    TransitionModel model =
        manual_model({{1.0, 0.0, 0.0}, {0.5, 0.5, 0.0}, {0.2, 0.5, 0.3}}, 1);
    EigenInit init = q_max_and_eigen_init(model);
    REQUIRE(init.q_max == 0.5);
    REQUIRE(init.proper);
    REQUIRE(init.argmax_state == 1);
    REQUIRE(init.pi0 == std::vector<double>{0.0, 1.0, 0.0});

    // Same chain with the slow state later in the order: back substitution
    // fills the earlier entries.
    TransitionModel model2 =
        manual_model({{1.0, 0.0, 0.0}, {0.7, 0.3, 0.0}, {0.1, 0.4, 0.5}}, 1);
    EigenInit init2 = q_max_and_eigen_init(model2);
    REQUIRE(init2.q_max == 0.5);
    REQUIRE(init2.argmax_state == 2);
    REQUIRE(init2.pi0[0] == 0.0);
    REQUIRE(init2.pi0[1] == Catch::Approx(2.0 / 3.0).margin(1e-15));
    REQUIRE(init2.pi0[2] == Catch::Approx(1.0 / 3.0).margin(1e-15));

    // Eigen identity on the non-optimal block.
    const Matrix q3 = model2.block_rest_rest();
    std::vector<double> v = {init2.pi0[1], init2.pi0[2]};
    std::vector<double> qv = q3.matvec(v);
    REQUIRE(qv[0] == Catch::Approx(init2.q_max * v[0]).margin(1e-15));
    REQUIRE(qv[1] == Catch::Approx(init2.q_max * v[1]).margin(1e-15));
}

TEST_CASE("slow mode start decays by exactly its rate every step") {
    StateSpace space = random_space(5, 1, 91);
    Rng rng(19);
    Matrix lambda = random_positive_policy(space.size(), rng);
    TransitionModel model = build_single_transition(space, lambda, SamplerKind::Elitist);
    EigenInit init = q_max_and_eigen_init(model);
    REQUIRE(init.proper);
    REQUIRE(init.q_max > 0.0);
    REQUIRE(init.q_max < 1.0);
    for (std::size_t i = 0; i < model.optimal_count; ++i) REQUIRE(init.pi0[i] == 0.0);

    auto series = propagate_series(model, init.pi0, 30);
    auto gaps = gap_series(space, series);
    REQUIRE(gaps[0] > 0.0);
    for (std::size_t t = 1; t < gaps.size(); ++t)
        REQUIRE(gaps[t] / gaps[t - 1] == Catch::Approx(init.q_max).margin(1e-10));
    auto acr = acr_series(space, series);
    for (double g : acr) REQUIRE(g == Catch::Approx(init.q_max).margin(1e-10));
}

TEST_CASE("rate extraction rejects chains it cannot analyze") {
    // All states optimal.
    StateSpace flat = table_space({0.4}, 1);
    Rng rng(23);
    Matrix lambda1 = random_positive_policy(1, rng);
    TransitionModel m1 = build_single_transition(flat, lambda1, SamplerKind::Elitist);
    REQUIRE_THROWS_AS(q_max_and_eigen_init(m1), DegenerateError);

    // LIFO chains are not triangular.
    StateSpace space = random_space(3, 1, 33);
    Matrix lambda = random_positive_policy(space.size(), rng);
    TransitionModel lifo = build_single_transition(space, lambda, SamplerKind::Lifo);
    REQUIRE_THROWS_AS(q_max_and_eigen_init(lifo), ValidationError);
}

TEST_CASE("convergence rate is undefined from an already optimal start") {
    StateSpace space = table_space({0.1, 0.8}, 1);
    Rng rng(29);
    Matrix lambda = random_positive_policy(space.size(), rng);
    TransitionModel model = build_single_transition(space, lambda, SamplerKind::Elitist);
    std::vector<double> delta(space.size(), 0.0);
    delta[0] = 1.0;
    auto series = propagate_series(model, delta, 5);
    REQUIRE_THROWS_AS(acr_series(space, series), DegenerateError);
}

TEST_CASE("policies that do not fit the space are rejected") {
    StateSpace space = table_space({0.1, 0.8}, 1);
    Matrix wrong(3, 3);
    REQUIRE_THROWS_AS(build_single_transition(space, wrong, SamplerKind::Elitist),
                      ValidationError);
    Matrix bad(2, 2);
    bad(0, 0) = 0.7;
    bad(1, 0) = 0.7;
    bad(0, 1) = 0.5;
    bad(1, 1) = 0.5;
    REQUIRE_THROWS_AS(build_single_transition(space, bad, SamplerKind::Elitist),
                      ValidationError);
    REQUIRE_THROWS_AS(build_multi_transition(space, {}), ValidationError);
}

TEST_CASE("semilog fit recovers an exact geometric decay") {
    std::vector<double> gaps;
    for (int t = 0; t <= 20; ++t) gaps.push_back(3.0 * std::pow(0.8, t));
    SemilogFit fit = fit_semilog(gaps);
    REQUIRE(fit.points == 21);
    REQUIRE(fit.slope == Catch::Approx(std::log10(0.8)).margin(1e-12));
    REQUIRE(fit.intercept == Catch::Approx(std::log10(3.0)).margin(1e-12));
    REQUIRE(fit.r_squared >= 1.0 - 1e-12);
}

TEST_CASE("semilog fit skips non-positive points and refuses thin data") {
    std::vector<double> gaps;
    for (int t = 0; t <= 12; ++t) gaps.push_back(t % 2 == 0 ? std::pow(0.5, t) : 0.0);
    SemilogFit fit = fit_semilog(gaps);
    REQUIRE(fit.points == 7);
    REQUIRE(fit.slope == Catch::Approx(std::log10(0.5)).margin(1e-12));

    REQUIRE_THROWS_AS(fit_semilog({1.0, 0.5, 0.25, 0.125}), FitError);
    REQUIRE_THROWS_AS(fit_semilog(std::vector<double>(10, 0.0)), FitError);
}

// ---------------------------------------------------------------------------
// Real trajectories against the exact chain.

#include <memory>

#include "llmo/markov_mc.hpp"

namespace {

std::shared_ptr<const StateSpace> shared_space(std::vector<double> rewards, std::size_t P) {
    return std::make_shared<const StateSpace>(table_space(std::move(rewards), P));
}

}  // namespace

TEST_CASE("sorting the uniform start folds permuted twins together") {
    auto space = shared_space({0.3, 0.8}, 2);
    // Ordered states: (1,1), (1,0), (0,1), (0,0). The twin (0,1) sorts into
    // (1,0), doubling its share.
    auto pi0 = initial_state_distribution(*space, SamplerKind::Elitist);
    REQUIRE(pi0 == std::vector<double>{0.25, 0.5, 0.0, 0.25});
    auto lifo = initial_state_distribution(*space, SamplerKind::Lifo);
    REQUIRE(lifo == std::vector<double>(4, 0.25));
}

TEST_CASE("elitist trajectories follow the exact chain") {
    auto space = shared_space({0.15, 0.65, 0.4}, 1);
    Rng rng(101);
    Matrix lambda = random_positive_policy(space->size(), rng);
    McConfig mc;
    mc.trajectories = 4000;
    mc.horizon = 10;
    mc.seed = 7;
    McValidation v = monte_carlo_validate(space, lambda, SamplerKind::Elitist, mc);
    REQUIRE(v.consistent());
    REQUIRE(v.comparisons == 11 * 3);
    REQUIRE(v.max_z <= 3.0);
}

TEST_CASE("elitist trajectories with two row populations follow the exact chain") {
    auto space = shared_space({0.2, 0.9}, 2);
    Rng rng(103);
    Matrix lambda = random_positive_policy(space->size(), rng);
    McConfig mc;
    mc.trajectories = 3000;
    mc.horizon = 8;
    mc.seed = 11;
    McValidation v = monte_carlo_validate(space, lambda, SamplerKind::Elitist, mc);
    REQUIRE(v.consistent());
}

TEST_CASE("lifo trajectories follow the policy chain") {
    auto space = shared_space({0.5, 0.1, 0.7}, 1);
    Rng rng(105);
    Matrix lambda = random_positive_policy(space->size(), rng);
    McConfig mc;
    mc.trajectories = 3000;
    mc.horizon = 8;
    mc.seed = 13;
    McValidation v = monte_carlo_validate(space, lambda, SamplerKind::Lifo, mc);
    REQUIRE(v.consistent());
}

TEST_CASE("the comparison flags a wrong model") {
    auto space = shared_space({0.15, 0.65, 0.4}, 1);
    Rng rng(107);
    Matrix lambda = random_positive_policy(space->size(), rng);
    Matrix other = random_positive_policy(space->size(), rng);
    McConfig mc;
    mc.trajectories = 4000;
    mc.horizon = 10;
    mc.seed = 17;
    auto counts = simulate_occupancy(space, lambda, SamplerKind::Elitist, mc);
    auto wrong = expected_occupancy(*space, other, SamplerKind::Elitist, mc.horizon);
    McValidation v = compare_occupancy(counts, wrong, mc.trajectories);
    REQUIRE_FALSE(v.consistent());
    REQUIRE(v.max_z > 3.0);
    REQUIRE_FALSE(v.violating_cells.empty());
}

TEST_CASE("impossible states must never be visited") {
    std::vector<std::vector<std::size_t>> counts = {{10, 0}, {9, 1}};
    std::vector<std::vector<double>> expected = {{1.0, 0.0}, {1.0, 0.0}};
    McValidation v = compare_occupancy(counts, expected, 10);
    REQUIRE(v.violations == 2);  // both cells of the second row are off
    REQUIRE(std::isinf(v.violating_cells[0].z));
    REQUIRE_THROWS_AS(compare_occupancy(counts, {{1.0, 0.0}}, 10), ValidationError);
}
