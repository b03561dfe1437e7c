// End-to-end acceptance gate. Each numbered check prints one [PASS]/[FAIL]
// line with its measured values; the exit code is the number of failures.
// Tolerances are pinned here on purpose: loosening them is a visible diff.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "llmo/llmo.hpp"

using namespace llmo;

namespace {

int failures = 0;

void report(int number, bool ok, const std::string& text) {
    std::printf("[%s] %d. %s\n", ok ? "PASS" : "FAIL", number, text.c_str());
    if (!ok) ++failures;
}

std::string fmt(const char* pattern, ...) {
    va_list args;
    va_start(args, pattern);
    char buffer[512];
    std::vsnprintf(buffer, sizeof buffer, pattern, args);
    va_end(args);
    return buffer;
}

// The shared lattice world: 4 actions, populations of 2, 16 ordered states.
struct ChainFixture {
    std::shared_ptr<StateSpace> space;
    std::vector<Matrix> policies;

    ChainFixture() {
        GridSpec grid = GridSpec::uniform(4, 1, 2, Bounds::uniform(1, 0.0, 1.0));
        std::vector<double> rewards{0.15, 0.62, 0.37, 0.88};
        space = std::make_shared<StateSpace>(
            enumerate_and_order(grid, [&](const ActionVector& a) {
                return rewards[grid.level_of(0, a.values[0])];
            }));
        Rng master(42);
        for (int k = 0; k < 20; ++k) policies.push_back(random_positive_policy(space->size(), master));
    }
};

void criterion_1_structure(const ChainFixture& fx) {
    const auto start = std::chrono::steady_clock::now();
    bool ok = fx.space->size() == 16;
    double rho_max = 0.0;
    for (const Matrix& lambda : fx.policies) {
        const StructureReport elitist =
            check_structure(build_single_transition(*fx.space, lambda, SamplerKind::Elitist));
        const StructureReport lifo =
            check_structure(build_single_transition(*fx.space, lambda, SamplerKind::Lifo));
        ok = ok && elitist.elitist_ok() && lifo.lifo_ok();
        rho_max = std::max(rho_max, elitist.rest_spectral_radius);
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ok = ok && rho_max < 1.0 && seconds < 60.0;
    report(1, ok,
           fmt("block structure of 20 random-policy chains on the 16-state lattice "
               "(max rest-block spectral radius %.6f, %.2f s)",
               rho_max, seconds));
}

void criterion_2_absorption(const ChainFixture& fx) {
    double worst_elitist = 1.0, worst_lifo = 0.0;
    for (const Matrix& lambda : fx.policies) {
        const TransitionModel elitist =
            build_single_transition(*fx.space, lambda, SamplerKind::Elitist);
        const TransitionModel lifo =
            build_single_transition(*fx.space, lambda, SamplerKind::Lifo);
        const auto pi0 = initial_state_distribution(*fx.space, SamplerKind::Elitist);
        worst_elitist = std::min(
            worst_elitist, optimal_mass(elitist, propagate_series(elitist, pi0, 1000).back()));
        worst_lifo = std::max(worst_lifo, optimal_mass(lifo, stationary_distribution(lifo)));
    }
    const bool ok = worst_elitist >= 1.0 - 1e-6 && worst_lifo < 1.0 - 1e-3;
    report(2, ok,
           fmt("elitist memory absorbs (min optimal mass %.12f at t=1000), forgetful memory "
               "does not (max stationary optimal mass %.6f)",
               worst_elitist, worst_lifo));
}

void criterion_3_eigen_rate(const ChainFixture& fx) {
    double worst_gamma = 0.0, worst_step = 0.0;
    bool all_proper = true;
    for (const Matrix& lambda : fx.policies) {
        const TransitionModel elitist =
            build_single_transition(*fx.space, lambda, SamplerKind::Elitist);
        const EigenInit eigen = q_max_and_eigen_init(elitist);
        all_proper = all_proper && eigen.proper;
        const auto series = propagate_series(elitist, eigen.pi0, 50);
        std::vector<double> gaps(series.size());
        for (std::size_t t = 0; t < series.size(); ++t)
            gaps[t] = expected_gap(*fx.space, series[t]);
        for (std::size_t t = 1; t < gaps.size(); ++t) {
            worst_gamma = std::max(
                worst_gamma,
                std::abs(std::pow(gaps[t] / gaps[0], 1.0 / double(t)) - eigen.q_max));
            worst_step = std::max(worst_step, std::abs(gaps[t] / gaps[t - 1] - eigen.q_max));
        }
    }
    const bool ok = all_proper && worst_gamma < 1e-10 && worst_step < 1e-10;
    report(3, ok,
           fmt("eigenvector start contracts by exactly q_max for t=1..50 "
               "(max rate error %.2e, max step error %.2e)",
               worst_gamma, worst_step));
}

void criterion_4_ensemble_law(const ChainFixture& fx) {
    double worst_pow = 0.0, worst_slope = 0.0;
    for (const Matrix& lambda : fx.policies) {
        const double q1 =
            q_max_and_eigen_init(build_multi_transition(*fx.space, {lambda})).q_max;
        const auto pi0 = initial_state_distribution(*fx.space, SamplerKind::Elitist);
        std::vector<std::pair<std::size_t, double>> slopes;
        for (std::size_t L : {1, 2, 3}) {
            const TransitionModel multi =
                build_multi_transition(*fx.space, std::vector<Matrix>(L, lambda));
            worst_pow = std::max(
                worst_pow,
                std::abs(q_max_and_eigen_init(multi).q_max - std::pow(q1, double(L))));
            const auto series = propagate_series(multi, pi0, 60);
            std::vector<double> gaps(series.size());
            for (std::size_t t = 0; t < series.size(); ++t)
                gaps[t] = expected_gap(*fx.space, series[t]);
            slopes.emplace_back(L, fit_semilog(gaps, 30).slope);
        }
        for (const auto& [L, slope] : slopes)
            worst_slope = std::max(
                worst_slope, std::abs(slope / (double(L) * slopes.front().second) - 1.0));
    }
    const bool ok = worst_pow < 1e-12 && worst_slope < 0.05;
    report(4, ok,
           fmt("ensembles contract as the one-agent rate to the L-th power, L in {1,2,3} "
               "(max q error %.2e, max slope ratio error %.4f)",
               worst_pow, worst_slope));
}

void criterion_5_mc_fidelity(const ChainFixture& fx) {
    Rng policy_rng(1);
    const Matrix lambda = random_positive_policy(fx.space->size(), policy_rng);
    McConfig mc;
    mc.trajectories = 100000;
    mc.horizon = 50;
    mc.seed = 1;
    const McValidation v = monte_carlo_validate(fx.space, lambda, SamplerKind::Elitist, mc);
    report(5, v.consistent(),
           fmt("100000 sampled optimizer trajectories match the exact chain at every t<=50 "
               "(%zu cells, %zu outside their bands, max z %.3f)",
               v.comparisons, v.violations, v.max_z));
}

void criterion_6_end_to_end() {
    ExperimentConfig c;
    c.scenario = Scenario::IfcEe;
    c.dims = 2;
    c.grid_levels = 10;
    c.population = 5;
    c.horizon = 200;
    c.channel_seed = 2;
    c.epsilon = 0.05;
    c.width = 1;
    c.seeds.clear();
    for (std::uint64_t s = 1; s <= 50; ++s) c.seeds.push_back(s);

    const ScenarioBundle bundle = build_scenario(c);
    std::size_t elitist_hits = 0, lifo_hits = 0;
    for (const RunResult& r : run_all_seeds(c, bundle, false))
        if (r.best.reward >= *bundle.optimum - 1e-12) ++elitist_hits;
    ExperimentConfig lifo = c;
    lifo.sampler = SamplerKind::Lifo;
    for (const RunResult& r : run_all_seeds(lifo, bundle, false))
        if (r.best.reward >= *bundle.optimum - 1e-12) ++lifo_hits;

    // Cross-oracle: a continuous local solver started from many points must
    // dominate the lattice optimum it is being compared against.
    const IfcModel model = IfcModel::rayleigh(2, c.channel_seed);
    const auto solved = multi_start(bundle.bounds, 8, 3, [&](std::vector<double> x0) {
        const DinkelbachResult r = dinkelbach_ee(model, std::move(x0));
        return std::make_pair(r.x, r.ee);
    });
    const bool cross_ok = solved.second >= *bundle.optimum - 1e-9;

    const bool ok = elitist_hits == 50 && lifo_hits < 50 && cross_ok;
    report(6, ok,
           fmt("elitist search finds the exhaustive power-grid optimum in %zu/50 seeds by "
               "t=200, forgetful search misses %zu (continuous solver reaches %.6f vs "
               "lattice %.6f)",
               elitist_hits, 50 - lifo_hits, solved.second, *bundle.optimum));
}

void criterion_7_reward_oracles() {
    const IfcModel single = IfcModel::from_gains({{1.0}});
    const DinkelbachResult dk = dinkelbach_ee(single);
    const double x_star = (std::exp(1.0) - 1.0) / 10.0;
    const bool dinkelbach_ok =
        std::abs(dk.ee - std::exp(-1.0)) < 1e-6 && std::abs(dk.x[0] - x_star) < 1e-4;

    const PowerControlResult wm = wmmse_power_control(single);
    const bool wmmse_ok = std::abs(wm.x[0] - 1.0) < 1e-6;

    const IfcModel diagonal = IfcModel::from_gains({{1.0, 0.0}, {0.0, 1.0}});
    const double se = ifc_se(diagonal, {1.0, 1.0});
    const bool se_ok = std::abs(se - 2.0 * std::log(11.0)) < 1e-12;

    ExperimentConfig bc;
    bc.scenario = Scenario::BcSe;
    bc.constraint = ConstraintMode::Penalty;
    bc.dims = 3;
    bc.grid_levels = 8;
    bc.population = 5;
    bc.horizon = 120;
    bc.channel_seed = 9;
    bc.epsilon = 0.15;
    bc.seeds = {1, 2, 3, 4, 5};
    const ScenarioBundle bundle = build_scenario(bc);
    double worst_violation = 0.0;
    for (const RunResult& r : run_all_seeds(bc, bundle, false))
        worst_violation = std::max(worst_violation, sum_power_violation(r.best.action.values));
    const bool bc_ok = worst_violation < 1e-2;

    const bool ok = dinkelbach_ok && wmmse_ok && se_ok && bc_ok;
    report(7, ok,
           fmt("analytic oracles hold: ratio search gives EE %.8f at x %.6f, MMSE weights "
               "give full power %.8f, diagonal sum rate off by %.1e, converged penalty "
               "violation %.2e",
               dk.ee, dk.x[0], wm.x[0], std::abs(se - 2.0 * std::log(11.0)), worst_violation));
}

void criterion_8_token_model() {
    const std::vector<std::string> expected{"-", "32", ".", "791", "4"};
    const bool segmentation_ok = tokenize_number("-32.7914") == expected;
    const bool count_ok = tokens_per_number(3) == 4;
    const bool vocab_ok = token_vocabulary_size() == 1114;
    const TokenSpaceSize size = state_space_size(5, 3, 3);
    const bool space_ok = std::abs(size.log10_states - 182.8) < 0.05;
    const bool ok = segmentation_ok && count_ok && vocab_ok && space_ok;
    report(8, ok,
           fmt("token model: \"-32.7914\" -> 5 groups %s, 4 tokens per 3-digit number, "
               "vocabulary 1114, population space 10^%.1f",
               segmentation_ok ? "exactly" : "WRONG", size.log10_states));
}

// Minimal loopback stub: scripted responses, no live network.
struct StubServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> hits{0};

    explicit StubServer(std::function<void(int, httplib::Response&)> script) {
        server.Post("/v1/chat/completions",
                    [this, script](const httplib::Request&, httplib::Response& res) {
                        script(++hits, res);
                    });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer() {
        server.stop();
        thread.join();
    }
};

std::string envelope(const std::string& content) {
    nlohmann::json j = {{"choices", {{{"message", {{"content", content}}}}}}};
    return j.dump();
}

HttpAgentConfig stub_config(int port) {
    HttpAgentConfig hc;
    hc.endpoint = "http://127.0.0.1:" + std::to_string(port);
    hc.population = 2;
    hc.dims = 1;
    hc.bounds = Bounds::uniform(1, 0.0, 1.0);
    hc.backoff_seconds = 0.0;
    return hc;
}

Population stub_examples() {
    Population p;
    p.append_row(ActionVector{{0.1}}, 0.7);
    p.append_row(ActionVector{{0.9}}, 0.2);
    return p;
}

void criterion_9_plumbing() {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "llmo-acceptance";
    fs::remove_all(base);

    ExperimentConfig c;
    c.scenario = Scenario::SyntheticGrid;
    c.grid_levels = 6;
    c.dims = 1;
    c.population = 3;
    c.horizon = 15;
    c.seeds = {1, 2};
    c.output_dir = (base / "a").string();
    run_experiment(c);
    c.output_dir = (base / "b").string();
    run_experiment(c);
    bool bytes_ok = true;
    for (const char* name : {"trace_1.csv", "trace_2.csv", "aggregate_best.csv"})
        bytes_ok = bytes_ok && read_text(base / "a" / name) == read_text(base / "b" / name);
    fs::remove_all(base);

    bool stub_ok = true, retry_ok = true, timeout_ok = true;
    {
        StubServer stub([](int, httplib::Response& res) {
            res.set_content(envelope("0.25\n0.75"), "application/json");
        });
        HttpChatAgent agent(stub_config(stub.port));
        const Population got = agent.generate(stub_examples());
        stub_ok = got.actions.size() == 2 && got.actions[0].values[0] == 0.25 &&
                  got.actions[1].values[0] == 0.75;
    }
    {
        StubServer stub([](int hit, httplib::Response& res) {
            if (hit < 3) {
                res.status = hit == 1 ? 500 : 429;
                return;
            }
            res.set_content(envelope("0.5\n0.5"), "application/json");
        });
        HttpChatAgent agent(stub_config(stub.port));
        const Population got = agent.generate(stub_examples());
        retry_ok = got.actions.size() == 2 && stub.hits == 3;
    }
    {
        StubServer stub([](int, httplib::Response& res) {
            std::this_thread::sleep_for(std::chrono::milliseconds(400));
            res.set_content(envelope("too late"), "application/json");
        });
        HttpAgentConfig hc = stub_config(stub.port);
        hc.timeout_seconds = 0.05;
        hc.max_attempts = 1;
        HttpChatAgent agent(hc);
        timeout_ok = false;
        try {
            agent.generate(stub_examples());
        } catch (const AgentFailure& e) {
            timeout_ok = e.kind == AgentFailure::Kind::Transport;
        }
    }

    const bool ok = bytes_ok && stub_ok && retry_ok && timeout_ok;
    report(9, ok,
           fmt("plumbing: reruns byte-identical (%s), loopback stub success/retry/timeout "
               "(%s/%s/%s)",
               bytes_ok ? "yes" : "NO", stub_ok ? "ok" : "NO", retry_ok ? "ok" : "NO",
               timeout_ok ? "ok" : "NO"));
}

}  // namespace

int main() {
    const ChainFixture fx;
    criterion_1_structure(fx);
    criterion_2_absorption(fx);
    criterion_3_eigen_rate(fx);
    criterion_4_ensemble_law(fx);
    criterion_5_mc_fidelity(fx);
    criterion_6_end_to_end();
    criterion_7_reward_oracles();
    criterion_8_token_model();
    criterion_9_plumbing();
    std::printf("%d of 9 criteria passed\n", 9 - failures);
    return failures;
}
