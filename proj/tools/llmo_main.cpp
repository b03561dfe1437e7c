#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "llmo/experiment.hpp"

namespace {

llmo::ExperimentConfig load_with_overrides(const std::string& path,
                                           const std::vector<std::string>& overrides) {
    nlohmann::json j = nlohmann::json::parse(llmo::read_text(path), nullptr, false);
    if (j.is_discarded())
        throw llmo::FormatError(path + " is not valid JSON");
    for (const std::string& spec : overrides) llmo::apply_override(j, spec);
    return llmo::config_from_json(j);
}

const char* mark(bool ok) { return ok ? "ok  " : "FAIL"; }

int do_run(const std::string& config_path, const std::vector<std::string>& overrides,
           const std::string& output_dir, bool dump_populations, bool allow_network) {
    llmo::ExperimentConfig config = load_with_overrides(config_path, overrides);
    if (!output_dir.empty()) config.output_dir = output_dir;
    if (dump_populations) config.dump_populations = true;

    const llmo::ExperimentSummary summary = llmo::run_experiment(config, allow_network);
    std::printf("config hash   %s\n", summary.config_hash.c_str());
    std::printf("output dir    %s\n", summary.directory.string().c_str());
    std::printf("seeds         %zu\n", config.seeds.size());
    std::printf("final best    %.10g (mean over seeds)\n", summary.final_mean_best);
    if (summary.optimum) {
        std::printf("grid optimum  %.10g\n", *summary.optimum);
        std::printf("optimum hits  %zu of %zu seeds\n", summary.optimum_hits,
                    config.seeds.size());
    }
    for (const std::string& file : summary.files) std::printf("wrote         %s\n", file.c_str());
    return 0;
}

int do_analyze(const std::string& dir) {
    const llmo::RateReport report = llmo::analyze_rates(dir);
    std::printf("config hash   %s\n", report.config_hash.c_str());
    std::printf("traces        %zu\n", report.traces);
    std::printf("reference     %.10g\n", report.reference);
    std::printf("final best    %.10g (mean over traces)\n", report.final_mean_best);
    std::printf("gap slope     %.6g per iteration (log10)\n", report.fit.slope);
    std::printf("contraction   %.6g per iteration\n", std::pow(10.0, report.fit.slope));
    std::printf("r squared     %.6g over %zu points\n", report.fit.r_squared,
                report.fit.points);
    std::printf("reliable      %s\n", report.reliable ? "yes" : "no (r squared below 0.99)");
    std::printf("wrote         rate_report.json\n");
    return 0;
}

int do_verify(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& output_dir) {
    llmo::ExperimentConfig config = load_with_overrides(config_path, overrides);
    if (!output_dir.empty()) config.output_dir = output_dir;

    const llmo::TheoryReport r = llmo::verify_theory(config);
    std::printf("states                 %zu\n", r.states);
    std::printf("q_max                  %.12g\n", r.q_max);
    std::printf("[%s] elitist chain is exactly block triangular\n",
                mark(r.elitist_structure_ok));
    std::printf("[%s] forgetful chain is strictly positive\n", mark(r.lifo_all_positive));
    std::printf("[%s] elitist optimal mass %.12g >= 1 - 1e-6 after 1000 steps\n",
                mark(r.elitist_optimal_mass >= 1.0 - 1e-6), r.elitist_optimal_mass);
    std::printf("[%s] forgetful stationary optimal mass %.6g stays below 1 - 1e-3\n",
                mark(r.lifo_stationary_optimal_mass < 1.0 - 1e-3),
                r.lifo_stationary_optimal_mass);
    std::printf("[%s] per-step contraction matches q_max (max error %.3g)\n",
                mark(r.max_gamma_error < 1e-10 && r.max_step_ratio_error < 1e-10),
                std::max(r.max_gamma_error, r.max_step_ratio_error));
    std::printf("[%s] ensemble q_max obeys the power law (max error %.3g)\n",
                mark(r.max_power_law_error < 1e-12), r.max_power_law_error);
    std::printf("[%s] semilog slope scales linearly with ensemble size (max error %.3g)\n",
                mark(r.max_slope_ratio_error < 0.05), r.max_slope_ratio_error);
    if (r.mc_checked)
        std::printf("[%s] sampled trajectories stay inside the binomial bands (max z %.3g)\n",
                    mark(r.mc_consistent), r.mc_max_z);
    else
        std::printf("[skip] trajectory sampling disabled (mc_trajectories = 0)\n");
    std::printf("wrote                  gamma_series.csv, theory_report.json\n");
    std::printf("%s\n", r.pass() ? "PASS" : "FAIL");
    return r.pass() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"black-box optimization lab: language-model-style search loops, "
                 "exact chain analysis, and wireless reward models"};
    app.require_subcommand(1);

    std::string config_path;
    std::string dir;
    std::string output_dir;
    std::vector<std::string> overrides;
    bool allow_network = false;
    bool dump_populations = false;

    CLI::App* run = app.add_subcommand("run", "run an experiment from a JSON configuration");
    run->add_option("config", config_path, "configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--set", overrides,
                    "override a configuration key before validation (key=value, dotted keys "
                    "reach nested objects)");
    run->add_option("--output-dir", output_dir, "redirect artifacts to this directory");
    run->add_flag("--dump-populations", dump_populations,
                  "also write every population visited, per seed");
    run->add_flag("--allow-network", allow_network,
                  "permit http agents to contact their configured endpoint");

    CLI::App* analyze =
        app.add_subcommand("analyze", "fit a convergence rate to a directory of traces");
    analyze->add_option("dir", dir, "directory holding trace_<seed>.csv files")
        ->required()
        ->check(CLI::ExistingDirectory);

    CLI::App* verify = app.add_subcommand(
        "verify-theory", "check the exact chain predictions on a lattice configuration");
    verify->add_option("config", config_path, "configuration file (synthetic-grid scenario)")
        ->required()
        ->check(CLI::ExistingFile);
    verify->add_option("--set", overrides,
                       "override a configuration key before validation (key=value)");
    verify->add_option("--output-dir", output_dir, "redirect reports to this directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return do_run(config_path, overrides, output_dir, dump_populations, allow_network);
        if (analyze->parsed()) return do_analyze(dir);
        return do_verify(config_path, overrides, output_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
