// fedsel: run, compare and validate federated client-selection experiments.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedsel/config.hpp"
#include "fedsel/engine.hpp"
#include "fedsel/error.hpp"
#include "fedsel/report.hpp"
#include "fedsel/sweep.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

fs::path default_out(const fs::path& config_path) {
    const char* root = std::getenv("FEDSEL_OUT_ROOT");
    return fs::path(root && *root ? root : "runs") / config_path.stem();
}

int cmd_run(const fs::path& config_path, const std::vector<std::string>& overrides, fs::path out, int jobs) {
    fedsel::ExperimentConfig config;
    try {
        std::vector<std::string> all = overrides;
        if (jobs > 0) all.push_back("jobs=" + std::to_string(jobs));
        config = fedsel::load_config(config_path, all);
    } catch (const fedsel::Error& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitConfig;
    }
    if (out.empty()) out = default_out(config_path);

    try {
        const auto env = fedsel::build_environment(config);
        for (const auto& w : env.warnings) std::cerr << "warning: " << w << '\n';
        const auto result = fedsel::run_experiment(config, env);
        fedsel::write_run_outputs(out, config, env, result);
        const auto& last = result.rounds.empty() ? fedsel::RoundRecord{} : result.rounds.back();
        std::cout << fedsel::to_string(result.policy) << ": " << result.rounds.size() << " rounds ("
                  << fedsel::to_string(result.stop_reason) << "), accuracy " << last.accuracy << ", emissions "
                  << last.cumulative_emissions << " gCO2eq\n"
                  << "outputs in " << out.string() << '\n';
    } catch (const fedsel::ConfigError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}

int cmd_sweep(const fs::path& sweep_path, const fs::path& out, int jobs) {
    fedsel::SweepSpec spec;
    try {
        spec = fedsel::load_sweep(sweep_path);
        if (!out.empty()) spec.output_dir = out;
        if (spec.output_dir.empty()) spec.output_dir = default_out(sweep_path);
        spec.validate();
    } catch (const fedsel::Error& e) {
        std::cerr << "invalid sweep: " << e.what() << '\n';
        return kExitConfig;
    }
    try {
        const auto rows = fedsel::run_sweep(spec, static_cast<std::size_t>(std::max(jobs, 1)));
        std::size_t failed = 0;
        for (const auto& r : rows) {
            if (!r.ok) {
                ++failed;
                std::cerr << "cell " << fedsel::to_string(r.policy) << " knob " << r.knob << " seed " << r.seed
                          << " failed: " << r.error << '\n';
            }
        }
        std::cout << rows.size() << " cells, " << failed << " failed; table in "
                  << (spec.output_dir / "comparison.csv").string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "sweep failed: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}

int cmd_validate(const fs::path& config_path, const std::vector<std::string>& overrides) {
    try {
        const auto config = fedsel::load_config(config_path, overrides);
        const auto env = fedsel::build_environment(config);
        for (const auto& w : env.warnings) std::cerr << "warning: " << w << '\n';
        std::cout << fedsel::config_to_json(config).dump(2) << '\n';
    } catch (const std::exception& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitConfig;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning client-selection simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    int jobs = 0;

    auto* run = app.add_subcommand("run", "Run one experiment");
    run->add_option("--config", config_path, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--set", overrides, "Override a field, e.g. selection.seed=7 (repeatable)");
    run->add_option("--out", out_dir, "Output directory (default $FEDSEL_OUT_ROOT/<config name>)");
    run->add_option("--jobs", jobs, "Local-training threads")->check(CLI::NonNegativeNumber);

    auto* sweep = app.add_subcommand("sweep", "Run a policy x knob x seed comparison");
    sweep->add_option("--config", config_path, "Sweep specification (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    sweep->add_option("--jobs", jobs, "Cells run concurrently")->check(CLI::NonNegativeNumber);

    auto* validate = app.add_subcommand("validate", "Check a configuration and print it fully resolved");
    validate->add_option("--config", config_path, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
    validate->add_option("--set", overrides, "Override a field (repeatable)");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(config_path, overrides, out_dir, jobs);
    if (sweep->parsed()) return cmd_sweep(config_path, out_dir, jobs);
    return cmd_validate(config_path, overrides);
}
