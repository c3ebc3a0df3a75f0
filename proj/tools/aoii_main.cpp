// Command-line front-end: one JSON config describes one experiment, each
// subcommand runs one mode. Exit codes: 0 success, 1 validation failure,
// 2 config error, 3 numerical failure.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>

#include "aoii/experiments.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::int64_t seed = -1;
    std::string out;
    int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--out", opts.out, "override the output path");
    cmd->add_option("--jobs", opts.jobs, "worker threads for sweeps and grids");
}

aoii::ExperimentConfig load(const CommonOpts& opts, aoii::RunMode expected) {
    aoii::ExperimentConfig cfg = aoii::ExperimentConfig::from_file(opts.config_path);
    if (cfg.mode != expected) throw aoii::ConfigError("config mode does not match subcommand");
    if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
    if (!opts.out.empty()) cfg.out = opts.out;
    if (opts.jobs > 0) cfg.jobs = opts.jobs;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"threshold-policy solver and simulator for CTMC remote estimation"};
    app.require_subcommand(1);

    CommonOpts solve_opts, sim_opts, sweep_opts, contour_opts, validate_opts, scaling_opts;
    CLI::App* solve = app.add_subcommand("solve", "constrained threshold optimization");
    add_common(solve, solve_opts);
    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo estimation");
    add_common(simulate, sim_opts);
    CLI::App* sweep = app.add_subcommand("sweep-budget", "policies across a budget grid");
    add_common(sweep, sweep_opts);
    CLI::App* contour = app.add_subcommand("contour", "threshold-pair grid for binary sources");
    add_common(contour, contour_opts);
    CLI::App* validate = app.add_subcommand("validate", "model self-checks");
    add_common(validate, validate_opts);
    CLI::App* scaling = app.add_subcommand("scaling", "solver timing across source sizes");
    add_common(scaling, scaling_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) {
            const auto rec = aoii::run_solve(load(solve_opts, aoii::RunMode::Solve));
            std::cout << rec.dump(2) << '\n';
        } else if (simulate->parsed()) {
            const auto rec = aoii::run_simulate(load(sim_opts, aoii::RunMode::Simulate));
            std::cout << rec.dump(2) << '\n';
        } else if (sweep->parsed()) {
            aoii::run_sweep_budget(load(sweep_opts, aoii::RunMode::SweepBudget));
        } else if (contour->parsed()) {
            aoii::run_contour(load(contour_opts, aoii::RunMode::Contour));
        } else if (validate->parsed()) {
            const auto report = aoii::run_validate(load(validate_opts, aoii::RunMode::Validate));
            std::cout << report.to_json().dump(2) << '\n';
            if (!report.all_pass()) return 1;
        } else if (scaling->parsed()) {
            aoii::run_scaling(load(scaling_opts, aoii::RunMode::Scaling));
        }
    } catch (const aoii::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
