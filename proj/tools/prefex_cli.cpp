// prefex: run, sweep and report preference-learning experiments.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prefex/config.hpp"
#include "prefex/errors.hpp"
#include "prefex/harness.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeFailure = 2;

// Relative output dirs are placed under PREFEX_OUTPUT_ROOT when it is set.
fs::path resolve_out(const std::string& out) {
    fs::path p(out);
    if (p.is_relative())
        if (const char* root = std::getenv("PREFEX_OUTPUT_ROOT"); root && *root) p = fs::path(root) / p;
    return p;
}

int execute(const std::string& config_path, const std::string& out, std::optional<std::size_t> jobs,
            std::optional<std::uint64_t> seed, bool sweep) {
    auto cfg = prefex::load_config(config_path);
    if (seed) cfg.master_seed = *seed;
    const std::size_t j = jobs.value_or(cfg.jobs);
    const fs::path dir = resolve_out(out);
    const auto summary = prefex::run_experiment(cfg, dir, sweep, j);
    std::size_t failed = 0;
    for (const auto& job : summary.jobs) {
        if (job.ok) continue;
        ++failed;
        std::cerr << "failed: " << job.agent << "/" << job.cell << "/seed_" << job.seed_index << ": " << job.error
                  << "\n";
    }
    std::cout << summary.jobs.size() - failed << "/" << summary.jobs.size() << " jobs completed in " << dir.string()
              << "\n";
    return failed ? kRuntimeFailure : kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exploration experiments for preference-feedback reward learning"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out = "runs";
    std::optional<std::size_t> jobs;
    std::optional<std::uint64_t> seed;

    auto add_run_flags = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "experiment config (INI)")->required()->check(CLI::ExistingFile);
        cmd->add_option("-o,--out", out, "output directory");
        cmd->add_option("-j,--jobs", jobs, "parallel jobs (default: config value)")->check(CLI::PositiveNumber);
        cmd->add_option("-s,--seed", seed, "override the master seed");
    };
    auto* run_cmd = app.add_subcommand("run", "run every agent for every seed");
    add_run_flags(run_cmd);
    auto* sweep_cmd = app.add_subcommand("sweep", "run the hyperparameter grid and rank cells");
    add_run_flags(sweep_cmd);

    auto* report_cmd = app.add_subcommand("report", "aggregate finished runs into CSV");
    std::vector<std::string> run_dirs;
    std::string mode = "curves";
    std::string report_out;
    report_cmd->add_option("run_dirs", run_dirs, "run output directories")->required();
    report_cmd->add_option("-m,--mode", mode, "curves or match_table")
        ->check(CLI::IsMember({"curves", "match_table"}));
    report_cmd->add_option("-o,--out", report_out, "CSV file (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) return execute(config_path, out, jobs, seed, false);
        if (*sweep_cmd) return execute(config_path, out, jobs, seed, true);
        std::vector<fs::path> dirs;
        for (const auto& d : run_dirs) dirs.push_back(resolve_out(d));
        const std::string csv = prefex::report(dirs, prefex::parse_report_mode(mode));
        if (report_out.empty()) {
            std::cout << csv;
        } else {
            std::ofstream f(resolve_out(report_out), std::ios::binary | std::ios::trunc);
            if (!f) throw std::runtime_error("cannot write '" + report_out + "'");
            f << csv;
        }
        return kOk;
    } catch (const prefex::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
}
