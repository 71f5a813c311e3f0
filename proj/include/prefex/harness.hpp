#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "prefex/config.hpp"
#include "prefex/pipeline.hpp"

namespace prefex {

// One agent under one hyperparameter assignment.
struct Cell {
    AgentSpec agent;    // with the cell's overrides applied
    std::string label;  // "base" when nothing is swept
};

// run: one "base" cell per agent. sweep: the Cartesian product of the grids
// that apply to each agent (tau only for Boltzmann variants, ensemble_size
// only for ensembles). Single-value grids are applied but left out of the
// label, so a one-cell sweep reuses the "base" label and seeds.
std::vector<Cell> expand_cells(const ExperimentConfig& cfg, bool sweep);

std::uint64_t cell_seed(std::uint64_t master_seed, std::string_view agent, std::string_view cell,
                        std::size_t seed_index);

// World for seed index k: same teacher and eval prompts, own train stream.
WorldConfig seed_world_config(const WorldConfig& base, std::size_t seed_index);

struct JobOutcome {
    std::string agent;
    std::string cell;
    std::size_t seed_index = 0;
    bool ok = false;
    std::string error;
    std::vector<EpochRecord> records;
};

struct RunSummary {
    std::vector<JobOutcome> jobs;
    bool ok() const;
};

/// Runs every (cell, seed) job and writes
///   out/config.ini, out/teacher.json,
///   out/<agent>/<cell>/seed_<k>/{records.ndjson, checkpoint.json, meta.json}
/// plus out/summary.csv for sweeps. Records are appended as they are produced.
/// Jobs run in parallel up to `jobs`; a failing job does not stop the others.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out, bool sweep,
                          std::size_t jobs);

// One JSON line per record, tagged with the producing config hash.
std::string record_line(const EpochRecord& r, std::string_view config_hash);
// Reads a records file, ignoring a truncated final line.
std::vector<EpochRecord> read_records(const std::filesystem::path& path);

enum class ReportMode { curves, match_table };
ReportMode parse_report_mode(std::string_view name);

/// Aggregates finished runs. curves: mean and standard error (sample std /
/// sqrt(n)) of win rate per agent, cell and epoch. match_table: best cell per
/// agent by final mean win rate, then queries_to_match against the double TS
/// agent. Throws ConfigError if the run dirs were produced by different
/// experiments (master seed and seed count may differ).
std::string report(const std::vector<std::filesystem::path>& run_dirs, ReportMode mode);

}  // namespace prefex
