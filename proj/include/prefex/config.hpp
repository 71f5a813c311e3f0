#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "prefex/environment.hpp"
#include "prefex/errors.hpp"
#include "prefex/pipeline.hpp"

namespace prefex {

// ConfigError carrying the 1-based line of the offending entry (0 when the
// problem is not tied to one line).
class ConfigParseError : public ConfigError {
public:
    ConfigParseError(std::size_t line, const std::string& what, const std::string& source = {});
    std::size_t line() const noexcept { return line_; }
    // Message without the line prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    std::size_t line_;
    std::string detail_;
};

// Hyperparameter grids. An empty list means "not swept".
struct SweepGrid {
    std::vector<double> learning_rate;
    std::vector<double> lambda_prime;
    std::vector<std::size_t> sgd_steps;
    std::vector<double> output_scale;
    std::vector<double> tau;
    std::vector<std::size_t> ensemble_size;

    bool empty() const;
    friend bool operator==(const SweepGrid&, const SweepGrid&) = default;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t master_seed = 0;
    std::size_t seeds = 1;
    std::size_t jobs = 1;
    RunSettings run;
    WorldConfig world;
    std::vector<AgentSpec> agents;
    SweepGrid sweep;

    void validate() const;
    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

// Canonical INI text; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

// FNV-1a of the canonical text, 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// Shortest decimal text that parses back to exactly x.
std::string format_double(double x);

}  // namespace prefex
