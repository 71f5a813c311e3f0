#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "prefex/kernels.hpp"
#include "prefex/reward_models.hpp"
#include "prefex/rng.hpp"

namespace prefex {

// The N candidate responses for one prompt.
struct CandidateSet {
    std::uint64_t prompt_id = 0;
    std::vector<Embedding> embeddings;

    std::size_t size() const noexcept { return embeddings.size(); }
};

// Ordered pair of distinct 0-based candidate indices; `first` is shown as
// response A of the query.
struct SelectionResult {
    std::size_t first = 0;
    std::size_t second = 1;

    friend bool operator==(const SelectionResult&, const SelectionResult&) = default;
};

struct SelectionDiagnostics {
    bool zero_variance = false;   // infomax found no disagreement at all
    bool fallback = false;        // double TS gave up and drew the second index uniformly
    std::size_t attempts = 0;     // double TS redraws used
};

enum class PrefMode { logistic, ratio };

PrefMode parse_pref_mode(std::string_view name);
std::string_view to_string(PrefMode mode);

// Two distinct indices uniformly at random.
SelectionResult passive_select(std::size_t n, Rng& rng);

// softmax(rewards / tau) with max subtraction.
std::vector<double> boltzmann_probs(std::span<const double> rewards, double tau);

// Both indices from the Boltzmann distribution, without replacement.
SelectionResult boltzmann_select(std::span<const double> rewards, double tau, Rng& rng);

// First index is the reward argmax (lowest index on ties); second from the
// Boltzmann distribution over the rest.
SelectionResult greedy_boltzmann_select(std::span<const double> rewards, double tau, Rng& rng);

// Probability that the first response is preferred under one particle.
// Ratio mode adds -min(0, min(r, r')) + 1e-6 to both rewards, then returns
// r / (r + r').
double pair_preference(double r, double r_prime, PrefMode mode);

// Unbiased sample variance (divisor n - 1).
double sample_variance(std::span<const double> values);

/// Picks the pair n < n' with the largest across-index variance of the
/// predicted preference probability, over `m` epistemic indices drawn
/// uniformly with replacement. `particle_rewards` is S x N. Ties break to the
/// lexicographically smallest pair; if every variance is zero the result is
/// (0, 1) and diag->zero_variance is set.
SelectionResult infomax_select(const Matrix& particle_rewards, std::size_t m, Rng& rng, PrefMode mode,
                               SelectionDiagnostics* diag = nullptr);
SelectionResult infomax_select(const CandidateSet& cands, const EnnRewardModel& enn, std::size_t m, Rng& rng,
                               PrefMode mode, SelectionDiagnostics* diag = nullptr);

/// Double Thompson sampling: the first index is the argmax under one sampled
/// particle, the second the argmax under further sampled particles until it
/// differs; after `k` collisions the second index is drawn uniformly from the
/// remaining N - 1.
SelectionResult double_ts_select(const Matrix& particle_rewards, std::size_t k, Rng& rng,
                                 SelectionDiagnostics* diag = nullptr);
SelectionResult double_ts_select(const CandidateSet& cands, const EnnRewardModel& enn, std::size_t k, Rng& rng,
                                 SelectionDiagnostics* diag = nullptr);

// Index of the largest value, lowest index on ties.
std::size_t argmax_lowest(std::span<const double> values);

}  // namespace prefex
