#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "prefex/environment.hpp"
#include "prefex/reward_models.hpp"
#include "prefex/rng.hpp"

namespace prefex {

// A query together with the simulator's probability that emb_a is preferred.
struct EvalQuery {
    Embedding emb_a;
    Embedding emb_b;
    double true_prob = 0.5;
};

// Queries built from eval-split prompts at positions [offset, offset + count),
// each using the prompt's first two candidates.
std::vector<EvalQuery> make_eval_queries(const World& world, std::size_t count, std::uint64_t offset = 0);

struct NllDiagnostics {
    std::size_t clamp_events = 0;
};

inline constexpr double kProbClamp = 1e-12;

// Per-particle Bradley-Terry probabilities of "first preferred" (one entry for
// a point model).
std::vector<double> particle_probs(const RewardModel& model, const EvalQuery& q);
// Model predictive probability that the first response is preferred: the
// Bradley-Terry probability for a point model, the particle average for an
// ensemble.
double predictive_prob(const RewardModel& model, const EvalQuery& q);

// Labels (0 = first preferred) drawn from each query's true probability.
std::vector<int> draw_labels(std::span<const EvalQuery> queries, Rng& rng);

double marginal_nll(const RewardModel& model, std::span<const EvalQuery> queries, std::span<const int> labels,
                    NllDiagnostics* diag = nullptr);
double marginal_nll(const RewardModel& model, std::span<const EvalQuery> queries, Rng& rng,
                    NllDiagnostics* diag = nullptr);

enum class DyadicLabelMode {
    sampled,  // label sequences drawn from the true probabilities
    exact,    // expectation over sequence composition and labels, by multinomial enumeration
};

struct DyadicConfig {
    std::size_t tau_len = 10;
    std::size_t n_anchor_pairs = 200;
    std::size_t n_label_draws = 5;
    // 0: average over every particle. k > 0: Monte Carlo over k uniformly drawn indices.
    std::size_t eval_index_count = 0;
    std::uint64_t rng_seed = 0;
    DyadicLabelMode label_mode = DyadicLabelMode::sampled;

    void validate() const;

    friend bool operator==(const DyadicConfig&, const DyadicConfig&) = default;
};

DyadicLabelMode parse_label_mode(std::string_view name);
std::string_view to_string(DyadicLabelMode mode);

// One length-tau_len sequence of (query index into the pool, label).
struct DyadicSample {
    std::vector<std::size_t> queries;
    std::vector<int> labels;
};

// Sampled-mode draws: n_anchor_pairs * n_label_draws sequences, grouped by
// anchor pair.
std::vector<DyadicSample> draw_dyadic_samples(std::span<const EvalQuery> pool, const DyadicConfig& cfg);

// log of the joint predictive likelihood of a labelled sequence. Per-factor
// probabilities are clamped to [1e-12, 1 - 1e-12].
double joint_log_likelihood(const RewardModel& model, std::span<const EvalQuery> pool, const DyadicSample& sample,
                            NllDiagnostics* diag = nullptr);

// Average over sequences of -log joint likelihood / tau_len.
double dyadic_joint_nll(const RewardModel& model, std::span<const EvalQuery> pool,
                        std::span<const DyadicSample> samples, NllDiagnostics* diag = nullptr);
double dyadic_joint_nll(const RewardModel& model, std::span<const EvalQuery> pool, const DyadicConfig& cfg,
                        NllDiagnostics* diag = nullptr);
// Pool of 2 * n_anchor_pairs eval queries drawn from the world.
double dyadic_joint_nll(const RewardModel& model, const World& world, const DyadicConfig& cfg,
                        NllDiagnostics* diag = nullptr);

struct CurvePoint {
    double queries = 0.0;
    double win_rate = 0.0;
};

struct MatchPoint {
    double ref_queries = 0.0;
    double ref_win_rate = 0.0;
    std::optional<double> alt_queries;  // empty when the alternative never reaches ref_win_rate
};

/// For every reference point, the number of queries the alternative needs to
/// reach the same win rate. Both curves are first replaced by their running
/// maxima; crossing points are linearly interpolated. ref_queries is the
/// first point at which the reference envelope reaches that win rate.
std::vector<MatchPoint> queries_to_match(std::span<const CurvePoint> reference, std::span<const CurvePoint> alternative);

}  // namespace prefex
