#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "prefex/exploration.hpp"
#include "prefex/mlp.hpp"
#include "prefex/rng.hpp"

namespace prefex {

enum class Split { train, eval };

// Eval prompt ids carry this bit; train ids never do.
inline constexpr std::uint64_t kEvalIdBit = 1ULL << 63;

struct WorldConfig {
    std::size_t dim = 16;
    std::size_t candidates = 20;
    double spread = 0.5;  // gamma: candidate noise around the prompt context
    std::vector<std::size_t> teacher_hidden{128, 128};
    double teacher_gain = 1.0;          // multiplies hidden-layer weights of the teacher at init
    double teacher_output_scale = 1.0;  // multiplies the teacher's output layer at init
    std::uint64_t teacher_seed = 1;
    std::uint64_t train_seed = 2;
    std::uint64_t eval_seed = 3;

    void validate() const;
    std::vector<std::size_t> teacher_layer_sizes() const;

    friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

struct PromptInstance {
    std::uint64_t prompt_id = 0;
    Embedding context;
    std::vector<Embedding> candidates;

    CandidateSet candidate_set() const { return {prompt_id, candidates}; }
};

/// Synthetic environment: a prompt/candidate generator and a frozen teacher
/// network whose scores drive Bradley-Terry choices.
class World {
public:
    explicit World(WorldConfig cfg);
    // Reload with a persisted teacher.
    World(WorldConfig cfg, MlpParams teacher);

    const WorldConfig& config() const noexcept { return cfg_; }
    const MlpParams& teacher() const noexcept { return teacher_; }

    // Deterministic in (split, position, split seed). Candidates are
    // normalize(u + spread * v_n) with u, v_n standard normal.
    PromptInstance generate_prompt(Split split, std::uint64_t position) const;

    double oracle_score(std::span<const double> emb) const;
    std::vector<double> oracle_scores(std::span<const Embedding> embs) const;

private:
    WorldConfig cfg_;
    MlpParams teacher_;
};

// Probability that the response scored score_a is preferred over score_b.
double preference_prob(double score_a, double score_b);

// 0 (first response preferred) with probability prob, else 1.
int sample_feedback(double prob, Rng& rng);

struct AgreementStats {
    double mean = 0.0;
    double stddev = 0.0;
};

// Mean and (population) standard deviation of p^2 + (1-p)^2 over queries.
AgreementStats repeat_label_agreement(std::span<const double> probs);
// Uses each prompt's first two candidates as the query.
AgreementStats repeat_label_agreement(const World& world, std::span<const PromptInstance> prompts);

}  // namespace prefex
