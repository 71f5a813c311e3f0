#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prefex/environment.hpp"
#include "prefex/evaluation.hpp"
#include "prefex/exploration.hpp"
#include "prefex/kernels.hpp"
#include "prefex/reward_models.hpp"

namespace prefex {

enum class ModelKind { point, enn };
enum class Explorer { passive, boltzmann, greedy_boltzmann, infomax, double_ts };

ModelKind parse_model_kind(std::string_view name);
std::string_view to_string(ModelKind kind);
Explorer parse_explorer(std::string_view name);
std::string_view to_string(Explorer explorer);

/// An agent: reward model architecture, exploration rule and trainer settings.
struct AgentSpec {
    std::string name = "agent";
    ModelKind kind = ModelKind::point;
    Explorer explorer = Explorer::passive;
    double tau = 0.1;                   // Boltzmann temperature
    std::size_t infomax_indices = 30;   // M
    std::size_t dts_attempts = 30;      // K
    PrefMode pref_mode = PrefMode::logistic;
    std::vector<std::size_t> hidden{32, 32};
    std::size_t ensemble_size = 10;     // S, ensembles only
    double output_scale = 1.0;
    TrainingConfig training;

    // Rejects infomax/double TS without an ensemble and Boltzmann variants
    // with one, plus any out-of-range hyperparameter.
    void validate() const;
    std::vector<std::size_t> layer_sizes(std::size_t input_dim) const;

    friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

struct RunSettings {
    std::size_t batch_size = 16;        // B
    std::size_t epochs = 300;           // T
    std::size_t buffer_capacity = 1600; // C
    std::size_t assess_every = 5;
    std::size_t eval_prompts = 256;
    std::size_t metrics_every = 0;      // 0 disables NLL metrics
    std::size_t metric_queries = 500;
    DyadicConfig dyadic;
    bool train = true;
    Exec exec = Exec::parallel;

    void validate() const;

    friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::uint64_t queries = 0;
    double win_rate = 0.0;
    std::optional<double> marginal_nll;
    std::optional<double> dyadic_joint_nll;
    // Selector diagnostics accumulated since the previous record.
    std::size_t zero_variance_count = 0;
    std::size_t fallback_count = 0;
    std::size_t nll_clamp_events = 0;
};

// Everything that evolves during learning.
struct AgentState {
    RewardModel model;
    std::vector<AdamState> adam;  // one per particle, or one for a point model
    ReplayBuffer buffer;
};

AgentState make_agent_state(const AgentSpec& spec, std::size_t input_dim, std::size_t buffer_capacity,
                            std::uint64_t seed);

// Index of the candidate with the highest point reward (particle mean for an
// ensemble); lowest index on ties.
std::size_t best_of_n_response(const RewardModel& model, const PromptInstance& prompt);

/// Best-of-N win rate against the first candidate, averaged over a fixed set
/// of eval prompts. Prompts and their oracle scores are generated once.
class WinRateAssessor {
public:
    WinRateAssessor(const World& world, std::size_t n_eval_prompts);

    double operator()(const RewardModel& model, Exec exec = Exec::parallel) const;
    // Serial reference: one best_of_n_response call per prompt.
    double reference(const RewardModel& model) const;

    std::span<const PromptInstance> prompts() const noexcept { return prompts_; }

private:
    std::vector<PromptInstance> prompts_;
    std::vector<std::vector<double>> scores_;
};

double assess_win_rate(const RewardModel& model, const World& world, std::size_t n_eval_prompts);

/// Sequential learning loop. Each epoch draws B train prompts, selects a pair
/// per prompt with the current model, samples Bradley-Terry feedback, appends
/// to the buffer and trains. Records are emitted every assess_every epochs and
/// at the last epoch; on_record sees each one as soon as it exists.
std::vector<EpochRecord> run_learning(const AgentSpec& agent, const World& world, const RunSettings& settings,
                                      std::uint64_t seed,
                                      const std::function<void(const EpochRecord&)>& on_record = {},
                                      AgentState* final_state = nullptr);

}  // namespace prefex
