#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "prefex/adam.hpp"
#include "prefex/kernels.hpp"
#include "prefex/mlp.hpp"
#include "prefex/rng.hpp"

namespace prefex {

// One answered query. c == 0 means the response behind emb_a was preferred.
struct PreferenceExample {
    std::uint64_t prompt_id = 0;
    Embedding emb_a;
    Embedding emb_b;
    int c = 0;

    friend bool operator==(const PreferenceExample&, const PreferenceExample&) = default;
};

void validate_example(const PreferenceExample& ex);

struct PointRewardModel {
    MlpParams params;

    friend bool operator==(const PointRewardModel&, const PointRewardModel&) = default;
};

/// Ensemble reward model. Particle z is one independently initialised MLP;
/// the epistemic index is uniform over particles. A frozen copy of the
/// initial particles anchors the regularizer.
class EnnRewardModel {
public:
    EnnRewardModel() = default;
    explicit EnnRewardModel(std::vector<MlpParams> particles);
    // Restore with explicit anchors (checkpoint reload).
    EnnRewardModel(std::vector<MlpParams> particles, std::vector<MlpParams> initial_particles);

    std::size_t ensemble_size() const noexcept { return particles_.size(); }
    std::size_t input_dim() const noexcept { return particles_.empty() ? 0 : particles_[0].input_dim(); }

    // Index z is 0-based. Throws ConfigError when out of range.
    const MlpParams& particle(std::size_t z) const;
    MlpParams& particle(std::size_t z);
    const MlpParams& initial_particle(std::size_t z) const;

    std::span<const MlpParams> particles() const noexcept { return particles_; }
    std::span<const MlpParams> initial_particles() const noexcept { return initial_; }

    friend bool operator==(const EnnRewardModel&, const EnnRewardModel&) = default;

private:
    std::vector<MlpParams> particles_;
    std::vector<MlpParams> initial_;
};

PointRewardModel make_point_model(std::vector<std::size_t> layer_sizes, std::uint64_t seed,
                                  double output_scale);
EnnRewardModel make_enn_model(std::vector<std::size_t> layer_sizes, std::size_t ensemble_size,
                              std::uint64_t seed, double output_scale);

// Negative Bradley-Terry log-likelihood of choice c given rewards R (first
// response) and R_prime (second).
double ce(double r, double r_prime, int c);
// Partial derivatives of ce with respect to (R, R_prime).
std::pair<double, double> ce_grad(double r, double r_prime, int c);

double reward_point(const PointRewardModel& model, std::span<const double> emb);
double reward_enn(const EnnRewardModel& model, std::size_t z, std::span<const double> emb);
// Average of particle rewards; the ensemble's point prediction.
double reward_mean(const EnnRewardModel& model, std::span<const double> emb);

enum class EnnRegularizer { unsquared_l2, squared_l2 };

// sum ce + lambda * ||theta||^2
double point_loss(const PointRewardModel& model, std::span<const PreferenceExample> data, double lambda);
// lambda * sum_s ||theta_s - theta~_s|| + (1/S) sum_s sum_data ce
double enn_loss(const EnnRewardModel& model, std::span<const PreferenceExample> data, double lambda,
                EnnRegularizer reg = EnnRegularizer::unsquared_l2);

/// FIFO store of the most recent `capacity` examples. Also counts every
/// example ever inserted, which drives the regularization decay.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(PreferenceExample ex);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::uint64_t total_inserted() const noexcept { return total_inserted_; }
    void set_total_inserted(std::uint64_t n) { total_inserted_ = n; }

    const PreferenceExample& operator[](std::size_t i) const { return entries_[i]; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::size_t capacity_;
    std::uint64_t total_inserted_ = 0;
    std::deque<PreferenceExample> entries_;
};

struct TrainingConfig {
    double learning_rate = 1e-3;
    double lambda_prime = 1.0;
    std::size_t sgd_steps_per_epoch = 10;
    std::size_t minibatch_size = 32;
    std::uint64_t rng_seed = 0;
    EnnRegularizer enn_regularizer = EnnRegularizer::unsquared_l2;

    void validate() const;

    friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

// lambda = minibatch_size * lambda' / |D|, |D| = all feedback received so far.
double decayed_lambda(const TrainingConfig& cfg, std::uint64_t total_feedback);

// Runs cfg.sgd_steps_per_epoch Adam steps on minibatches drawn uniformly with
// replacement from the buffer. The data term is mean-reduced over the batch.
void train_epoch(PointRewardModel& model, const ReplayBuffer& buffer, const TrainingConfig& cfg,
                 AdamState& adam, Rng& rng);

// All particles see the same minibatch each step; particles are updated
// independently (in parallel when exec == Exec::parallel). `adam` holds one
// state per particle.
void train_epoch(EnnRewardModel& model, const ReplayBuffer& buffer, const TrainingConfig& cfg,
                 std::vector<AdamState>& adam, Rng& rng, Exec exec = Exec::parallel);

using RewardModel = std::variant<PointRewardModel, EnnRewardModel>;

inline bool is_ensemble(const RewardModel& m) { return std::holds_alternative<EnnRewardModel>(m); }
std::size_t model_input_dim(const RewardModel& m);

// Point reward (mean over particles for an ensemble) for each input.
std::vector<double> point_predictions(const RewardModel& m, std::span<const Embedding> inputs,
                                      Exec exec = Exec::serial);

}  // namespace prefex
