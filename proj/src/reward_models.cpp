#include "prefex/reward_models.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

#include "prefex/errors.hpp"

namespace prefex {

void validate_example(const PreferenceExample& ex) {
    if (ex.emb_a.size() != ex.emb_b.size())
        throw ShapeError("preference example embeddings differ in length");
    if (ex.c != 0 && ex.c != 1) throw PreconditionError("preference bit must be 0 or 1");
}

EnnRewardModel::EnnRewardModel(std::vector<MlpParams> particles)
    : particles_(std::move(particles)), initial_(particles_) {
    if (particles_.empty()) throw ConfigError("ensemble needs at least one particle");
    for (const auto& p : particles_)
        if (!p.same_shape(particles_[0])) throw ShapeError("ensemble particles differ in shape");
}

EnnRewardModel::EnnRewardModel(std::vector<MlpParams> particles, std::vector<MlpParams> initial_particles)
    : particles_(std::move(particles)), initial_(std::move(initial_particles)) {
    if (particles_.empty()) throw ConfigError("ensemble needs at least one particle");
    if (particles_.size() != initial_.size())
        throw ShapeError("ensemble particles and anchors differ in count");
    for (std::size_t s = 0; s < particles_.size(); ++s)
        if (!particles_[s].same_shape(particles_[0]) || !initial_[s].same_shape(particles_[0]))
            throw ShapeError("ensemble particles differ in shape");
}

const MlpParams& EnnRewardModel::particle(std::size_t z) const {
    if (z >= particles_.size())
        throw ConfigError("epistemic index " + std::to_string(z) + " out of range for ensemble of " +
                          std::to_string(particles_.size()));
    return particles_[z];
}

MlpParams& EnnRewardModel::particle(std::size_t z) {
    return const_cast<MlpParams&>(std::as_const(*this).particle(z));
}

const MlpParams& EnnRewardModel::initial_particle(std::size_t z) const {
    if (z >= initial_.size()) throw ConfigError("epistemic index out of range");
    return initial_[z];
}

PointRewardModel make_point_model(std::vector<std::size_t> layer_sizes, std::uint64_t seed,
                                  double output_scale) {
    return PointRewardModel{mlp_init(std::move(layer_sizes), seed, output_scale)};
}

EnnRewardModel make_enn_model(std::vector<std::size_t> layer_sizes, std::size_t ensemble_size,
                              std::uint64_t seed, double output_scale) {
    if (ensemble_size == 0) throw ConfigError("ensemble size must be positive");
    std::vector<MlpParams> particles;
    particles.reserve(ensemble_size);
    for (std::size_t s = 0; s < ensemble_size; ++s)
        particles.push_back(mlp_init(layer_sizes, derive_seed({seed, stream_tag("particle"), s}), output_scale));
    return EnnRewardModel(std::move(particles));
}

namespace {

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// log(1 + e^d) with d = other - chosen; stays accurate when the loss is tiny.
double ce(double r, double r_prime, int c) {
    const double d = c == 0 ? r_prime - r : r - r_prime;
    return std::max(d, 0.0) + std::log1p(std::exp(-std::abs(d)));
}

std::pair<double, double> ce_grad(double r, double r_prime, int c) {
    const double p_first = sigmoid(r - r_prime);
    return {p_first - (1 - c), (1.0 - p_first) - c};
}

double reward_point(const PointRewardModel& model, std::span<const double> emb) {
    return mlp_forward(model.params, emb);
}

double reward_enn(const EnnRewardModel& model, std::size_t z, std::span<const double> emb) {
    return mlp_forward(model.particle(z), emb);
}

double reward_mean(const EnnRewardModel& model, std::span<const double> emb) {
    double sum = 0.0;
    for (const auto& p : model.particles()) sum += mlp_forward(p, emb);
    return sum / static_cast<double>(model.ensemble_size());
}

double point_loss(const PointRewardModel& model, std::span<const PreferenceExample> data, double lambda) {
    if (data.empty()) throw PreconditionError("point_loss needs data");
    double loss = 0.0;
    for (const auto& ex : data) {
        validate_example(ex);
        loss += ce(mlp_forward(model.params, ex.emb_a), mlp_forward(model.params, ex.emb_b), ex.c);
    }
    return loss + lambda * squared_norm(model.params.values());
}

double enn_loss(const EnnRewardModel& model, std::span<const PreferenceExample> data, double lambda,
                EnnRegularizer reg) {
    if (data.empty()) throw PreconditionError("enn_loss needs data");
    double data_term = 0.0;
    double reg_term = 0.0;
    for (std::size_t s = 0; s < model.ensemble_size(); ++s) {
        const auto& p = model.particle(s);
        double particle_sum = 0.0;
        for (const auto& ex : data) {
            validate_example(ex);
            particle_sum += ce(mlp_forward(p, ex.emb_a), mlp_forward(p, ex.emb_b), ex.c);
        }
        data_term += particle_sum;
        const double dist = param_distance(p, model.initial_particle(s));
        reg_term += reg == EnnRegularizer::unsquared_l2 ? dist : dist * dist;
    }
    return lambda * reg_term + data_term / static_cast<double>(model.ensemble_size());
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(PreferenceExample ex) {
    validate_example(ex);
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back(std::move(ex));
    ++total_inserted_;
}

void TrainingConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be a finite nonnegative number");
    if (!(lambda_prime >= 0.0) || !std::isfinite(lambda_prime))
        throw ConfigError("lambda_prime must be a finite nonnegative number");
    if (minibatch_size == 0) throw ConfigError("minibatch_size must be positive");
}

double decayed_lambda(const TrainingConfig& cfg, std::uint64_t total_feedback) {
    if (total_feedback == 0) throw PreconditionError("decayed_lambda: no feedback received yet");
    return static_cast<double>(cfg.minibatch_size) * cfg.lambda_prime / static_cast<double>(total_feedback);
}

namespace {

std::vector<const PreferenceExample*> sample_minibatch(const ReplayBuffer& buffer, std::size_t size, Rng& rng) {
    const std::size_t b = std::min(size, buffer.size());
    std::vector<const PreferenceExample*> batch(b);
    for (auto& slot : batch) slot = &buffer[uniform_index(rng, buffer.size())];
    return batch;
}

// Adds data_scale * d/dtheta sum_batch ce(...) into grad.
void accumulate_ce_grad(const MlpParams& params, std::span<const PreferenceExample* const> batch,
                        double data_scale, MlpParams& grad, MlpTape& tape_a, MlpTape& tape_b) {
    for (const PreferenceExample* ex : batch) {
        const double ra = tape_a.forward(params, ex->emb_a);
        const double rb = tape_b.forward(params, ex->emb_b);
        const auto [ga, gb] = ce_grad(ra, rb, ex->c);
        tape_a.backward(params, data_scale * ga, grad);
        tape_b.backward(params, data_scale * gb, grad);
    }
}

void particle_step(MlpParams& params, const MlpParams& anchor, std::span<const PreferenceExample* const> batch,
                   double data_scale, double lambda, EnnRegularizer reg, AdamState& adam) {
    MlpParams grad(params.layer_sizes());
    MlpTape tape_a;
    MlpTape tape_b;
    accumulate_ce_grad(params, batch, data_scale, grad, tape_a, tape_b);
    auto g = grad.values();
    auto p = params.values();
    auto p0 = anchor.values();
    if (reg == EnnRegularizer::squared_l2) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * lambda * (p[i] - p0[i]);
    } else {
        const double dist = param_distance(params, anchor);
        // Subgradient zero at the anchor.
        if (dist > 0.0)
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += lambda * (p[i] - p0[i]) / dist;
    }
    adam_step(adam, params, grad);
}

}  // namespace

void train_epoch(PointRewardModel& model, const ReplayBuffer& buffer, const TrainingConfig& cfg,
                 AdamState& adam, Rng& rng) {
    cfg.validate();
    if (buffer.empty()) throw PreconditionError("train_epoch: replay buffer is empty");
    const double lambda = decayed_lambda(cfg, buffer.total_inserted());
    MlpTape tape_a;
    MlpTape tape_b;
    for (std::size_t step = 0; step < cfg.sgd_steps_per_epoch; ++step) {
        const auto batch = sample_minibatch(buffer, cfg.minibatch_size, rng);
        MlpParams grad(model.params.layer_sizes());
        accumulate_ce_grad(model.params, batch, 1.0 / static_cast<double>(batch.size()), grad, tape_a, tape_b);
        auto g = grad.values();
        auto p = model.params.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * lambda * p[i];
        adam_step(adam, model.params, grad);
    }
}

void train_epoch(EnnRewardModel& model, const ReplayBuffer& buffer, const TrainingConfig& cfg,
                 std::vector<AdamState>& adam, Rng& rng, Exec exec) {
    cfg.validate();
    if (buffer.empty()) throw PreconditionError("train_epoch: replay buffer is empty");
    if (adam.size() != model.ensemble_size()) throw ShapeError("one Adam state per particle required");
    const double lambda = decayed_lambda(cfg, buffer.total_inserted());
    const std::ptrdiff_t particles = static_cast<std::ptrdiff_t>(model.ensemble_size());
    std::vector<std::exception_ptr> errors(model.ensemble_size());
    for (std::size_t step = 0; step < cfg.sgd_steps_per_epoch; ++step) {
        const auto batch = sample_minibatch(buffer, cfg.minibatch_size, rng);
        const double data_scale = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(particles));
#pragma omp parallel for schedule(static) if (exec == Exec::parallel && particles > 1)
        for (std::ptrdiff_t s = 0; s < particles; ++s) {
            const auto z = static_cast<std::size_t>(s);
            try {
                particle_step(model.particle(z), model.initial_particle(z), batch, data_scale, lambda,
                              cfg.enn_regularizer, adam[z]);
            } catch (...) {
                errors[z] = std::current_exception();
            }
        }
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
}

std::size_t model_input_dim(const RewardModel& m) {
    if (const auto* p = std::get_if<PointRewardModel>(&m)) return p->params.input_dim();
    return std::get<EnnRewardModel>(m).input_dim();
}

std::vector<double> point_predictions(const RewardModel& m, std::span<const Embedding> inputs, Exec exec) {
    if (const auto* p = std::get_if<PointRewardModel>(&m)) return forward_batch(p->params, inputs, exec);
    const auto& enn = std::get<EnnRewardModel>(m);
    const Matrix r = ensemble_rewards(enn.particles(), inputs, exec);
    std::vector<double> mean(inputs.size(), 0.0);
    for (std::size_t s = 0; s < r.rows; ++s)
        for (std::size_t n = 0; n < r.cols; ++n) mean[n] += r(s, n);
    for (double& v : mean) v /= static_cast<double>(r.rows);
    return mean;
}

}  // namespace prefex
