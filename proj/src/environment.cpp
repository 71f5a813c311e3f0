#include "prefex/environment.hpp"

#include <cmath>
#include <random>
#include <string>

#include "prefex/errors.hpp"
#include "prefex/kernels.hpp"

namespace prefex {

void WorldConfig::validate() const {
    if (dim == 0) throw ConfigError("world dim must be positive");
    if (candidates < 2) throw ConfigError("world needs at least two candidates per prompt");
    if (!(spread >= 0.0) || !std::isfinite(spread)) throw ConfigError("spread must be finite and nonnegative");
    if (!(teacher_gain > 0.0)) throw ConfigError("teacher_gain must be positive");
    if (!(teacher_output_scale > 0.0)) throw ConfigError("teacher_output_scale must be positive");
    if (train_seed == eval_seed) throw ConfigError("train and eval prompt seeds must differ");
    validate_layer_sizes(teacher_layer_sizes());
}

std::vector<std::size_t> WorldConfig::teacher_layer_sizes() const {
    std::vector<std::size_t> sizes{dim};
    sizes.insert(sizes.end(), teacher_hidden.begin(), teacher_hidden.end());
    sizes.push_back(1);
    return sizes;
}

World::World(WorldConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    teacher_ = mlp_init(cfg_.teacher_layer_sizes(), cfg_.teacher_seed, cfg_.teacher_output_scale);
    for (std::size_t l = 0; l + 1 < teacher_.num_layers(); ++l)
        for (double& w : teacher_.weights(l)) w *= cfg_.teacher_gain;
}

World::World(WorldConfig cfg, MlpParams teacher) : cfg_(std::move(cfg)), teacher_(std::move(teacher)) {
    cfg_.validate();
    if (teacher_.layer_sizes() != cfg_.teacher_layer_sizes())
        throw ShapeError("teacher checkpoint does not match the world's teacher topology");
}

namespace {

void normalize(Embedding& e) {
    const double norm = std::sqrt(squared_norm(e));
    if (norm > 0.0)
        for (double& x : e) x /= norm;
}

}  // namespace

PromptInstance World::generate_prompt(Split split, std::uint64_t position) const {
    const bool eval = split == Split::eval;
    if (position & kEvalIdBit) throw ConfigError("prompt position out of range");
    Rng rng = make_rng({eval ? cfg_.eval_seed : cfg_.train_seed, stream_tag(eval ? "eval" : "train"), position});
    std::normal_distribution<double> normal(0.0, 1.0);

    PromptInstance p;
    p.prompt_id = eval ? (position | kEvalIdBit) : position;
    p.context.resize(cfg_.dim);
    for (double& x : p.context) x = normal(rng);
    p.candidates.resize(cfg_.candidates);
    for (auto& e : p.candidates) {
        e = p.context;
        for (double& x : e) x += cfg_.spread * normal(rng);
        normalize(e);
    }
    return p;
}

double World::oracle_score(std::span<const double> emb) const { return mlp_forward(teacher_, emb); }

std::vector<double> World::oracle_scores(std::span<const Embedding> embs) const {
    return forward_batch(teacher_, embs, Exec::serial);
}

double preference_prob(double score_a, double score_b) {
    const double d = score_a - score_b;
    if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
    const double e = std::exp(d);
    return e / (1.0 + e);
}

int sample_feedback(double prob, Rng& rng) {
    if (!(prob >= 0.0 && prob <= 1.0))
        throw PreconditionError("feedback probability outside [0, 1]: " + std::to_string(prob));
    return uniform01(rng) < prob ? 0 : 1;
}

AgreementStats repeat_label_agreement(std::span<const double> probs) {
    if (probs.empty()) throw PreconditionError("repeat_label_agreement needs at least one query");
    std::vector<double> agree;
    agree.reserve(probs.size());
    double mean = 0.0;
    for (double p : probs) {
        agree.push_back(p * p + (1.0 - p) * (1.0 - p));
        mean += agree.back();
    }
    mean /= static_cast<double>(agree.size());
    double var = 0.0;
    for (double a : agree) var += (a - mean) * (a - mean);
    var /= static_cast<double>(agree.size());
    return {mean, std::sqrt(var)};
}

AgreementStats repeat_label_agreement(const World& world, std::span<const PromptInstance> prompts) {
    std::vector<double> probs;
    probs.reserve(prompts.size());
    for (const auto& p : prompts) {
        if (p.candidates.size() < 2) throw PreconditionError("prompt has fewer than two candidates");
        probs.push_back(preference_prob(world.oracle_score(p.candidates[0]), world.oracle_score(p.candidates[1])));
    }
    return repeat_label_agreement(probs);
}

}  // namespace prefex
