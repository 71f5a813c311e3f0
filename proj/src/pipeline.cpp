#include "prefex/pipeline.hpp"

#include <exception>
#include <string>
#include <utility>

#include "prefex/errors.hpp"

namespace prefex {

ModelKind parse_model_kind(std::string_view name) {
    if (name == "point") return ModelKind::point;
    if (name == "enn") return ModelKind::enn;
    throw ConfigError("unknown model kind '" + std::string(name) + "' (expected point or enn)");
}

std::string_view to_string(ModelKind kind) { return kind == ModelKind::point ? "point" : "enn"; }

Explorer parse_explorer(std::string_view name) {
    if (name == "passive") return Explorer::passive;
    if (name == "boltzmann") return Explorer::boltzmann;
    if (name == "greedy_boltzmann") return Explorer::greedy_boltzmann;
    if (name == "infomax") return Explorer::infomax;
    if (name == "double_ts") return Explorer::double_ts;
    throw ConfigError("unknown explorer '" + std::string(name) +
                      "' (expected passive, boltzmann, greedy_boltzmann, infomax or double_ts)");
}

std::string_view to_string(Explorer explorer) {
    switch (explorer) {
        case Explorer::passive: return "passive";
        case Explorer::boltzmann: return "boltzmann";
        case Explorer::greedy_boltzmann: return "greedy_boltzmann";
        case Explorer::infomax: return "infomax";
        case Explorer::double_ts: return "double_ts";
    }
    return "?";
}

void AgentSpec::validate() const {
    const bool needs_enn = explorer == Explorer::infomax || explorer == Explorer::double_ts;
    const bool needs_point = explorer == Explorer::boltzmann || explorer == Explorer::greedy_boltzmann;
    if (needs_enn && kind != ModelKind::enn)
        throw ConfigError("agent '" + name + "': explorer " + std::string(to_string(explorer)) +
                          " requires model = enn");
    if (needs_point && kind != ModelKind::point)
        throw ConfigError("agent '" + name + "': explorer " + std::string(to_string(explorer)) +
                          " requires model = point");
    if (!(tau > 0.0)) throw ConfigError("agent '" + name + "': tau must be positive");
    if (infomax_indices < 2) throw ConfigError("agent '" + name + "': infomax_indices must be at least 2");
    if (dts_attempts < 1) throw ConfigError("agent '" + name + "': dts_attempts must be at least 1");
    if (ensemble_size < 1) throw ConfigError("agent '" + name + "': ensemble_size must be positive");
    if (!(output_scale >= 0.0)) throw ConfigError("agent '" + name + "': output_scale must be nonnegative");
    for (std::size_t w : hidden)
        if (w == 0) throw ConfigError("agent '" + name + "': hidden widths must be positive");
    training.validate();
}

std::vector<std::size_t> AgentSpec::layer_sizes(std::size_t input_dim) const {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    return sizes;
}

void RunSettings::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (buffer_capacity < batch_size) throw ConfigError("buffer_capacity must be at least batch_size");
    if (assess_every < 1) throw ConfigError("assess_every must be at least 1");
    if (eval_prompts < 1) throw ConfigError("eval_prompts must be at least 1");
    if (metrics_every > 0) {
        if (metric_queries < 1) throw ConfigError("metric_queries must be at least 1");
        dyadic.validate();
    }
}

AgentState make_agent_state(const AgentSpec& spec, std::size_t input_dim, std::size_t buffer_capacity,
                            std::uint64_t seed) {
    spec.validate();
    const auto sizes = spec.layer_sizes(input_dim);
    const std::uint64_t model_seed = derive_seed({seed, stream_tag("model")});
    const AdamConfig adam_cfg{spec.training.learning_rate};
    if (spec.kind == ModelKind::point) {
        auto model = make_point_model(sizes, model_seed, spec.output_scale);
        std::vector<AdamState> adam{AdamState(model.params, adam_cfg)};
        return {RewardModel(std::move(model)), std::move(adam), ReplayBuffer(buffer_capacity)};
    }
    auto model = make_enn_model(sizes, spec.ensemble_size, model_seed, spec.output_scale);
    std::vector<AdamState> adam;
    for (const auto& p : model.particles()) adam.emplace_back(p, adam_cfg);
    return {RewardModel(std::move(model)), std::move(adam), ReplayBuffer(buffer_capacity)};
}

std::size_t best_of_n_response(const RewardModel& model, const PromptInstance& prompt) {
    if (model_input_dim(model) != prompt.candidates.at(0).size())
        throw ShapeError("reward model input dim does not match the world's embedding dim");
    return argmax_lowest(point_predictions(model, prompt.candidates, Exec::serial));
}

WinRateAssessor::WinRateAssessor(const World& world, std::size_t n_eval_prompts) {
    if (n_eval_prompts < 1) throw PreconditionError("assessment needs at least one eval prompt");
    prompts_.reserve(n_eval_prompts);
    scores_.reserve(n_eval_prompts);
    for (std::size_t k = 0; k < n_eval_prompts; ++k) {
        prompts_.push_back(world.generate_prompt(Split::eval, k));
        scores_.push_back(world.oracle_scores(prompts_.back().candidates));
    }
}

double WinRateAssessor::operator()(const RewardModel& model, Exec exec) const {
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(prompts_.size());
    std::vector<double> probs(prompts_.size());
    std::vector<std::exception_ptr> errors(prompts_.size());
#pragma omp parallel for schedule(static) if (exec == Exec::parallel && count > 1)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
        const auto i = static_cast<std::size_t>(k);
        try {
            const std::size_t chosen = best_of_n_response(model, prompts_[i]);
            probs[i] = preference_prob(scores_[i][chosen], scores_[i][0]);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    double sum = 0.0;
    for (double p : probs) sum += p;
    return sum / static_cast<double>(probs.size());
}

double WinRateAssessor::reference(const RewardModel& model) const {
    double sum = 0.0;
    for (std::size_t k = 0; k < prompts_.size(); ++k) {
        const std::size_t chosen = best_of_n_response(model, prompts_[k]);
        sum += preference_prob(scores_[k][chosen], scores_[k][0]);
    }
    return sum / static_cast<double>(prompts_.size());
}

double assess_win_rate(const RewardModel& model, const World& world, std::size_t n_eval_prompts) {
    return WinRateAssessor(world, n_eval_prompts)(model, Exec::serial);
}

namespace {

struct Selected {
    PreferenceExample example;
    SelectionDiagnostics diag;
};

SelectionResult select_pair(const AgentSpec& agent, const RewardModel& model, const PromptInstance& prompt,
                            Rng& rng, SelectionDiagnostics& diag) {
    const std::size_t n = prompt.candidates.size();
    switch (agent.explorer) {
        case Explorer::passive: return passive_select(n, rng);
        case Explorer::boltzmann:
            return boltzmann_select(point_predictions(model, prompt.candidates), agent.tau, rng);
        case Explorer::greedy_boltzmann:
            return greedy_boltzmann_select(point_predictions(model, prompt.candidates), agent.tau, rng);
        case Explorer::infomax:
            return infomax_select(ensemble_rewards(std::get<EnnRewardModel>(model).particles(), prompt.candidates,
                                                   Exec::serial),
                                  agent.infomax_indices, rng, agent.pref_mode, &diag);
        case Explorer::double_ts:
            return double_ts_select(ensemble_rewards(std::get<EnnRewardModel>(model).particles(), prompt.candidates,
                                                     Exec::serial),
                                    agent.dts_attempts, rng, &diag);
    }
    throw ConfigError("unhandled explorer");
}

Selected query_and_feedback(const AgentSpec& agent, const World& world, const RewardModel& model,
                            std::uint64_t seed, std::size_t epoch, std::size_t slot, std::size_t batch_size) {
    const std::uint64_t position = static_cast<std::uint64_t>(epoch - 1) * batch_size + slot;
    const PromptInstance prompt = world.generate_prompt(Split::train, position);
    Rng select_rng = make_rng({seed, stream_tag("select"), epoch, slot});
    Rng feedback_rng = make_rng({seed, stream_tag("feedback"), epoch, slot});

    Selected out;
    const SelectionResult pair = select_pair(agent, model, prompt, select_rng, out.diag);
    const auto& ya = prompt.candidates[pair.first];
    const auto& yb = prompt.candidates[pair.second];
    const double p = preference_prob(world.oracle_score(ya), world.oracle_score(yb));
    out.example = {prompt.prompt_id, ya, yb, sample_feedback(p, feedback_rng)};
    return out;
}

void train(AgentState& state, const AgentSpec& agent, const RunSettings& settings, std::uint64_t seed,
           std::size_t epoch) {
    Rng rng = make_rng({seed, agent.training.rng_seed, stream_tag("train"), epoch});
    if (auto* point = std::get_if<PointRewardModel>(&state.model))
        train_epoch(*point, state.buffer, agent.training, state.adam.at(0), rng);
    else
        train_epoch(std::get<EnnRewardModel>(state.model), state.buffer, agent.training, state.adam, rng,
                    settings.exec);
}

}  // namespace

std::vector<EpochRecord> run_learning(const AgentSpec& agent, const World& world, const RunSettings& settings,
                                      std::uint64_t seed, const std::function<void(const EpochRecord&)>& on_record,
                                      AgentState* final_state) {
    agent.validate();
    settings.validate();
    const std::size_t dim = world.config().dim;
    AgentState state = make_agent_state(agent, dim, settings.buffer_capacity, seed);
    const WinRateAssessor assessor(world, settings.eval_prompts);

    std::vector<EvalQuery> marginal_pool;
    std::vector<EvalQuery> dyadic_pool;
    if (settings.metrics_every > 0) {
        marginal_pool = make_eval_queries(world, settings.metric_queries, 1'000'000);
        dyadic_pool = make_eval_queries(world, 2 * settings.dyadic.n_anchor_pairs, 2'000'000);
    }

    std::vector<EpochRecord> records;
    EpochRecord pending;
    const std::size_t b_count = settings.batch_size;
    std::vector<Selected> batch(b_count);
    std::vector<std::exception_ptr> errors(b_count);

    for (std::size_t t = 1; t <= settings.epochs; ++t) {
        try {
            const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(b_count);
#pragma omp parallel for schedule(static) if (settings.exec == Exec::parallel && count > 1)
            for (std::ptrdiff_t b = 0; b < count; ++b) {
                const auto i = static_cast<std::size_t>(b);
                try {
                    batch[i] = query_and_feedback(agent, world, state.model, seed, t, i, b_count);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
            for (auto& e : errors)
                if (e) std::rethrow_exception(std::exchange(e, nullptr));

            for (auto& s : batch) {
                pending.zero_variance_count += s.diag.zero_variance ? 1 : 0;
                pending.fallback_count += s.diag.fallback ? 1 : 0;
                state.buffer.push(std::move(s.example));
            }
            if (settings.train) train(state, agent, settings, seed, t);

            if (t % settings.assess_every == 0 || t == settings.epochs) {
                pending.epoch = t;
                pending.queries = static_cast<std::uint64_t>(t) * b_count;
                pending.win_rate = assessor(state.model, settings.exec);
                if (settings.metrics_every > 0 && (t % settings.metrics_every == 0 || t == settings.epochs)) {
                    NllDiagnostics diag;
                    Rng label_rng = make_rng({settings.dyadic.rng_seed, stream_tag("marginal")});
                    pending.marginal_nll = marginal_nll(state.model, marginal_pool, label_rng, &diag);
                    pending.dyadic_joint_nll = dyadic_joint_nll(state.model, dyadic_pool, settings.dyadic, &diag);
                    pending.nll_clamp_events = diag.clamp_events;
                }
                records.push_back(pending);
                if (on_record) on_record(pending);
                pending = EpochRecord{};
            }
        } catch (const NumericalError& e) {
            throw NumericalError("epoch " + std::to_string(t) + ": " + e.what());
        }
    }
    if (final_state) *final_state = std::move(state);
    return records;
}

}  // namespace prefex
