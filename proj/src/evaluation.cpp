#include "prefex/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prefex/errors.hpp"

namespace prefex {

std::vector<EvalQuery> make_eval_queries(const World& world, std::size_t count, std::uint64_t offset) {
    std::vector<EvalQuery> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        auto p = world.generate_prompt(Split::eval, offset + k);
        const double sa = world.oracle_score(p.candidates[0]);
        const double sb = world.oracle_score(p.candidates[1]);
        out.push_back({std::move(p.candidates[0]), std::move(p.candidates[1]), preference_prob(sa, sb)});
    }
    return out;
}

std::vector<double> particle_probs(const RewardModel& model, const EvalQuery& q) {
    if (const auto* point = std::get_if<PointRewardModel>(&model))
        return {preference_prob(mlp_forward(point->params, q.emb_a), mlp_forward(point->params, q.emb_b))};
    const auto& enn = std::get<EnnRewardModel>(model);
    std::vector<double> probs;
    probs.reserve(enn.ensemble_size());
    for (const auto& p : enn.particles())
        probs.push_back(preference_prob(mlp_forward(p, q.emb_a), mlp_forward(p, q.emb_b)));
    return probs;
}

double predictive_prob(const RewardModel& model, const EvalQuery& q) {
    const auto probs = particle_probs(model, q);
    double sum = 0.0;
    for (double p : probs) sum += p;
    return sum / static_cast<double>(probs.size());
}

std::vector<int> draw_labels(std::span<const EvalQuery> queries, Rng& rng) {
    std::vector<int> labels;
    labels.reserve(queries.size());
    for (const auto& q : queries) labels.push_back(sample_feedback(q.true_prob, rng));
    return labels;
}

namespace {

double clamp_prob(double p, NllDiagnostics* diag) {
    const double c = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    if (c != p && diag) ++diag->clamp_events;
    return c;
}

double log_mean_exp(std::span<const double> logs) {
    const double hi = *std::max_element(logs.begin(), logs.end());
    if (!std::isfinite(hi)) return hi;
    double sum = 0.0;
    for (double l : logs) sum += std::exp(l - hi);
    return hi + std::log(sum / static_cast<double>(logs.size()));
}

// probs[q][s] for every pool query and particle.
std::vector<std::vector<double>> pool_particle_probs(const RewardModel& model, std::span<const EvalQuery> pool) {
    std::vector<std::vector<double>> out;
    out.reserve(pool.size());
    for (const auto& q : pool) out.push_back(particle_probs(model, q));
    return out;
}

double sequence_log_likelihood(const std::vector<std::vector<double>>& probs, const DyadicSample& sample,
                               NllDiagnostics* diag) {
    if (sample.queries.size() != sample.labels.size() || sample.queries.empty())
        throw ShapeError("dyadic sample has mismatched or empty query/label lists");
    const std::size_t particles = probs.at(sample.queries[0]).size();
    std::vector<double> logs(particles, 0.0);
    for (std::size_t t = 0; t < sample.queries.size(); ++t) {
        const auto& pq = probs.at(sample.queries[t]);
        for (std::size_t s = 0; s < particles; ++s) {
            const double p_first = clamp_prob(pq[s], diag);
            logs[s] += std::log(sample.labels[t] == 0 ? p_first : 1.0 - p_first);
        }
    }
    return log_mean_exp(logs);
}

std::pair<std::size_t, std::size_t> draw_anchor_pair(std::size_t pool_size, Rng& rng) {
    if (pool_size == 1) return {0, 0};
    const std::size_t a = uniform_index(rng, pool_size);
    std::size_t b = uniform_index(rng, pool_size - 1);
    if (b >= a) ++b;
    return {a, b};
}

}  // namespace

double marginal_nll(const RewardModel& model, std::span<const EvalQuery> queries, std::span<const int> labels,
                    NllDiagnostics* diag) {
    if (queries.empty()) throw PreconditionError("marginal_nll needs at least one query");
    if (queries.size() != labels.size()) throw ShapeError("marginal_nll: queries and labels differ in length");
    double total = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const double p_first = clamp_prob(predictive_prob(model, queries[i]), diag);
        total -= std::log(labels[i] == 0 ? p_first : 1.0 - p_first);
    }
    return total / static_cast<double>(queries.size());
}

double marginal_nll(const RewardModel& model, std::span<const EvalQuery> queries, Rng& rng, NllDiagnostics* diag) {
    const auto labels = draw_labels(queries, rng);
    return marginal_nll(model, queries, labels, diag);
}

void DyadicConfig::validate() const {
    if (tau_len == 0 || n_anchor_pairs == 0 || n_label_draws == 0)
        throw ConfigError("dyadic config: tau_len, anchor pairs and label draws must be positive");
}

DyadicLabelMode parse_label_mode(std::string_view name) {
    if (name == "sampled") return DyadicLabelMode::sampled;
    if (name == "exact") return DyadicLabelMode::exact;
    throw ConfigError("unknown dyadic label mode '" + std::string(name) + "' (expected sampled or exact)");
}

std::string_view to_string(DyadicLabelMode mode) { return mode == DyadicLabelMode::sampled ? "sampled" : "exact"; }

std::vector<DyadicSample> draw_dyadic_samples(std::span<const EvalQuery> pool, const DyadicConfig& cfg) {
    cfg.validate();
    if (pool.empty()) throw PreconditionError("dyadic sampling needs a nonempty query pool");
    Rng rng = make_rng({cfg.rng_seed, stream_tag("dyadic")});
    std::vector<DyadicSample> samples;
    samples.reserve(cfg.n_anchor_pairs * cfg.n_label_draws);
    for (std::size_t a = 0; a < cfg.n_anchor_pairs; ++a) {
        const auto [q1, q2] = draw_anchor_pair(pool.size(), rng);
        for (std::size_t d = 0; d < cfg.n_label_draws; ++d) {
            DyadicSample s;
            s.queries.reserve(cfg.tau_len);
            s.labels.reserve(cfg.tau_len);
            for (std::size_t t = 0; t < cfg.tau_len; ++t) {
                const std::size_t q = uniform_index(rng, 2) == 0 ? q1 : q2;
                s.queries.push_back(q);
                s.labels.push_back(sample_feedback(pool[q].true_prob, rng));
            }
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

double joint_log_likelihood(const RewardModel& model, std::span<const EvalQuery> pool, const DyadicSample& sample,
                            NllDiagnostics* diag) {
    return sequence_log_likelihood(pool_particle_probs(model, pool), sample, diag);
}

double dyadic_joint_nll(const RewardModel& model, std::span<const EvalQuery> pool,
                        std::span<const DyadicSample> samples, NllDiagnostics* diag) {
    if (samples.empty()) throw PreconditionError("dyadic_joint_nll needs at least one sample");
    const auto probs = pool_particle_probs(model, pool);
    double total = 0.0;
    for (const auto& s : samples)
        total -= sequence_log_likelihood(probs, s, diag) / static_cast<double>(s.queries.size());
    return total / static_cast<double>(samples.size());
}

namespace {

// Restrict per-particle probabilities to a Monte Carlo subset of indices.
std::vector<std::vector<double>> subset_particles(const std::vector<std::vector<double>>& probs,
                                                  std::span<const std::size_t> indices) {
    std::vector<std::vector<double>> out(probs.size());
    for (std::size_t q = 0; q < probs.size(); ++q)
        for (std::size_t z : indices) out[q].push_back(probs[q][z]);
    return out;
}

// Expected per-query joint NLL for one anchor pair, summing over how many
// times each (query, label) outcome occurs in the sequence.
double exact_anchor_nll(std::span<const double> probs1, std::span<const double> probs2, double p1, double p2,
                        std::size_t tau, NllDiagnostics* diag) {
    const std::size_t particles = probs1.size();
    std::vector<double> lp1(particles), lq1(particles), lp2(particles), lq2(particles);
    for (std::size_t s = 0; s < particles; ++s) {
        const double a = clamp_prob(probs1[s], diag);
        const double b = clamp_prob(probs2[s], diag);
        lp1[s] = std::log(a);
        lq1[s] = std::log(1.0 - a);
        lp2[s] = std::log(b);
        lq2[s] = std::log(1.0 - b);
    }
    const double outcome[4] = {0.5 * p1, 0.5 * (1.0 - p1), 0.5 * p2, 0.5 * (1.0 - p2)};
    const double log_tau_fact = std::lgamma(static_cast<double>(tau) + 1.0);
    std::vector<double> logs(particles);
    double expected = 0.0;
    for (std::size_t a = 0; a <= tau; ++a) {
        for (std::size_t b = 0; a + b <= tau; ++b) {
            for (std::size_t c = 0; a + b + c <= tau; ++c) {
                const std::size_t d = tau - a - b - c;
                const std::size_t counts[4] = {a, b, c, d};
                double log_w = log_tau_fact;
                bool impossible = false;
                for (int k = 0; k < 4; ++k) {
                    if (counts[k] == 0) continue;
                    if (outcome[k] <= 0.0) {
                        impossible = true;
                        break;
                    }
                    log_w += static_cast<double>(counts[k]) * std::log(outcome[k]) -
                             std::lgamma(static_cast<double>(counts[k]) + 1.0);
                }
                if (impossible) continue;
                for (std::size_t s = 0; s < particles; ++s)
                    logs[s] = static_cast<double>(a) * lp1[s] + static_cast<double>(b) * lq1[s] +
                              static_cast<double>(c) * lp2[s] + static_cast<double>(d) * lq2[s];
                expected += std::exp(log_w) * -log_mean_exp(logs);
            }
        }
    }
    return expected / static_cast<double>(tau);
}

}  // namespace

double dyadic_joint_nll(const RewardModel& model, std::span<const EvalQuery> pool, const DyadicConfig& cfg,
                        NllDiagnostics* diag) {
    cfg.validate();
    if (pool.empty()) throw PreconditionError("dyadic_joint_nll needs a nonempty query pool");
    const auto all_probs = pool_particle_probs(model, pool);
    const std::size_t particles = all_probs[0].size();
    const bool monte_carlo = cfg.eval_index_count > 0 && is_ensemble(model);
    Rng index_rng = make_rng({cfg.rng_seed, stream_tag("dyadic-index")});
    auto draw_indices = [&] {
        std::vector<std::size_t> idx(cfg.eval_index_count);
        for (auto& z : idx) z = uniform_index(index_rng, particles);
        return idx;
    };

    if (cfg.label_mode == DyadicLabelMode::sampled) {
        const auto samples = draw_dyadic_samples(pool, cfg);
        double total = 0.0;
        for (const auto& s : samples) {
            const double ll = monte_carlo ? sequence_log_likelihood(subset_particles(all_probs, draw_indices()), s, diag)
                                          : sequence_log_likelihood(all_probs, s, diag);
            total -= ll / static_cast<double>(cfg.tau_len);
        }
        return total / static_cast<double>(samples.size());
    }

    Rng rng = make_rng({cfg.rng_seed, stream_tag("dyadic")});
    double total = 0.0;
    for (std::size_t a = 0; a < cfg.n_anchor_pairs; ++a) {
        const auto [q1, q2] = draw_anchor_pair(pool.size(), rng);
        const auto probs = monte_carlo ? subset_particles(all_probs, draw_indices()) : all_probs;
        total += exact_anchor_nll(probs[q1], probs[q2], pool[q1].true_prob, pool[q2].true_prob, cfg.tau_len, diag);
    }
    return total / static_cast<double>(cfg.n_anchor_pairs);
}

double dyadic_joint_nll(const RewardModel& model, const World& world, const DyadicConfig& cfg, NllDiagnostics* diag) {
    cfg.validate();
    const auto pool = make_eval_queries(world, 2 * cfg.n_anchor_pairs);
    return dyadic_joint_nll(model, pool, cfg, diag);
}

std::vector<MatchPoint> queries_to_match(std::span<const CurvePoint> reference, std::span<const CurvePoint> alternative) {
    auto envelope = [](std::span<const CurvePoint> curve, const char* name) {
        if (curve.empty()) throw PreconditionError(std::string(name) + " curve is empty");
        std::vector<CurvePoint> env(curve.begin(), curve.end());
        for (std::size_t i = 1; i < env.size(); ++i) {
            if (!(env[i].queries > env[i - 1].queries))
                throw PreconditionError(std::string(name) + " curve queries must be strictly increasing");
            env[i].win_rate = std::max(env[i].win_rate, env[i - 1].win_rate);
        }
        return env;
    };
    const auto ref = envelope(reference, "reference");
    const auto alt = envelope(alternative, "alternative");

    // Smallest query count at which an envelope reaches w, interpolated.
    auto first_reach = [](const std::vector<CurvePoint>& env, double w) -> std::optional<double> {
        for (std::size_t j = 0; j < env.size(); ++j) {
            if (env[j].win_rate < w) continue;
            if (j == 0) return env[0].queries;
            const auto& lo = env[j - 1];
            const auto& hi = env[j];
            const double frac = (w - lo.win_rate) / (hi.win_rate - lo.win_rate);
            return lo.queries + frac * (hi.queries - lo.queries);
        }
        return std::nullopt;
    };

    // ref_queries is where the reference envelope first reaches its own level,
    // so flat stretches compare like with like.
    std::vector<MatchPoint> out;
    out.reserve(ref.size());
    for (const auto& r : ref)
        out.push_back({*first_reach(ref, r.win_rate), r.win_rate, first_reach(alt, r.win_rate)});
    return out;
}

}  // namespace prefex
