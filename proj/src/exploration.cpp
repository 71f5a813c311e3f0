#include "prefex/exploration.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "prefex/errors.hpp"

namespace prefex {

PrefMode parse_pref_mode(std::string_view name) {
    if (name == "logistic") return PrefMode::logistic;
    if (name == "ratio") return PrefMode::ratio;
    throw ConfigError("unknown pref_mode '" + std::string(name) + "' (expected logistic or ratio)");
}

std::string_view to_string(PrefMode mode) { return mode == PrefMode::logistic ? "logistic" : "ratio"; }

namespace {

void require_pair(std::size_t n) {
    if (n < 2) throw PreconditionError("need at least two candidates, got " + std::to_string(n));
}

void check_rewards(std::span<const double> rewards, double tau) {
    require_pair(rewards.size());
    if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
    for (double r : rewards)
        if (!std::isfinite(r)) throw NumericalError("non-finite reward passed to Boltzmann selection");
}

// Draw from softmax(rewards / tau) restricted to indices != excluded.
std::size_t sample_softmax_excluding(std::span<const double> rewards, double tau, std::size_t excluded, Rng& rng) {
    double hi = -INFINITY;
    for (std::size_t n = 0; n < rewards.size(); ++n)
        if (n != excluded) hi = std::max(hi, rewards[n]);
    std::vector<double> weights(rewards.size(), 0.0);
    for (std::size_t n = 0; n < rewards.size(); ++n)
        if (n != excluded) weights[n] = std::exp((rewards[n] - hi) / tau);
    std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
    return dist(rng);
}

}  // namespace

std::size_t argmax_lowest(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t n = 1; n < values.size(); ++n)
        if (values[n] > values[best]) best = n;
    return best;
}

SelectionResult passive_select(std::size_t n, Rng& rng) {
    require_pair(n);
    const std::size_t first = uniform_index(rng, n);
    std::size_t second = uniform_index(rng, n - 1);
    if (second >= first) ++second;
    return {first, second};
}

std::vector<double> boltzmann_probs(std::span<const double> rewards, double tau) {
    check_rewards(rewards, tau);
    const double hi = *std::max_element(rewards.begin(), rewards.end());
    std::vector<double> q(rewards.size());
    double total = 0.0;
    for (std::size_t n = 0; n < rewards.size(); ++n) {
        q[n] = std::exp((rewards[n] - hi) / tau);
        total += q[n];
    }
    for (double& v : q) v /= total;
    return q;
}

SelectionResult boltzmann_select(std::span<const double> rewards, double tau, Rng& rng) {
    check_rewards(rewards, tau);
    const std::size_t none = rewards.size();
    const std::size_t first = sample_softmax_excluding(rewards, tau, none, rng);
    const std::size_t second = sample_softmax_excluding(rewards, tau, first, rng);
    return {first, second};
}

SelectionResult greedy_boltzmann_select(std::span<const double> rewards, double tau, Rng& rng) {
    check_rewards(rewards, tau);
    const std::size_t first = argmax_lowest(rewards);
    return {first, sample_softmax_excluding(rewards, tau, first, rng)};
}

double pair_preference(double r, double r_prime, PrefMode mode) {
    if (mode == PrefMode::logistic) {
        const double d = r - r_prime;
        if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
        const double e = std::exp(d);
        return e / (1.0 + e);
    }
    const double shift = -std::min(0.0, std::min(r, r_prime)) + 1e-6;
    const double a = r + shift;
    const double b = r_prime + shift;
    return a / (a + b);
}

double sample_variance(std::span<const double> values) {
    if (values.size() < 2) throw PreconditionError("sample variance needs at least two values");
    // Deviations from the first value keep identical inputs at exactly zero.
    const double k = values[0];
    double mean = 0.0;
    for (double v : values) mean += v - k;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - k - mean) * (v - k - mean);
    return ss / static_cast<double>(values.size() - 1);
}

SelectionResult infomax_select(const Matrix& particle_rewards, std::size_t m, Rng& rng, PrefMode mode,
                               SelectionDiagnostics* diag) {
    const std::size_t n = particle_rewards.cols;
    require_pair(n);
    if (m < 2) throw ConfigError("infomax needs at least two epistemic indices");
    if (particle_rewards.rows == 0) throw ConfigError("infomax needs a nonempty ensemble");

    std::vector<std::size_t> indices(m);
    for (auto& z : indices) z = uniform_index(rng, particle_rewards.rows);

    std::vector<double> probs(m);
    SelectionResult best{0, 1};
    double best_var = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            for (std::size_t k = 0; k < m; ++k)
                probs[k] = pair_preference(particle_rewards(indices[k], a), particle_rewards(indices[k], b), mode);
            const double var = sample_variance(probs);
            if (var > best_var) {
                best_var = var;
                best = {a, b};
            }
        }
    }
    if (diag) diag->zero_variance = best_var == 0.0;
    return best;
}

SelectionResult infomax_select(const CandidateSet& cands, const EnnRewardModel& enn, std::size_t m, Rng& rng,
                               PrefMode mode, SelectionDiagnostics* diag) {
    require_pair(cands.size());
    return infomax_select(ensemble_rewards(enn.particles(), cands.embeddings, Exec::serial), m, rng, mode, diag);
}

SelectionResult double_ts_select(const Matrix& particle_rewards, std::size_t k, Rng& rng,
                                 SelectionDiagnostics* diag) {
    const std::size_t n = particle_rewards.cols;
    require_pair(n);
    if (k < 1) throw ConfigError("double TS needs at least one attempt");
    if (particle_rewards.rows == 0) throw ConfigError("double TS needs a nonempty ensemble");
    const std::size_t s = particle_rewards.rows;

    const std::size_t first = argmax_lowest(particle_rewards.row(uniform_index(rng, s)));
    for (std::size_t attempt = 1; attempt <= k; ++attempt) {
        const std::size_t second = argmax_lowest(particle_rewards.row(uniform_index(rng, s)));
        if (second != first) {
            if (diag) *diag = {false, false, attempt};
            return {first, second};
        }
    }
    std::size_t second = uniform_index(rng, n - 1);
    if (second >= first) ++second;
    if (diag) *diag = {false, true, k};
    return {first, second};
}

SelectionResult double_ts_select(const CandidateSet& cands, const EnnRewardModel& enn, std::size_t k, Rng& rng,
                                 SelectionDiagnostics* diag) {
    require_pair(cands.size());
    return double_ts_select(ensemble_rewards(enn.particles(), cands.embeddings, Exec::serial), k, rng, diag);
}

}  // namespace prefex
