#include "prefex/adam.hpp"

#include <cmath>

#include "prefex/errors.hpp"

namespace prefex {

AdamState::AdamState(const MlpParams& params, AdamConfig cfg)
    : config(cfg), first_moment(params.size(), 0.0), second_moment(params.size(), 0.0) {
    if (!(cfg.learning_rate >= 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) ||
        !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.epsilon > 0.0))
        throw ConfigError("invalid Adam hyperparameters");
}

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grad) {
    if (!grad.same_shape(params) || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size())
        throw ShapeError("adam_step: parameter, gradient and state shapes disagree");
    auto g = grad.values();
    for (double x : g)
        if (!std::isfinite(x)) throw NumericalError("adam_step: non-finite gradient entry");

    const auto& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    auto p = params.values();
    auto& m = state.first_moment;
    auto& v = state.second_moment;
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

}  // namespace prefex
