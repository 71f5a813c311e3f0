#pragma once

#include <cstdint>
#include <vector>

#include "prefex/mlp.hpp"

namespace prefex {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

// Moment accumulators for one parameter set.
struct AdamState {
    AdamConfig config;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(const MlpParams& params, AdamConfig cfg);

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam update of params in place. Throws NumericalError
// before touching anything if grad has a non-finite entry.
void adam_step(AdamState& state, MlpParams& params, const MlpParams& grad);

}  // namespace prefex
