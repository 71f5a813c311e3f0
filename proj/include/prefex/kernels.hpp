#pragma once

// Data-parallel building blocks. Each kernel has an OpenMP path and a serial
// path; the serial path is the reference that tests compare against. Parallel
// loops only write disjoint output slots, so both paths are bitwise identical.

#include <cstddef>
#include <span>
#include <vector>

#include "prefex/mlp.hpp"

namespace prefex {

enum class Exec { serial, parallel };

// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Forward pass over many inputs at once, processed layer by layer in blocks.
std::vector<double> forward_batch(const MlpParams& params, std::span<const Embedding> inputs,
                                  Exec exec = Exec::parallel);
// One mlp_forward call per input.
std::vector<double> forward_batch_reference(const MlpParams& params, std::span<const Embedding> inputs);

// rewards(s, n) = forward(particles[s], inputs[n]).
Matrix ensemble_rewards(std::span<const MlpParams> particles, std::span<const Embedding> inputs,
                        Exec exec = Exec::parallel);
Matrix ensemble_rewards_reference(std::span<const MlpParams> particles, std::span<const Embedding> inputs);

}  // namespace prefex
