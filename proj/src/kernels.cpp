#include "prefex/kernels.hpp"

#include <algorithm>
#include <string>

#include "prefex/errors.hpp"

namespace prefex {

namespace {

constexpr std::size_t kBlock = 16;

void forward_block(const MlpParams& params, std::span<const Embedding> inputs, std::span<double> out) {
    const auto& sizes = params.layer_sizes();
    const std::size_t layers = params.num_layers();
    const std::size_t k_count = inputs.size();
    const std::size_t widest = *std::max_element(sizes.begin(), sizes.end());
    // [k][unit] activations for the current and next layer.
    std::vector<double> cur(k_count * widest);
    std::vector<double> next(k_count * widest);
    std::size_t width = sizes[0];
    for (std::size_t k = 0; k < k_count; ++k)
        std::copy(inputs[k].begin(), inputs[k].end(), cur.begin() + k * width);
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t n_out = sizes[l + 1];
        auto w = params.weights(l);
        auto b = params.bias(l);
        const bool hidden = l + 1 < layers;
        for (std::size_t i = 0; i < n_out; ++i) {
            const double* row = w.data() + i * width;
            for (std::size_t k = 0; k < k_count; ++k) {
                const double* in = cur.data() + k * width;
                double acc = b[i];
                for (std::size_t j = 0; j < width; ++j) acc += row[j] * in[j];
                next[k * n_out + i] = hidden ? hidden_activation(acc) : acc;
            }
        }
        cur.swap(next);
        width = n_out;
    }
    for (std::size_t k = 0; k < k_count; ++k) out[k] = cur[k];
}

void check_inputs(const MlpParams& params, std::span<const Embedding> inputs) {
    for (const auto& e : inputs)
        if (e.size() != params.input_dim())
            throw ShapeError("forward_batch: input length " + std::to_string(e.size()) +
                             " does not match input dim " + std::to_string(params.input_dim()));
}

}  // namespace

std::vector<double> forward_batch(const MlpParams& params, std::span<const Embedding> inputs, Exec exec) {
    check_inputs(params, inputs);
    std::vector<double> out(inputs.size());
    const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((inputs.size() + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel && blocks > 1)
    for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
        const std::size_t begin = static_cast<std::size_t>(blk) * kBlock;
        const std::size_t count = std::min(kBlock, inputs.size() - begin);
        forward_block(params, inputs.subspan(begin, count), std::span<double>(out).subspan(begin, count));
    }
    return out;
}

std::vector<double> forward_batch_reference(const MlpParams& params, std::span<const Embedding> inputs) {
    std::vector<double> out;
    out.reserve(inputs.size());
    for (const auto& e : inputs) out.push_back(mlp_forward(params, e));
    return out;
}

Matrix ensemble_rewards(std::span<const MlpParams> particles, std::span<const Embedding> inputs, Exec exec) {
    Matrix rewards(particles.size(), inputs.size());
    for (const auto& p : particles) check_inputs(p, inputs);
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(particles.size());
#pragma omp parallel for schedule(static) if (exec == Exec::parallel && count > 1)
    for (std::ptrdiff_t s = 0; s < count; ++s) {
        auto row = forward_batch(particles[static_cast<std::size_t>(s)], inputs, Exec::serial);
        std::copy(row.begin(), row.end(), rewards.data.begin() + s * static_cast<std::ptrdiff_t>(inputs.size()));
    }
    return rewards;
}

Matrix ensemble_rewards_reference(std::span<const MlpParams> particles, std::span<const Embedding> inputs) {
    Matrix rewards(particles.size(), inputs.size());
    for (std::size_t s = 0; s < particles.size(); ++s)
        for (std::size_t n = 0; n < inputs.size(); ++n) rewards(s, n) = mlp_forward(particles[s], inputs[n]);
    return rewards;
}

}  // namespace prefex
