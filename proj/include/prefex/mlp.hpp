#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace prefex {

// Fixed-length feature vector standing in for a prompt-response embedding.
using Embedding = std::vector<double>;

// Hidden-layer nonlinearity. The output layer is always the identity.
inline double hidden_activation(double x) { return std::tanh(x); }
// Derivative of the activation written in terms of its output a = tanh(x).
inline double hidden_activation_grad_from_output(double a) { return 1.0 - a * a; }

/// Parameters of a fully connected network with scalar output.
///
/// All weights and biases live in one contiguous buffer so that optimizers,
/// norms and serialization can treat the network as a flat vector. Layer l
/// stores its weight matrix row-major as [out][in], followed by its bias.
class MlpParams {
public:
    MlpParams() = default;

    // Zero-valued parameters for the given topology. Throws ConfigError if the
    // topology is invalid (fewer than two entries, a zero width, output != 1).
    explicit MlpParams(std::vector<std::size_t> layer_sizes);

    const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
    std::size_t num_layers() const noexcept { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    std::size_t input_dim() const noexcept { return sizes_.empty() ? 0 : sizes_.front(); }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> weights(std::size_t layer);
    std::span<const double> weights(std::size_t layer) const;
    std::span<double> bias(std::size_t layer);
    std::span<const double> bias(std::size_t layer) const;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    bool same_shape(const MlpParams& other) const noexcept { return sizes_ == other.sizes_; }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;

private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;  // start of layer l's weights
    std::vector<double> values_;
};

void validate_layer_sizes(std::span<const std::size_t> layer_sizes);

// Xavier-uniform weights on every layer, zero biases, final layer scaled by
// output_scale. Deterministic in seed.
MlpParams mlp_init(std::vector<std::size_t> layer_sizes, std::uint64_t seed, double output_scale);

double mlp_forward(const MlpParams& params, std::span<const double> input);

// Gradient of sum_i adjoints[i] * forward(params, inputs[i]) with respect to params.
MlpParams mlp_grad(const MlpParams& params, std::span<const Embedding> inputs,
                   std::span<const double> adjoints);

// Records the activations of one forward pass so the matching backward pass
// can be run without recomputation. Reusable across calls.
class MlpTape {
public:
    double forward(const MlpParams& params, std::span<const double> input);

    // Adds adjoint * d forward / d params into grad. Must follow forward() on
    // the same params.
    void backward(const MlpParams& params, double adjoint, MlpParams& grad);

private:
    std::vector<std::vector<double>> acts_;
    std::vector<double> delta_;
    std::vector<double> next_delta_;
};

double squared_norm(std::span<const double> v);
// Euclidean distance between two parameter sets of the same shape.
double param_distance(const MlpParams& a, const MlpParams& b);

}  // namespace prefex
