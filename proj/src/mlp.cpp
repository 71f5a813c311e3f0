#include "prefex/mlp.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "prefex/errors.hpp"
#include "prefex/rng.hpp"

namespace prefex {

void validate_layer_sizes(std::span<const std::size_t> layer_sizes) {
    if (layer_sizes.size() < 2)
        throw ConfigError("layer_sizes needs at least an input and an output entry");
    for (std::size_t w : layer_sizes)
        if (w == 0) throw ConfigError("layer_sizes entries must be positive");
    if (layer_sizes.back() != 1)
        throw ConfigError("last layer size must be 1 (scalar reward), got " +
                          std::to_string(layer_sizes.back()));
}

MlpParams::MlpParams(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
    validate_layer_sizes(sizes_);
    std::size_t total = 0;
    offsets_.reserve(sizes_.size() - 1);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(total);
        total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
    }
    values_.assign(total, 0.0);
}

std::span<double> MlpParams::weights(std::size_t layer) {
    return {values_.data() + offsets_[layer], sizes_[layer] * sizes_[layer + 1]};
}

std::span<const double> MlpParams::weights(std::size_t layer) const {
    return {values_.data() + offsets_[layer], sizes_[layer] * sizes_[layer + 1]};
}

std::span<double> MlpParams::bias(std::size_t layer) {
    return {values_.data() + offsets_[layer] + sizes_[layer] * sizes_[layer + 1], sizes_[layer + 1]};
}

std::span<const double> MlpParams::bias(std::size_t layer) const {
    return {values_.data() + offsets_[layer] + sizes_[layer] * sizes_[layer + 1], sizes_[layer + 1]};
}

MlpParams mlp_init(std::vector<std::size_t> layer_sizes, std::uint64_t seed, double output_scale) {
    if (!(output_scale >= 0.0) || !std::isfinite(output_scale))
        throw ConfigError("output_scale must be a finite nonnegative number");
    MlpParams params(std::move(layer_sizes));
    Rng rng(seed);
    const auto& sizes = params.layer_sizes();
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const double fan_in = static_cast<double>(sizes[l]);
        const double fan_out = static_cast<double>(sizes[l + 1]);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        const bool last = l + 1 == params.num_layers();
        for (double& w : params.weights(l)) {
            w = dist(rng);
            if (last) w *= output_scale;
        }
    }
    return params;
}

namespace {

void check_input(const MlpParams& params, std::size_t n) {
    if (params.num_layers() == 0) throw ShapeError("forward on empty parameter set");
    if (n != params.input_dim())
        throw ShapeError("input length " + std::to_string(n) + " does not match input dim " +
                         std::to_string(params.input_dim()));
}

// out = b + W * in, accumulated left to right starting from the bias. Every
// forward implementation in the project uses this order so that results are
// bitwise comparable.
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> in,
            std::span<double> out) {
    const std::size_t n_in = in.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double* row = w.data() + i * n_in;
        double acc = b[i];
        for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * in[j];
        out[i] = acc;
    }
}

}  // namespace

double mlp_forward(const MlpParams& params, std::span<const double> input) {
    check_input(params, input.size());
    const auto& sizes = params.layer_sizes();
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        next.assign(sizes[l + 1], 0.0);
        affine(params.weights(l), params.bias(l), cur, next);
        if (l + 1 < params.num_layers())
            for (double& v : next) v = hidden_activation(v);
        cur.swap(next);
    }
    return cur[0];
}

double MlpTape::forward(const MlpParams& params, std::span<const double> input) {
    check_input(params, input.size());
    const auto& sizes = params.layer_sizes();
    const std::size_t layers = params.num_layers();
    acts_.resize(layers + 1);
    acts_[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < layers; ++l) {
        acts_[l + 1].assign(sizes[l + 1], 0.0);
        affine(params.weights(l), params.bias(l), acts_[l], acts_[l + 1]);
        if (l + 1 < layers)
            for (double& v : acts_[l + 1]) v = hidden_activation(v);
    }
    return acts_[layers][0];
}

void MlpTape::backward(const MlpParams& params, double adjoint, MlpParams& grad) {
    if (!grad.same_shape(params)) throw ShapeError("gradient buffer shape mismatch");
    const auto& sizes = params.layer_sizes();
    const std::size_t layers = params.num_layers();
    if (acts_.size() != layers + 1) throw PreconditionError("backward called before forward");

    delta_.assign(1, adjoint);
    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t n_in = sizes[l];
        const std::size_t n_out = sizes[l + 1];
        const auto& in = acts_[l];
        auto gw = grad.weights(l);
        auto gb = grad.bias(l);
        for (std::size_t i = 0; i < n_out; ++i) {
            const double d = delta_[i];
            gb[i] += d;
            double* row = gw.data() + i * n_in;
            for (std::size_t j = 0; j < n_in; ++j) row[j] += d * in[j];
        }
        if (l == 0) break;
        auto w = params.weights(l);
        next_delta_.assign(n_in, 0.0);
        for (std::size_t i = 0; i < n_out; ++i) {
            const double d = delta_[i];
            const double* row = w.data() + i * n_in;
            for (std::size_t j = 0; j < n_in; ++j) next_delta_[j] += d * row[j];
        }
        for (std::size_t j = 0; j < n_in; ++j)
            next_delta_[j] *= hidden_activation_grad_from_output(in[j]);
        delta_.swap(next_delta_);
    }
}

MlpParams mlp_grad(const MlpParams& params, std::span<const Embedding> inputs,
                   std::span<const double> adjoints) {
    if (inputs.empty()) throw PreconditionError("mlp_grad needs at least one input");
    if (inputs.size() != adjoints.size())
        throw ShapeError("mlp_grad: inputs and adjoints differ in length");
    MlpParams grad(params.layer_sizes());
    MlpTape tape;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        tape.forward(params, inputs[i]);
        tape.backward(params, adjoints[i], grad);
    }
    return grad;
}

double squared_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

double param_distance(const MlpParams& a, const MlpParams& b) {
    if (!a.same_shape(b)) throw ShapeError("param_distance: shape mismatch");
    auto va = a.values();
    auto vb = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double d = va[i] - vb[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace prefex
