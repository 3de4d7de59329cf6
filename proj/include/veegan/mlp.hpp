#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "veegan/rng.hpp"
#include "veegan/tape.hpp"
#include "veegan/tensor.hpp"

namespace veegan::nn {

enum class Activation : std::uint8_t { Identity = 0, Tanh = 1, Relu = 2, LeakyRelu = 3, Sigmoid = 4 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
    nd::Tensor weight;  // [out x in]
    nd::Tensor bias;    // [out]

    friend bool operator==(const Layer&, const Layer&) = default;
};

/// Fully-connected network: affine layers, `hidden` after every layer but the last, `output` after the last.
struct NetParams {
    std::vector<Layer> layers;
    Activation hidden = Activation::Tanh;
    Activation output = Activation::Identity;
    double leaky_slope = 0.2;

    std::size_t in_dim() const;
    std::size_t out_dim() const;
    std::size_t param_count() const;

    /// Parameter tensors in the order W0, b0, W1, b1, ...
    std::vector<const nd::Tensor*> tensors() const;
    std::vector<nd::Tensor*> tensors();

    /// Throws std::invalid_argument if adjacent layer dims do not chain.
    void validate() const;

    friend bool operator==(const NetParams&, const NetParams&) = default;
};

/// Xavier-style init: weights ~ N(0, 2/(in+out)), biases zero. `dims` lists every layer width, input first.
NetParams init_params(nd::Rng& rng, std::span<const std::size_t> dims, Activation hidden,
                      Activation output = Activation::Identity, double leaky_slope = 0.2);

/// Registers the parameters as tape leaves, ordered like NetParams::tensors().
std::vector<nd::Var> bind(nd::Tape& tape, const NetParams& net);
/// Registers the parameters as constants.
std::vector<nd::Var> bind_constant(nd::Tape& tape, const NetParams& net);

/// Forward pass with parameters supplied as tape nodes (leaves, constants, or derived values).
nd::Var mlp_forward(const NetParams& arch, std::span<const nd::Var> params, const nd::Var& input);

/// Gradient-free evaluation.
nd::Tensor mlp_apply(const NetParams& net, const nd::Tensor& input);

}  // namespace veegan::nn
