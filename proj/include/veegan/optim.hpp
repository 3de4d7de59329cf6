#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "veegan/mlp.hpp"

namespace veegan::nn {

enum class OptimizerKind : std::uint8_t { Sgd = 0, Adam = 1 };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;

    friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// Optimizer state for one network. Moments are empty for SGD.
struct OptState {
    OptimizerConfig config;
    std::uint64_t step = 0;
    std::vector<nd::Tensor> m;
    std::vector<nd::Tensor> v;

    static OptState for_params(const OptimizerConfig& config, const NetParams& net);

    friend bool operator==(const OptState&, const OptState&) = default;
};

/// Raised when a gradient contains NaN/Inf; names the offending parameter index.
class NonFiniteGradient : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Bias-corrected Adam update.
void adam_step(NetParams& params, std::span<const nd::Tensor> grads, OptState& state);
/// Same update on bare tensors; `state.m` and `state.v` must match `params` (or be empty to be zero-initialized).
void adam_step(std::span<nd::Tensor* const> params, std::span<const nd::Tensor> grads, OptState& state);
void sgd_step(NetParams& params, std::span<const nd::Tensor> grads, OptState& state);
/// Dispatches on state.config.kind.
void optimizer_step(NetParams& params, std::span<const nd::Tensor> grads, OptState& state);

}  // namespace veegan::nn
