#include "veegan/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace veegan::nn {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "sgd") return OptimizerKind::Sgd;
    throw std::invalid_argument("unknown optimizer '" + s + "'");
}

OptState OptState::for_params(const OptimizerConfig& config, const NetParams& net) {
    OptState s;
    s.config = config;
    if (config.kind == OptimizerKind::Adam) {
        for (const nd::Tensor* t : net.tensors()) {
            s.m.emplace_back(t->shape());
            s.v.emplace_back(t->shape());
        }
    }
    return s;
}

namespace {

void check_grads(std::span<nd::Tensor* const> params, std::span<const nd::Tensor> grads) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                                    std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].shape() != params[i]->shape()) {
            throw nd::ShapeError("optimizer: gradient " + nd::shape_str(grads[i].shape()) + " for parameter " +
                                 std::to_string(i) + " of shape " + nd::shape_str(params[i]->shape()));
        }
        if (!grads[i].all_finite()) {
            throw NonFiniteGradient("optimizer: non-finite gradient for parameter " + std::to_string(i));
        }
    }
}

}  // namespace

void adam_step(NetParams& params, std::span<const nd::Tensor> grads, OptState& state) {
    const auto ps = params.tensors();
    adam_step(std::span<nd::Tensor* const>(ps), grads, state);
}

void adam_step(std::span<nd::Tensor* const> ps, std::span<const nd::Tensor> grads, OptState& state) {
    check_grads(ps, grads);
    if (state.m.empty() && state.v.empty()) {
        for (const nd::Tensor* t : ps) {
            state.m.emplace_back(t->shape());
            state.v.emplace_back(t->shape());
        }
    }
    if (state.m.size() != ps.size() || state.v.size() != ps.size()) {
        throw std::invalid_argument("adam_step: optimizer state does not match parameters");
    }
    const auto& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto p = ps[i]->data();
        auto g = grads[i].data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
            p[j] -= c.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.eps);
        }
    }
}

void sgd_step(NetParams& params, std::span<const nd::Tensor> grads, OptState& state) {
    const auto ps = params.tensors();
    check_grads(ps, grads);
    state.step += 1;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto p = ps[i]->data();
        auto g = grads[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= state.config.lr * g[j];
    }
}

void optimizer_step(NetParams& params, std::span<const nd::Tensor> grads, OptState& state) {
    if (state.config.kind == OptimizerKind::Adam) {
        adam_step(params, grads, state);
    } else {
        sgd_step(params, grads, state);
    }
}

}  // namespace veegan::nn
