#include "veegan/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "veegan/ops.hpp"

namespace veegan::nn {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

std::size_t NetParams::in_dim() const { return layers.empty() ? 0 : layers.front().weight.shape()[1]; }
std::size_t NetParams::out_dim() const { return layers.empty() ? 0 : layers.back().weight.shape()[0]; }

std::size_t NetParams::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

std::vector<const nd::Tensor*> NetParams::tensors() const {
    std::vector<const nd::Tensor*> out;
    for (const auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<nd::Tensor*> NetParams::tensors() {
    std::vector<nd::Tensor*> out;
    for (auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

void NetParams::validate() const {
    if (layers.empty()) throw std::invalid_argument("NetParams: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& w = layers[i].weight;
        const auto& b = layers[i].bias;
        if (w.rank() != 2 || b.rank() != 1 || b.shape()[0] != w.shape()[0]) {
            throw std::invalid_argument("NetParams: layer " + std::to_string(i) + " has weight " +
                                        nd::shape_str(w.shape()) + " and bias " + nd::shape_str(b.shape()));
        }
        if (i > 0 && layers[i - 1].weight.shape()[0] != w.shape()[1]) {
            throw std::invalid_argument("NetParams: layer " + std::to_string(i) + " expects " +
                                        std::to_string(w.shape()[1]) + " inputs but layer " + std::to_string(i - 1) +
                                        " produces " + std::to_string(layers[i - 1].weight.shape()[0]));
        }
    }
}

NetParams init_params(nd::Rng& rng, std::span<const std::size_t> dims, Activation hidden, Activation output,
                      double leaky_slope) {
    if (dims.size() < 2) throw std::invalid_argument("init_params: need at least input and output dims");
    NetParams net;
    net.hidden = hidden;
    net.output = output;
    net.leaky_slope = leaky_slope;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::size_t in = dims[i], out = dims[i + 1];
        if (in == 0 || out == 0) throw std::invalid_argument("init_params: layer dims must be >= 1");
        const double sd = std::sqrt(2.0 / static_cast<double>(in + out));
        Layer layer{nd::randn(rng, {out, in}), nd::Tensor({out})};
        for (double& w : layer.weight.data()) w *= sd;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

std::vector<nd::Var> bind(nd::Tape& tape, const NetParams& net) {
    std::vector<nd::Var> out;
    for (const nd::Tensor* t : net.tensors()) out.push_back(tape.leaf(*t));
    return out;
}

std::vector<nd::Var> bind_constant(nd::Tape& tape, const NetParams& net) {
    std::vector<nd::Var> out;
    for (const nd::Tensor* t : net.tensors()) out.push_back(tape.constant(*t));
    return out;
}

namespace {

nd::Var activate(Activation a, const nd::Var& x, double slope) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::Tanh: return nd::tanh(x);
        case Activation::Relu: return nd::relu(x);
        case Activation::LeakyRelu: return nd::leaky_relu(x, slope);
        case Activation::Sigmoid: return nd::sigmoid(x);
    }
    return x;
}

}  // namespace

nd::Var mlp_forward(const NetParams& arch, std::span<const nd::Var> params, const nd::Var& input) {
    if (params.size() != 2 * arch.layers.size()) {
        throw std::invalid_argument("mlp_forward: expected " + std::to_string(2 * arch.layers.size()) +
                                    " parameter tensors, got " + std::to_string(params.size()));
    }
    const auto& in_shape = input.shape();
    if (in_shape.size() != 2 || in_shape[1] != arch.in_dim()) {
        throw nd::ShapeError("mlp_forward: input " + nd::shape_str(in_shape) + " does not match input width " +
                             std::to_string(arch.in_dim()));
    }
    nd::Var h = input;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        h = nd::add(nd::matmul(h, params[2 * i], false, true), params[2 * i + 1]);
        const bool last = i + 1 == arch.layers.size();
        h = activate(last ? arch.output : arch.hidden, h, arch.leaky_slope);
    }
    return h;
}

nd::Tensor mlp_apply(const NetParams& net, const nd::Tensor& input) {
    nd::Tape tape;
    auto params = bind_constant(tape, net);
    return mlp_forward(net, params, tape.constant(input)).value();
}

}  // namespace veegan::nn
