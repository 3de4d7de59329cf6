#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "veegan/tensor.hpp"

namespace veegan::nd {

class Tape;

enum class Op : std::uint8_t {
    Leaf,
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    Neg,
    Scale,
    AddScalar,
    Tanh,
    Relu,
    LeakyRelu,
    Sigmoid,
    LogSigmoid,
    Softplus,
    Sum,
    SquaredL2,
    SumRows,
    BroadcastRows,
    ExpandScalar,
    ConcatCols,
    SliceCols,
    PadCols,
};

const char* op_name(Op op) noexcept;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    double item() const { return value().item(); }
    bool requires_grad() const;

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

enum class GradMode {
    /// Gradients are plain values; nothing about the backward pass is differentiable.
    Value,
    /// Backward pass is recorded on the tape so gradients can be differentiated again.
    CreateGraph,
};

/// Per-node op parameters (scale factor, slope, column offsets, transpose flags).
struct OpAttr {
    double scalar = 0.0;
    std::size_t a = 0;
    std::size_t b = 0;
    bool flag_a = false;
    bool flag_b = false;
};

/// Append-only record of primitive ops. Node inputs always precede the node.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable input.
    Var leaf(Tensor value);
    /// Input that never receives a gradient.
    Var constant(Tensor value);
    /// Constant sharing the value of `v`.
    Var detach(const Var& v);

    /// Reverse pass from a scalar `loss`. Returns one gradient per entry of `wrt`,
    /// zero-filled when the loss does not depend on it.
    std::vector<Var> grad(const Var& loss, std::span<const Var> wrt, GradMode mode = GradMode::Value);

    /// Convenience wrapper returning gradient values.
    std::vector<Tensor> gradients(const Var& loss, std::span<const Var> wrt);

    std::size_t size() const noexcept { return nodes_.size(); }

    // Op recording; used by the free functions in ops.hpp.
    using Attr = OpAttr;
    Var record(Op op, Tensor value, std::span<const Var> inputs, Attr attr = {});

private:
    friend class Var;

    struct Node {
        std::shared_ptr<const Tensor> value;
        Op op = Op::Constant;
        std::array<std::size_t, 2> inputs{};
        std::uint8_t n_inputs = 0;
        bool requires_grad = false;
        Attr attr;
    };

    Var push(Node node);
    Var as_constant(std::size_t id);
    void vjp(std::size_t id, const Var& upstream, GradMode mode, const std::vector<char>& relevant,
             std::vector<Var>& grads, std::vector<char>& has_grad);

    std::vector<Node> nodes_;
};

}  // namespace veegan::nd
