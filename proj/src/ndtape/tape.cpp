#include "veegan/tape.hpp"

#include <string>

#include "veegan/ops.hpp"

namespace veegan::nd {

const char* op_name(Op op) noexcept {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Constant: return "constant";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Neg: return "neg";
        case Op::Scale: return "scale";
        case Op::AddScalar: return "add_scalar";
        case Op::Tanh: return "tanh";
        case Op::Relu: return "relu";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::LogSigmoid: return "log_sigmoid";
        case Op::Softplus: return "softplus";
        case Op::Sum: return "sum";
        case Op::SquaredL2: return "squared_l2";
        case Op::SumRows: return "sum_rows";
        case Op::BroadcastRows: return "broadcast_rows";
        case Op::ExpandScalar: return "expand_scalar";
        case Op::ConcatCols: return "concat_cols";
        case Op::SliceCols: return "slice_cols";
        case Op::PadCols: return "pad_cols";
    }
    return "?";
}

const Tensor& Var::value() const {
    if (!tape_) throw std::invalid_argument("Var::value: unbound Var");
    return *tape_->nodes_[id_].value;
}

bool Var::requires_grad() const { return tape_ && tape_->nodes_[id_].requires_grad; }

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
    if (!value.all_finite()) throw NonFiniteError("leaf: non-finite input value");
    Node n;
    n.value = std::make_shared<const Tensor>(std::move(value));
    n.op = Op::Leaf;
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) throw NonFiniteError("constant: non-finite input value");
    Node n;
    n.value = std::make_shared<const Tensor>(std::move(value));
    return push(std::move(n));
}

Var Tape::as_constant(std::size_t id) {
    Node n;
    n.value = nodes_[id].value;
    return push(std::move(n));
}

Var Tape::detach(const Var& v) {
    if (&v.tape() != this) throw std::invalid_argument("detach: Var belongs to another tape");
    return as_constant(v.id());
}

Var Tape::record(Op op, Tensor value, std::span<const Var> inputs, Attr attr) {
    if (!value.all_finite()) throw NonFiniteError(std::string(op_name(op)) + " produced a non-finite value");
    Node n;
    n.value = std::make_shared<const Tensor>(std::move(value));
    n.op = op;
    n.attr = attr;
    n.n_inputs = static_cast<std::uint8_t>(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        n.inputs[i] = inputs[i].id();
        n.requires_grad = n.requires_grad || nodes_[inputs[i].id()].requires_grad;
    }
    return push(std::move(n));
}

void Tape::vjp(std::size_t id, const Var& g, GradMode mode, const std::vector<char>& relevant,
               std::vector<Var>& grads, std::vector<char>& has_grad) {
    // Copy what we need: recording below may reallocate nodes_.
    const Op op = nodes_[id].op;
    const Attr attr = nodes_[id].attr;
    const auto in = nodes_[id].inputs;
    const std::uint8_t n_in = nodes_[id].n_inputs;

    auto val = [&](std::size_t node) { return mode == GradMode::CreateGraph ? Var(this, node) : as_constant(node); };
    auto wants = [&](std::size_t k) { return k < n_in && relevant[in[k]] && nodes_[in[k]].requires_grad; };
    auto acc = [&](std::size_t k, const Var& contrib) {
        const std::size_t target = in[k];
        if (has_grad[target]) {
            grads[target] = add(grads[target], contrib);
        } else {
            grads[target] = contrib;
            has_grad[target] = 1;
        }
    };
    auto shape_of = [&](std::size_t k) -> const Shape& { return nodes_[in[k]].value->shape(); };
    auto mask = [&](auto f) {
        const Tensor& x = *nodes_[in[0]].value;
        Tensor m(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) m[i] = f(x[i]);
        return constant(std::move(m));
    };

    switch (op) {
        case Op::Leaf:
        case Op::Constant:
            return;
        case Op::MatMul: {
            const bool ta = attr.flag_a, tb = attr.flag_b;
            if (wants(0)) {
                Var b = val(in[1]);
                acc(0, ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb));
            }
            if (wants(1)) {
                Var a = val(in[0]);
                acc(1, tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false));
            }
            return;
        }
        case Op::Add:
        case Op::Sub: {
            if (wants(0)) acc(0, g);
            if (wants(1)) {
                Var gb = shape_of(0) == shape_of(1) ? g : sum_rows(g);
                acc(1, op == Op::Sub ? neg(gb) : gb);
            }
            return;
        }
        case Op::Mul: {
            if (wants(0)) acc(0, mul(g, val(in[1])));
            if (wants(1)) {
                Var prod = mul(g, val(in[0]));
                acc(1, shape_of(0) == shape_of(1) ? prod : sum_rows(prod));
            }
            return;
        }
        case Op::Neg:
            if (wants(0)) acc(0, neg(g));
            return;
        case Op::Scale:
            if (wants(0)) acc(0, scale(g, attr.scalar));
            return;
        case Op::AddScalar:
            if (wants(0)) acc(0, g);
            return;
        case Op::Tanh:
            if (wants(0)) {
                Var y = val(id);
                acc(0, mul(g, add_scalar(neg(mul(y, y)), 1.0)));
            }
            return;
        case Op::Relu:
            if (wants(0)) acc(0, mul(g, mask([](double x) { return x > 0 ? 1.0 : 0.0; })));
            return;
        case Op::LeakyRelu:
            if (wants(0)) {
                const double slope = attr.scalar;
                acc(0, mul(g, mask([slope](double x) { return x > 0 ? 1.0 : slope; })));
            }
            return;
        case Op::Sigmoid:
            if (wants(0)) {
                Var y = val(id);
                acc(0, mul(g, mul(y, add_scalar(neg(y), 1.0))));
            }
            return;
        case Op::LogSigmoid:
            if (wants(0)) acc(0, mul(g, sigmoid(neg(val(in[0])))));
            return;
        case Op::Softplus:
            if (wants(0)) acc(0, mul(g, sigmoid(val(in[0]))));
            return;
        case Op::Sum:
            if (wants(0)) acc(0, expand_scalar(g, shape_of(0)));
            return;
        case Op::SquaredL2:
            if (wants(0)) acc(0, scale(mul(expand_scalar(g, shape_of(0)), val(in[0])), 2.0));
            return;
        case Op::SumRows:
            if (wants(0)) acc(0, broadcast_rows(g, shape_of(0)[0]));
            return;
        case Op::BroadcastRows:
            if (wants(0)) acc(0, sum_rows(g));
            return;
        case Op::ExpandScalar:
            if (wants(0)) acc(0, sum(g));
            return;
        case Op::ConcatCols: {
            const std::size_t ca = shape_of(0)[1];
            if (wants(0)) acc(0, slice_cols(g, 0, ca));
            if (wants(1)) acc(1, slice_cols(g, ca, shape_of(1)[1]));
            return;
        }
        case Op::SliceCols:
            if (wants(0)) acc(0, pad_cols(g, attr.a, shape_of(0)[1]));
            return;
        case Op::PadCols:
            if (wants(0)) acc(0, slice_cols(g, attr.a, shape_of(0)[1]));
            return;
    }
}

std::vector<Var> Tape::grad(const Var& loss, std::span<const Var> wrt, GradMode mode) {
    if (&loss.tape() != this) throw std::invalid_argument("grad: loss belongs to another tape");
    const Tensor& lv = loss.value();
    if (lv.size() != 1) throw ShapeError("grad: loss must be a scalar, got shape " + shape_str(lv.shape()));

    const std::size_t top = loss.id();
    std::vector<char> relevant(top + 1, 0);
    for (const Var& w : wrt) {
        if (&w.tape() != this) throw std::invalid_argument("grad: wrt Var belongs to another tape");
        if (w.id() <= top) relevant[w.id()] = 1;
    }
    for (std::size_t i = 0; i <= top; ++i) {
        const Node& n = nodes_[i];
        if (relevant[i] || !n.requires_grad) continue;
        for (std::uint8_t k = 0; k < n.n_inputs; ++k) {
            if (relevant[n.inputs[k]]) {
                relevant[i] = 1;
                break;
            }
        }
    }

    std::vector<Var> grads(top + 1);
    std::vector<char> has_grad(top + 1, 0);
    if (relevant[top]) {
        grads[top] = constant(Tensor(lv.shape(), 1.0));
        has_grad[top] = 1;
    }
    for (std::size_t i = top + 1; i-- > 0;) {
        if (!has_grad[i] || !relevant[i] || !nodes_[i].requires_grad) continue;
        vjp(i, grads[i], mode, relevant, grads, has_grad);
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
        if (w.id() <= top && has_grad[w.id()]) {
            out.push_back(grads[w.id()]);
        } else {
            out.push_back(constant(Tensor(w.shape(), 0.0)));
        }
    }
    return out;
}

std::vector<Tensor> Tape::gradients(const Var& loss, std::span<const Var> wrt) {
    std::vector<Tensor> out;
    for (const Var& g : grad(loss, wrt, GradMode::Value)) out.push_back(g.value());
    return out;
}

}  // namespace veegan::nd
