#include "veegan/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace veegan::nd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

bool row_broadcast(const Shape& a, const Shape& b) {
    return b.size() + 1 == a.size() && std::equal(b.begin(), b.end(), a.begin() + 1);
}

void require_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a 2D tensor, got " + shape_str(t.shape()));
}

template <class F>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f) {
    Tensor out = Tensor::uninitialized(a.shape());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i], y[i]);
    } else if (row_broadcast(a.shape(), b.shape())) {
        const std::size_t w = b.size();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i], y[i % w]);
    } else {
        shape_error(op, a.shape(), b.shape());
    }
    return out;
}

template <class F>
Tensor unary(const Tensor& a, F f) {
    Tensor out = Tensor::uninitialized(a.shape());
    auto o = out.data();
    auto x = a.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i]);
    return out;
}

Tape& same_tape(const char* op, const Var& a, const Var& b) {
    if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": unbound Var");
    if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
    return a.tape();
}

Tape& tape_of(const char* op, const Var& a) {
    if (!a.valid()) throw std::invalid_argument(std::string(op) + ": unbound Var");
    return a.tape();
}

Var record1(Op op, Tensor value, const Var& a, Tape::Attr attr = {}) {
    std::array<Var, 1> in{a};
    return tape_of(op_name(op), a).record(op, std::move(value), in, attr);
}

Var record2(Op op, Tensor value, const Var& a, const Var& b, Tape::Attr attr = {}) {
    std::array<Var, 2> in{a, b};
    return same_tape(op_name(op), a, b).record(op, std::move(value), in, attr);
}

}  // namespace

namespace kernels {

double log_sigmoid(double t) noexcept { return std::min(t, 0.0) - std::log1p(std::exp(-std::abs(t))); }

double softplus(double t) noexcept { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) noexcept {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    const std::size_t m = ta ? a.shape()[1] : a.shape()[0];
    const std::size_t k = ta ? a.shape()[0] : a.shape()[1];
    const std::size_t k2 = tb ? b.shape()[1] : b.shape()[0];
    const std::size_t n = tb ? b.shape()[0] : b.shape()[1];
    if (k != k2) shape_error("matmul", a.shape(), b.shape());
    Tensor out = Tensor::uninitialized({m, n});
    ConstMap A(a.data().data(), static_cast<Eigen::Index>(a.shape()[0]), static_cast<Eigen::Index>(a.shape()[1]));
    ConstMap B(b.data().data(), static_cast<Eigen::Index>(b.shape()[0]), static_cast<Eigen::Index>(b.shape()[1]));
    MutMap C(out.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    if (!ta && !tb) C.noalias() = A * B;
    else if (ta && !tb) C.noalias() = A.transpose() * B;
    else if (!ta && tb) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", a, b, [](double x, double y) { return x + y; }); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", a, b, [](double x, double y) { return x - y; }); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", a, b, [](double x, double y) { return x * y; }); }
Tensor scale(const Tensor& a, double factor) { return unary(a, [factor](double x) { return x * factor; }); }

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_rank2("concat_cols", a);
    require_rank2("concat_cols", b);
    if (a.shape()[0] != b.shape()[0]) shape_error("concat_cols", a.shape(), b.shape());
    const std::size_t n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
    Tensor out = Tensor::uninitialized({n, ca + cb});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(a.data().begin() + r * ca, ca, out.data().begin() + r * (ca + cb));
        std::copy_n(b.data().begin() + r * cb, cb, out.data().begin() + r * (ca + cb) + ca);
    }
    return out;
}

Tensor slice_cols(const Tensor& a, std::size_t offset, std::size_t width) {
    require_rank2("slice_cols", a);
    const std::size_t n = a.shape()[0], c = a.shape()[1];
    if (offset + width > c) {
        throw ShapeError("slice_cols: columns [" + std::to_string(offset) + ", " + std::to_string(offset + width) +
                         ") out of range for " + shape_str(a.shape()));
    }
    Tensor out = Tensor::uninitialized({n, width});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(a.data().begin() + r * c + offset, width, out.data().begin() + r * width);
    }
    return out;
}

}  // namespace kernels

Var matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
    Tape::Attr attr;
    attr.flag_a = transpose_a;
    attr.flag_b = transpose_b;
    return record2(Op::MatMul, kernels::matmul(a.value(), b.value(), transpose_a, transpose_b), a, b, attr);
}

Var add(const Var& a, const Var& b) { return record2(Op::Add, kernels::add(a.value(), b.value()), a, b); }
Var sub(const Var& a, const Var& b) { return record2(Op::Sub, kernels::sub(a.value(), b.value()), a, b); }
Var mul(const Var& a, const Var& b) { return record2(Op::Mul, kernels::mul(a.value(), b.value()), a, b); }

Var neg(const Var& a) { return record1(Op::Neg, unary(a.value(), [](double x) { return -x; }), a); }

Var scale(const Var& a, double factor) {
    Tape::Attr attr;
    attr.scalar = factor;
    return record1(Op::Scale, kernels::scale(a.value(), factor), a, attr);
}

Var add_scalar(const Var& a, double offset) {
    Tape::Attr attr;
    attr.scalar = offset;
    return record1(Op::AddScalar, unary(a.value(), [offset](double x) { return x + offset; }), a, attr);
}

Var tanh(const Var& a) { return record1(Op::Tanh, unary(a.value(), [](double x) { return std::tanh(x); }), a); }

Var relu(const Var& a) { return record1(Op::Relu, unary(a.value(), [](double x) { return x > 0 ? x : 0.0; }), a); }

Var leaky_relu(const Var& a, double slope) {
    Tape::Attr attr;
    attr.scalar = slope;
    return record1(Op::LeakyRelu, unary(a.value(), [slope](double x) { return x > 0 ? x : slope * x; }), a, attr);
}

Var sigmoid(const Var& a) { return record1(Op::Sigmoid, unary(a.value(), kernels::sigmoid), a); }
Var log_sigmoid(const Var& a) { return record1(Op::LogSigmoid, unary(a.value(), kernels::log_sigmoid), a); }
Var softplus(const Var& a) { return record1(Op::Softplus, unary(a.value(), kernels::softplus), a); }

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return record1(Op::Sum, Tensor::scalar(s), a);
}

Var mean(const Var& a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var squared_l2(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v * v;
    return record1(Op::SquaredL2, Tensor::scalar(s), a);
}

Var sum_rows(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() == 0) throw ShapeError("sum_rows: rank-0 tensor has no leading dimension");
    Shape s(x.shape().begin() + 1, x.shape().end());
    Tensor out(s);
    const std::size_t w = out.size();
    auto o = out.data();
    auto in = x.data();
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < w; ++c) o[c] += in[r * w + c];
    return record1(Op::SumRows, std::move(out), a);
}

Var broadcast_rows(const Var& a, std::size_t n) {
    const Tensor& x = a.value();
    Shape s{n};
    s.insert(s.end(), x.shape().begin(), x.shape().end());
    Tensor out = Tensor::uninitialized(s);
    const std::size_t w = x.size();
    for (std::size_t r = 0; r < n; ++r) std::copy_n(x.data().begin(), w, out.data().begin() + r * w);
    Tape::Attr attr;
    attr.a = n;
    return record1(Op::BroadcastRows, std::move(out), a, attr);
}

Var expand_scalar(const Var& s, const Shape& shape) {
    if (s.value().rank() != 0) throw ShapeError("expand_scalar: expected rank-0 input, got " + shape_str(s.shape()));
    return record1(Op::ExpandScalar, Tensor(shape, s.value().item()), s);
}

Var concat_cols(const Var& a, const Var& b) {
    return record2(Op::ConcatCols, kernels::concat_cols(a.value(), b.value()), a, b);
}

Var slice_cols(const Var& a, std::size_t offset, std::size_t width) {
    Tape::Attr attr;
    attr.a = offset;
    attr.b = width;
    return record1(Op::SliceCols, kernels::slice_cols(a.value(), offset, width), a, attr);
}

Var pad_cols(const Var& a, std::size_t offset, std::size_t total) {
    const Tensor& x = a.value();
    require_rank2("pad_cols", x);
    const std::size_t n = x.shape()[0], w = x.shape()[1];
    if (offset + w > total) {
        throw ShapeError("pad_cols: " + shape_str(x.shape()) + " does not fit at column " + std::to_string(offset) +
                         " of " + std::to_string(total));
    }
    Tensor out({n, total});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(x.data().begin() + r * w, w, out.data().begin() + r * total + offset);
    }
    Tape::Attr attr;
    attr.a = offset;
    attr.b = total;
    return record1(Op::PadCols, std::move(out), a, attr);
}

}  // namespace veegan::nd
