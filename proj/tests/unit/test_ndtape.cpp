#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "veegan/grad_check.hpp"
#include "veegan/ops.hpp"
#include "veegan/rng.hpp"
#include "veegan/tape.hpp"

using namespace veegan::nd;

namespace {

// Brute-force reference for op(a) * op(b).
Tensor loop_matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    auto ea = [&](std::size_t i, std::size_t k) { return ta ? a.at(k, i) : a.at(i, k); };
    auto eb = [&](std::size_t k, std::size_t j) { return tb ? b.at(j, k) : b.at(k, j); };
    const std::size_t m = ta ? a.shape()[1] : a.shape()[0];
    const std::size_t kk = ta ? a.shape()[0] : a.shape()[1];
    const std::size_t n = tb ? b.shape()[0] : b.shape()[1];
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < kk; ++k) s += ea(i, k) * eb(k, j);
            c.at(i, j) = s;
        }
    return c;
}

// Central differences of a scalar function, independent of the tape's backward rules.
Tensor finite_diff(const std::function<double(const Tensor&)>& f, Tensor x, double h) {
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double o = x[i];
        x[i] = o + h;
        const double up = f(x);
        x[i] = o - h;
        const double down = f(x);
        x[i] = o;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

double max_rel_err(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    return m;
}

}  // namespace

TEST_CASE("matmul: identity and brute-force oracle") {
    Rng rng(11);
    Tape tape;
    Tensor a = randn(rng, {3, 5});
    Var out = matmul(tape.constant(Tensor::identity(3)), tape.constant(a));
    CHECK(out.value() == a);

    Tensor x = randn(rng, {3, 4});
    Tensor y = randn(rng, {4, 2});
    CHECK(max_abs_diff(kernels::matmul(x, y), loop_matmul(x, y, false, false)) < 1e-12);

    Tensor xt = randn(rng, {4, 3});
    Tensor yt = randn(rng, {2, 4});
    CHECK(max_abs_diff(kernels::matmul(xt, y, true, false), loop_matmul(xt, y, true, false)) < 1e-12);
    CHECK(max_abs_diff(kernels::matmul(x, yt, false, true), loop_matmul(x, yt, false, true)) < 1e-12);
    CHECK(max_abs_diff(kernels::matmul(xt, yt, true, true), loop_matmul(xt, yt, true, true)) < 1e-12);
}

TEST_CASE("shape mismatch names op and shapes") {
    Tape tape;
    Var a = tape.constant(Tensor({3, 4}));
    Var b = tape.constant(Tensor({3, 2}));
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("[3x4]") != std::string::npos);
        CHECK(msg.find("[3x2]") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(mul(a, tape.constant(Tensor({3}))), ShapeError);
    // Row broadcast over the leading dimension is allowed.
    CHECK(add(a, tape.constant(Tensor({4}, 1.0))).value()[0] == 1.0);
}

TEST_CASE("log_sigmoid and sigmoid stability") {
    Tape tape;
    CHECK(log_sigmoid(tape.constant(Tensor::scalar(0.0))).item() == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    std::vector<double> ts;
    for (double t = -1e4; t <= 1e4; t += 37.3) ts.push_back(t);
    ts.push_back(1e4);
    ts.push_back(-1e4);
    Tensor t({ts.size()}, ts);
    Var v = tape.constant(t);
    Tensor pos = log_sigmoid(v).value();
    Tensor negs = log_sigmoid(neg(v)).value();
    Tensor sp = softplus(v).value();
    Tensor spn = softplus(neg(v)).value();
    Tensor sg = sigmoid(v).value();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        CHECK(pos[i] + negs[i] == doctest::Approx(-sp[i] - spn[i]).epsilon(1e-12));
        CHECK(sg[i] >= 0.0);
        CHECK(sg[i] <= 1.0);
    }
    // Strictly inside (0, 1) where double precision can represent it.
    CHECK(sigmoid(tape.constant(Tensor::scalar(30.0))).item() < 1.0);
    CHECK(sigmoid(tape.constant(Tensor::scalar(-700.0))).item() > 0.0);
}

TEST_CASE("backward: trivial gradients") {
    Rng rng(3);
    Tape tape;
    Var x = tape.leaf(randn(rng, {2, 3}));
    Var other = tape.leaf(randn(rng, {4}));
    Var loss = sum(x);
    std::array<Var, 2> wrt{x, other};
    auto g = tape.gradients(loss, wrt);
    CHECK(g[0] == Tensor({2, 3}, 1.0));
    CHECK(g[1] == Tensor({4}, 0.0));

    CHECK_THROWS_AS(tape.grad(x, wrt), ShapeError);
}

TEST_CASE("backward: sum(tanh(W x)) matches central differences") {
    Rng rng(5);
    Tensor w = randn(rng, {4, 3});
    Tensor x = randn(rng, {3, 2});
    auto loss_of = [&](const Tensor& wv) {
        Tape t;
        return sum(tanh(matmul(t.constant(wv), t.constant(x)))).item();
    };
    Tape tape;
    Var wv = tape.leaf(w);
    Var loss = sum(tanh(matmul(wv, tape.constant(x))));
    std::array<Var, 1> wrt{wv};
    Tensor g = tape.gradients(loss, wrt)[0];
    CHECK(max_rel_err(g, finite_diff(loss_of, w, 1e-5)) < 1e-5);
}

TEST_CASE("backward accumulates over fan-out") {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({1.5, -2.0}));
    Var y = add(mul(x, x), x);  // x^2 + x
    std::array<Var, 1> wrt{x};
    Tensor g = tape.gradients(sum(y), wrt)[0];
    CHECK(g[0] == doctest::Approx(4.0));
    CHECK(g[1] == doctest::Approx(-3.0));
}

TEST_CASE("second-order gradients through a recorded backward pass") {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({0.7, -1.3}));
    Var f = sum(mul(mul(x, x), x));
    std::array<Var, 1> wrt{x};
    Var g = tape.grad(f, wrt, GradMode::CreateGraph)[0];
    CHECK(g.value()[0] == doctest::Approx(3 * 0.49));
    Tensor h = tape.gradients(sum(g), wrt)[0];
    CHECK(h[0] == doctest::Approx(6 * 0.7));
    CHECK(h[1] == doctest::Approx(6 * -1.3));

    // d/dx of the gradient of sum(log_sigmoid(tanh(a*x))) vs finite differences of the first derivative.
    Rng rng(9);
    Tensor a0 = randn(rng, {3, 3});
    Tensor x0 = randn(rng, {3, 2});
    auto first_grad_sum = [&](const Tensor& xv) {
        Tape t;
        Var xx = t.leaf(xv);
        Var l = sum(log_sigmoid(tanh(matmul(t.constant(a0), xx))));
        std::array<Var, 1> w{xx};
        Tensor gg = t.gradients(l, w)[0];
        double s = 0;
        for (double v : gg.data()) s += v * v;
        return s;
    };
    Tape t2;
    Var xx = t2.leaf(x0);
    Var l = sum(log_sigmoid(tanh(matmul(t2.constant(a0), xx))));
    std::array<Var, 1> w{xx};
    Var gg = t2.grad(l, w, GradMode::CreateGraph)[0];
    Tensor hv = t2.gradients(squared_l2(gg), w)[0];
    CHECK(max_rel_err(hv, finite_diff(first_grad_sum, x0, 1e-5)) < 1e-6);
}

TEST_CASE("non-finite results are surfaced") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(1e308));
    CHECK_THROWS_AS(scale(x, 10.0), NonFiniteError);
    CHECK_THROWS_AS(tape.leaf(Tensor::scalar(std::nan(""))), NonFiniteError);
}

TEST_CASE("grad_check contracts") {
    Tensor three = Tensor::scalar(3.0);
    CHECK(grad_check([](Tape&, const Var& x) { return mul(x, x); }, three, 1e-5) < 1e-8);
    CHECK(grad_check([](Tape& t, const Var&) { return t.constant(Tensor::scalar(2.0)); }, three, 1e-5) == 0.0);
    CHECK_THROWS_AS(grad_check([](Tape&, const Var& x) { return x; }, three, 0.0), std::invalid_argument);

    Rng rng(21);
    Tensor w1 = randn(rng, {5, 3}), w2 = randn(rng, {1, 5});
    Tensor b1 = randn(rng, {5});
    Tensor input = randn(rng, {4, 3});
    auto mlp_loss = [&](Tape& t, const Var& w) {
        Var h = tanh(add(matmul(t.constant(input), w, false, true), t.constant(b1)));
        return mean(log_sigmoid(matmul(h, t.constant(w2), false, true)));
    };
    CHECK(grad_check(mlp_loss, w1, 1e-5) < 1e-4);

    auto blows_up = [](Tape&, const Var& x) { return sum(scale(x, x.value()[0] > 3.0 ? 1e308 : 1.0)); };
    CHECK_THROWS_AS(grad_check(blows_up, Tensor::vector({3.0, 1e10}), 1e-5), NonFiniteError);
}

TEST_CASE("property: every primitive passes grad_check over random seeds") {
    using Builder = std::function<Var(Tape&, const Var&, Rng&)>;
    struct Case {
        const char* name;
        Shape shape;
        Builder f;
    };
    // Each builder draws its constants from the Rng it is handed so every evaluation sees the same ones.
    std::vector<Case> cases{
        {"matmul_lhs", {3, 4}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(matmul(x, t.constant(randn(r, {4, 2}))))); }},
        {"matmul_rhs_t", {2, 4}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(matmul(t.constant(randn(r, {3, 4})), x, false, true))); }},
        {"matmul_tt", {4, 3}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(matmul(x, t.constant(randn(r, {2, 4})), true, true))); }},
        {"add_bcast", {3}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(add(t.constant(randn(r, {4, 3})), x))); }},
        {"sub", {2, 3}, [](Tape& t, const Var& x, Rng& r) { return squared_l2(sub(t.constant(randn(r, {2, 3})), x)); }},
        {"sub_bcast", {3}, [](Tape& t, const Var& x, Rng& r) { return squared_l2(sub(t.constant(randn(r, {2, 3})), x)); }},
        {"mul", {2, 3}, [](Tape& t, const Var& x, Rng& r) { return sum(mul(x, mul(x, t.constant(randn(r, {2, 3}))))); }},
        {"mul_bcast", {3}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(mul(t.constant(randn(r, {5, 3})), x))); }},
        {"neg_scale_shift", {4}, [](Tape&, const Var& x, Rng&) { return sum(tanh(add_scalar(scale(neg(x), 0.7), 0.3))); }},
        {"relu", {6}, [](Tape&, const Var& x, Rng&) { return squared_l2(relu(x)); }},
        {"leaky_relu", {6}, [](Tape&, const Var& x, Rng&) { return squared_l2(leaky_relu(x, 0.2)); }},
        {"sigmoid", {2, 3}, [](Tape&, const Var& x, Rng&) { return sum(sigmoid(scale(x, 2.0))); }},
        {"log_sigmoid", {2, 3}, [](Tape&, const Var& x, Rng&) { return sum(log_sigmoid(scale(x, 3.0))); }},
        {"softplus", {5}, [](Tape&, const Var& x, Rng&) { return sum(softplus(x)); }},
        {"mean", {3, 2}, [](Tape&, const Var& x, Rng&) { return mean(tanh(x)); }},
        {"sum_rows", {4, 3}, [](Tape& t, const Var& x, Rng& r) { return sum(mul(tanh(sum_rows(x)), t.constant(randn(r, {3})))); }},
        {"broadcast_rows", {3}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(mul(broadcast_rows(x, 4), t.constant(randn(r, {4, 3}))))); }},
        {"expand_scalar", {2}, [](Tape&, const Var& x, Rng&) { return sum(tanh(expand_scalar(sum(mul(x, x)), {3}))); }},
        {"concat_slice", {3, 2}, [](Tape& t, const Var& x, Rng& r) {
             Var c = concat_cols(x, tanh(t.constant(randn(r, {3, 3}))));
             return sum(tanh(mul(slice_cols(c, 1, 3), t.constant(randn(r, {3, 3})))));
         }},
        {"concat_rhs", {3, 2}, [](Tape& t, const Var& x, Rng& r) { return squared_l2(tanh(concat_cols(t.constant(randn(r, {3, 1})), x))); }},
        {"pad_cols", {2, 2}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(mul(pad_cols(x, 1, 4), t.constant(randn(r, {2, 4}))))); }},
    };
    for (const auto& c : cases) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng draw(seed);
            Tensor at = randn(draw, c.shape);
            ScalarFn f = [&](Tape& t, const Var& x) {
                Rng consts(1000 + seed);
                return c.f(t, x, consts);
            };
            const double err = grad_check(f, at, 1e-5);
            INFO(c.name << " seed " << seed << " err " << err);
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("tape replay is deterministic") {
    auto run = [] {
        Rng rng(77);
        Tape tape;
        Var w = tape.leaf(randn(rng, {8, 3}));
        Var x = tape.constant(randn(rng, {16, 3}));
        Var loss = mean(log_sigmoid(matmul(tanh(matmul(x, w, false, true)), tape.constant(randn(rng, {8, 1})))));
        std::array<Var, 1> wrt{w};
        return std::pair{loss.item(), tape.gradients(loss, wrt)[0]};
    };
    auto a = run();
    auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("rng: determinism, moments, empty shapes, sub-streams") {
    Rng a(42), b(42);
    CHECK(randn(a, {5, 5}) == randn(b, {5, 5}));
    CHECK(randn(a, {0}).size() == 0);

    Rng big(123);
    Tensor draws = randn(big, {1000000});
    double m = 0, v = 0;
    for (double d : draws.data()) m += d;
    m /= draws.size();
    for (double d : draws.data()) v += (d - m) * (d - m);
    v /= draws.size() - 1;
    CHECK(std::abs(m) < 0.01);
    CHECK(std::abs(v - 1.0) < 0.02);

    Tensor u = rand_uniform(big, {1000}, -2.0, 3.0);
    for (double d : u.data()) {
        CHECK(d >= -2.0);
        CHECK(d < 3.0);
    }

    // A child stream does not depend on how much of the parent was consumed.
    Rng parent(9);
    Rng c1 = parent.split("generator");
    parent.normal();
    parent.normal();
    Rng c2 = parent.split("generator");
    CHECK(c1.normal() == c2.normal());
    CHECK(parent.split("generator").normal() != parent.split("data").normal());
}
