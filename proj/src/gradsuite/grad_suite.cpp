#include "veegan/grad_suite.hpp"

#include <array>
#include <chrono>
#include <functional>
#include <limits>

#include "veegan/grad_check.hpp"
#include "veegan/losses.hpp"
#include "veegan/mlp.hpp"
#include "veegan/ops.hpp"
#include "veegan/rng.hpp"

namespace veegan::gradcheck {

using namespace veegan::nd;

bool SuiteReport::pass() const {
    if (cases.empty()) return false;
    for (const auto& c : cases)
        if (!c.ok) return false;
    return true;
}

namespace {

using Builder = std::function<Var(Tape&, const Var&, Rng&)>;

struct Case {
    const char* name;
    Shape shape;
    Builder f;
};

// Small MLP whose first weight matrix is the variable under test.
Var mlp_with_first_weight(Tape& t, const nn::NetParams& net, const Var& w0, const Var& input) {
    std::vector<Var> params = nn::bind_constant(t, net);
    params[0] = w0;
    return nn::mlp_forward(net, params, input);
}

nn::NetParams small_net(Rng& r, std::size_t in, std::size_t hidden, std::size_t out, nn::Activation act) {
    const std::array<std::size_t, 3> dims{in, hidden, out};
    return nn::init_params(r, dims, act);
}

std::vector<Case> cases() {
    return {
        {"matmul_lhs", {3, 4}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(matmul(x, t.constant(randn(r, {4, 2}))))); }},
        {"matmul_rhs_t", {2, 4}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(matmul(t.constant(randn(r, {3, 4})), x, false, true))); }},
        {"matmul_lhs_t", {4, 3}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(matmul(x, t.constant(randn(r, {4, 2})), true, false))); }},
        {"add_bcast", {3}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(add(t.constant(randn(r, {4, 3})), x))); }},
        {"sub", {2, 3}, [](Tape& t, const Var& x, Rng& r) { return squared_l2(sub(t.constant(randn(r, {2, 3})), x)); }},
        {"mul", {2, 3}, [](Tape& t, const Var& x, Rng& r) { return sum(mul(x, mul(x, t.constant(randn(r, {2, 3}))))); }},
        {"neg", {4}, [](Tape&, const Var& x, Rng&) { return sum(tanh(neg(x))); }},
        {"scale", {4}, [](Tape&, const Var& x, Rng&) { return sum(tanh(scale(x, 0.7))); }},
        {"add_scalar", {4}, [](Tape&, const Var& x, Rng&) { return sum(tanh(add_scalar(x, 0.3))); }},
        {"tanh", {2, 3}, [](Tape&, const Var& x, Rng&) { return sum(tanh(x)); }},
        {"relu", {6}, [](Tape&, const Var& x, Rng&) { return squared_l2(relu(x)); }},
        {"leaky_relu", {6}, [](Tape&, const Var& x, Rng&) { return squared_l2(leaky_relu(x, 0.2)); }},
        {"sigmoid", {2, 3}, [](Tape&, const Var& x, Rng&) { return sum(sigmoid(scale(x, 2.0))); }},
        {"log_sigmoid", {2, 3}, [](Tape&, const Var& x, Rng&) { return sum(log_sigmoid(scale(x, 3.0))); }},
        {"softplus", {5}, [](Tape&, const Var& x, Rng&) { return sum(softplus(x)); }},
        {"sum", {3, 2}, [](Tape&, const Var& x, Rng&) { return tanh(sum(x)); }},
        {"mean", {3, 2}, [](Tape&, const Var& x, Rng&) { return mean(tanh(x)); }},
        {"squared_l2", {3, 2}, [](Tape&, const Var& x, Rng&) { return squared_l2(x); }},
        {"sum_rows", {4, 3}, [](Tape& t, const Var& x, Rng& r) { return sum(mul(tanh(sum_rows(x)), t.constant(randn(r, {3})))); }},
        {"broadcast_rows", {3}, [](Tape& t, const Var& x, Rng& r) {
             return sum(tanh(mul(broadcast_rows(x, 4), t.constant(randn(r, {4, 3})))));
         }},
        {"expand_scalar", {2}, [](Tape&, const Var& x, Rng&) { return sum(tanh(expand_scalar(sum(mul(x, x)), {3}))); }},
        {"concat_cols", {3, 2}, [](Tape& t, const Var& x, Rng& r) {
             return squared_l2(tanh(concat_cols(t.constant(randn(r, {3, 1})), x)));
         }},
        {"slice_cols", {3, 4}, [](Tape& t, const Var& x, Rng& r) {
             return sum(tanh(mul(slice_cols(x, 1, 2), t.constant(randn(r, {3, 2})))));
         }},
        {"pad_cols", {2, 2}, [](Tape& t, const Var& x, Rng& r) { return sum(tanh(mul(pad_cols(x, 1, 4), t.constant(randn(r, {2, 4}))))); }},
        // Generator weight through the full VEEGAN generator loss: D(z, G(z)) plus reconstruction F(G(z)) vs z.
        {"mlp_veegan_generator_loss", {6, 3}, [](Tape& t, const Var& w, Rng& r) {
             const auto g = small_net(r, 3, 6, 2, nn::Activation::Tanh);
             const auto f = small_net(r, 2, 6, 3, nn::Activation::Tanh);
             const auto d = small_net(r, 5, 6, 1, nn::Activation::LeakyRelu);
             Var z = t.constant(randn(r, {4, 3}));
             Var x = mlp_with_first_weight(t, g, w, z);
             Var z_hat = nn::mlp_forward(f, nn::bind_constant(t, f), x);
             Var d_out = nn::mlp_forward(d, nn::bind_constant(t, d), concat_cols(z, x));
             return losses::veegan_generator_loss(d_out, losses::reconstruction_loss(z, z_hat)).value;
         }},
        // Discriminator weight through the joint logistic-regression loss on generated and data pairs.
        {"mlp_joint_lr_loss", {6, 4}, [](Tape& t, const Var& w, Rng& r) {
             const auto d = small_net(r, 4, 6, 1, nn::Activation::Tanh);
             Var gen = t.constant(randn(r, {5, 4}));
             Var dat = t.constant(randn(r, {5, 4}));
             return losses::joint_lr_loss(mlp_with_first_weight(t, d, w, gen), mlp_with_first_weight(t, d, w, dat)).value;
         }},
        // Generator weight through the GAN objective.
        {"mlp_gan_objective", {6, 2}, [](Tape& t, const Var& w, Rng& r) {
             const auto g = small_net(r, 2, 6, 2, nn::Activation::Tanh);
             const auto d = small_net(r, 2, 6, 1, nn::Activation::LeakyRelu);
             Var fake = mlp_with_first_weight(t, g, w, t.constant(randn(r, {4, 2})));
             const auto dp = nn::bind_constant(t, d);
             return losses::gan_objective(nn::mlp_forward(d, dp, fake), nn::mlp_forward(d, dp, t.constant(randn(r, {4, 2})))).value;
         }},
    };
}

}  // namespace

SuiteReport run_suite(std::size_t seeds, double tolerance) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteReport report;
    report.tolerance = tolerance;
    for (const auto& c : cases()) {
        CaseResult res{c.name, 0.0, true};
        for (std::uint64_t seed = 0; seed < seeds; ++seed) {
            Rng draw(seed);
            const Tensor at = randn(draw, c.shape);
            const ScalarFn f = [&](Tape& t, const Var& x) {
                Rng consts(1000 + seed);
                return c.f(t, x, consts);
            };
            double err = 0.0;
            try {
                err = grad_check(f, at, 1e-5);
            } catch (const std::exception&) {
                err = std::numeric_limits<double>::infinity();
            }
            res.max_error = std::max(res.max_error, err);
        }
        res.ok = res.max_error < tolerance;
        report.cases.push_back(res);
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace veegan::gradcheck
