#include <cmath>
#include <numbers>

#include "doctest.h"
#include "veegan/bound.hpp"

using namespace veegan;
using bound::LinearGaussianFamily;

namespace {

double log_normal_pdf(double x, double mean, double var) {
    return -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

struct Estimate {
    double mean;
    double stderr_;
};

Estimate mc_lhs(const LinearGaussianFamily& f, std::size_t n, std::uint64_t seed) {
    nd::Rng rng(seed);
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = rng.normal();
        const double v = -log_normal_pdf(z, 0.0, f.a * f.a + 1.0);
        s += v;
        s2 += v * v;
    }
    const double m = s / n;
    return {m, std::sqrt((s2 / n - m * m) / n)};
}

/// E_q[log q(z, x) - log p(z, x) - log p0(z)] with q(z, x) = p0(z) q(x|z), p(z, x) = p(x) p(z|x).
Estimate mc_rhs(const LinearGaussianFamily& f, std::size_t n, std::uint64_t seed) {
    nd::Rng rng(seed);
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = rng.normal();
        const double x = f.b * z + f.s * rng.normal();
        const double log_q = log_normal_pdf(z, 0, 1) + log_normal_pdf(x, f.b * z, f.s * f.s);
        const double log_p = log_normal_pdf(x, 0, 1) + log_normal_pdf(z, f.a * x, 1);
        const double v = log_q - log_p - log_normal_pdf(z, 0, 1);
        s += v;
        s2 += v * v;
    }
    const double m = s / n;
    return {m, std::sqrt((s2 / n - m * m) / n)};
}

}  // namespace

TEST_CASE("lhs cross-entropy closed form") {
    CHECK(bound::lhs_cross_entropy({0, 0, 1}) == doctest::Approx(0.5 * std::log(2 * std::numbers::pi) + 0.5).epsilon(1e-15));
    CHECK(bound::lhs_cross_entropy({0, 0, 1}) == doctest::Approx(1.418939).epsilon(1e-6));
    // 0.5 log(4 pi) + 1/4.
    CHECK(bound::lhs_cross_entropy({1, 0, 1}) == doctest::Approx(1.5155121).epsilon(1e-7));
    // Increasing in |a|: centred finite-difference derivative is positive for a > 0 and negative for a < 0.
    for (int i = 1; i <= 40; ++i) {
        const double a = 0.1 * i, h = 1e-6;
        const double d = (bound::lhs_cross_entropy({a + h, 0, 1}) - bound::lhs_cross_entropy({a - h, 0, 1})) / (2 * h);
        CHECK(d > 0);
        const double dn = (bound::lhs_cross_entropy({-a + h, 0, 1}) - bound::lhs_cross_entropy({-a - h, 0, 1})) / (2 * h);
        CHECK(dn < 0);
    }
}

TEST_CASE("closed forms agree with Monte Carlo at 1e6 samples") {
    for (const LinearGaussianFamily f : {LinearGaussianFamily{1, 0, 1}, LinearGaussianFamily{0.5, -0.7, 0.6},
                                         LinearGaussianFamily{-1.2, 1.5, 1.8}, LinearGaussianFamily{1, 1, 0.5}}) {
        const auto l = mc_lhs(f, 1000000, 101);
        CHECK(std::abs(l.mean - bound::lhs_cross_entropy(f)) < 3 * l.stderr_);
        const auto r = mc_rhs(f, 1000000, 202);
        CHECK(std::abs(r.mean - bound::rhs_bound(f)) < 3 * r.stderr_);
    }
}

TEST_CASE("bound examples and equality point") {
    const LinearGaussianFamily id{0, 0, 1};
    CHECK(std::abs(bound::joint_kl(id)) < 1e-15);
    CHECK(bound::rhs_bound(id) == doctest::Approx(bound::lhs_cross_entropy(id)).epsilon(1e-15));
    CHECK(bound::rhs_bound({1, 1, 0.1}) > bound::lhs_cross_entropy({1, 1, 0.1}));
    // Any perturbation away from the coinciding joints gives a strictly positive KL.
    for (const LinearGaussianFamily f : {LinearGaussianFamily{1e-3, 0, 1}, LinearGaussianFamily{0, 1e-3, 1},
                                         LinearGaussianFamily{0, 0, 1 + 1e-3}, LinearGaussianFamily{0, 0, 1 - 1e-3}}) {
        CHECK(bound::joint_kl(f) > 0);
        CHECK(bound::rhs_bound(f) > bound::lhs_cross_entropy(f));
    }
    CHECK_THROWS_AS(bound::rhs_bound({0, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(bound::lhs_cross_entropy({NAN, 0, 1}), std::invalid_argument);
}

TEST_CASE("bound holds on the full grid") {
    const auto grid = bound::bound_grid();
    CHECK(grid.size() == 21 * 21 * 5);
    const auto v = bound::check_grid(grid);
    CHECK(v.holds());
    CHECK(v.min_margin >= -1e-9);
    CHECK(v.worst.a == 0.0);
    CHECK(v.worst.b == 0.0);
    CHECK(v.worst.s == 1.0);
    CHECK(std::abs(v.min_margin) < 1e-12);

    // Swapping the two sides turns every strict point into a violation.
    auto swapped = grid;
    for (auto& g : swapped) std::swap(g.lhs, g.rhs);
    CHECK(bound::check_grid(swapped).violations == grid.size() - 1);
}

TEST_CASE("Gauss-Hermite rule integrates normal moments") {
    const auto q = bound::gauss_hermite(20);
    // E[Z^k] = (k-1)!! for even k, 0 for odd k; exact up to degree 39.
    double dfact = 1;
    for (int k = 0; k <= 12; ++k) {
        double m = 0;
        for (std::size_t i = 0; i < 20; ++i) m += q.weights[i] * std::pow(q.nodes[i], k);
        if (k % 2 == 1) {
            CHECK(std::abs(m) < 1e-12);
        } else {
            if (k >= 2) dfact *= (k - 1);
            CHECK(m == doctest::Approx(dfact).epsilon(1e-11));
        }
    }
    CHECK_THROWS_AS(bound::gauss_hermite(0), std::invalid_argument);
}

namespace {

nn::NetParams identity_net() {
    nn::NetParams n;
    n.layers.push_back({nd::Tensor({1, 1}, 1.0), nd::Tensor({1}, 0.0)});
    return n;
}

}  // namespace

TEST_CASE("gaussian optimum check: analytic optimum and untrained model") {
    train::TrainedModel m;
    m.config.latent_dim = 1;
    m.config.extra_noise_dims = 0;
    m.data_dim = 1;
    m.generator = identity_net();
    m.reconstructor = identity_net();
    const auto r = bound::gaussian_optimum_check(m);
    CHECK(std::abs(r.mean) < 1e-12);
    CHECK(std::abs(r.std - 1.0) < 1e-12);
    CHECK(r.recon_mse < 1e-24);
    CHECK(r.pass());

    train::TrainerConfig cfg;
    cfg.latent_dim = 1;
    cfg.extra_noise_dims = 0;
    cfg.seed = 9;
    const auto nets = train::init_networks(cfg, 1);
    train::TrainedModel u;
    u.config = cfg;
    u.data_dim = 1;
    u.generator = nets.generator;
    u.reconstructor = nets.reconstructor;
    CHECK_FALSE(bound::gaussian_optimum_check(u).pass());

    train::TrainedModel no_f = m;
    no_f.reconstructor.reset();
    CHECK_THROWS_AS(bound::gaussian_optimum_check(no_f), std::invalid_argument);
}
