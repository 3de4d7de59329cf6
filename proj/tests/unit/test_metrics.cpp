#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "veegan/metrics.hpp"

using namespace veegan;
using nd::Tensor;

namespace {

/// Brute-force nearest mode: full distance table, first index on ties.
std::size_t brute_nearest(const Tensor& x, std::size_t i, const Tensor& means, double* dist) {
    std::vector<double> d(means.rows());
    for (std::size_t k = 0; k < means.rows(); ++k) {
        double s = 0;
        for (std::size_t c = 0; c < means.cols(); ++c) s += std::pow(x.at(i, c) - means.at(k, c), 2);
        d[k] = std::sqrt(s);
    }
    const auto it = std::min_element(d.begin(), d.end());
    *dist = *it;
    return static_cast<std::size_t>(it - d.begin());
}

std::size_t brute_modes(const Tensor& x, const synth::MixtureSpec& spec) {
    std::vector<int> hit(spec.n_modes(), 0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double d;
        const std::size_t k = brute_nearest(x, i, spec.means, &d);
        if (d <= spec.quality_radius()) hit[k] = 1;
    }
    return static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
}

/// Generator with one affine layer and identity output.
nn::NetParams linear_generator(const Tensor& w, const Tensor& b) {
    nn::NetParams g;
    g.layers.push_back({w, b});
    g.output = nn::Activation::Identity;
    return g;
}

}  // namespace

TEST_CASE("high_quality_mask basics") {
    const auto ring = synth::make_ring();
    auto mask = metrics::high_quality_mask(ring.means, ring);
    CHECK(std::all_of(mask.begin(), mask.end(), [](bool b) { return b; }));

    // 4 sigma radially outward from mode 0 is still nearest to mode 0 but outside 3 sigma.
    Tensor far = Tensor::from_rows({{2.0 + 4 * ring.sigma, 0.0}});
    CHECK_FALSE(metrics::high_quality_mask(far, ring)[0]);
    Tensor edge = Tensor::from_rows({{2.0 + 2.9 * ring.sigma, 0.0}});
    CHECK(metrics::high_quality_mask(edge, ring)[0]);

    CHECK_THROWS_AS(metrics::high_quality_mask(Tensor({3, 3}), ring), nd::ShapeError);
    CHECK_THROWS_AS(metrics::modes_captured(Tensor({3}), ring), nd::ShapeError);
}

TEST_CASE("true ring samples are high quality at the chi-square rate") {
    const auto ring = synth::make_ring();
    nd::Rng rng(7);
    const Tensor x = synth::sample_batch(ring, rng, 10000).samples;
    const auto s = metrics::evaluate_samples(x, ring);
    // P(chi^2_2 <= 9) = 1 - exp(-9/2).
    const double p = 1.0 - std::exp(-4.5);
    CHECK(std::abs(s.hq_fraction - p) < 0.005);
    CHECK(s.modes == 8);
    CHECK(s.n_samples == 10000);
}

TEST_CASE("modes_captured examples") {
    const auto ring = synth::make_ring();
    Tensor at0({50, 2});
    for (std::size_t i = 0; i < 50; ++i) {
        at0.at(i, 0) = ring.means.at(0, 0);
        at0.at(i, 1) = ring.means.at(0, 1);
    }
    CHECK(metrics::modes_captured(at0, ring) == 1);
    CHECK(metrics::modes_captured(ring.means, ring) == 8);

    // Three HQ samples near modes {1, 1, 4} and two far-away samples.
    const double e = ring.sigma;
    Tensor mixed = Tensor::from_rows({{ring.means.at(1, 0) + e, ring.means.at(1, 1)},
                                      {ring.means.at(1, 0), ring.means.at(1, 1) - 2 * e},
                                      {ring.means.at(4, 0) - e, ring.means.at(4, 1) + e},
                                      {0.0, 0.0},
                                      {5.0, 5.0}});
    CHECK(metrics::modes_captured(mixed, ring) == 2);
    CHECK(brute_modes(mixed, ring) == 2);
    const auto near = metrics::nearest_mode(mixed, ring);
    CHECK(near[0] == 1);
    CHECK(near[1] == 1);
    CHECK(near[2] == 4);
}

TEST_CASE("nearest-mode tie goes to the lowest index") {
    synth::MixtureSpec spec;
    spec.kind = "pair";
    spec.means = Tensor::from_rows({{-1.0, 0.0}, {1.0, 0.0}});
    spec.sigma = 0.1;
    CHECK(metrics::nearest_mode(Tensor::from_rows({{0.0, 3.0}}), spec)[0] == 0);
}

TEST_CASE("modes and mask agree with brute force; permutation invariant; monotone") {
    const auto grid = synth::make_grid();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        nd::Rng rng(seed);
        // Wide scatter so both high- and low-quality samples occur.
        Tensor x = nd::rand_uniform(rng, {300, 2}, -5.0, 5.0);
        const std::size_t m = metrics::modes_captured(x, grid);
        CHECK(m == brute_modes(x, grid));
        const auto mask = metrics::high_quality_mask(x, grid);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double d;
            brute_nearest(x, i, grid.means, &d);
            CHECK(mask[i] == (d <= grid.quality_radius()));
        }

        // Reverse sample order.
        Tensor rev({300, 2});
        for (std::size_t i = 0; i < 300; ++i)
            for (std::size_t c = 0; c < 2; ++c) rev.at(i, c) = x.at(299 - i, c);
        CHECK(metrics::modes_captured(rev, grid) == m);

        // Reverse component order.
        auto perm = grid;
        for (std::size_t k = 0; k < grid.n_modes(); ++k)
            for (std::size_t c = 0; c < 2; ++c) perm.means.at(k, c) = grid.means.at(grid.n_modes() - 1 - k, c);
        CHECK(metrics::modes_captured(x, perm) == m);

        // Adding samples never loses a mode.
        std::size_t prev = 0;
        for (std::size_t n = 30; n <= 300; n += 30) {
            std::vector<double> head(x.data().begin(), x.data().begin() + static_cast<std::ptrdiff_t>(2 * n));
            const std::size_t cur = metrics::modes_captured(Tensor({n, 2}, head), grid);
            CHECK(cur >= prev);
            prev = cur;
        }
    }
}

TEST_CASE("evaluate_samples: degenerate sampler, true sampler, empty set") {
    const auto ring = synth::make_ring();
    Tensor one({2500, 2});
    for (std::size_t i = 0; i < 2500; ++i) {
        one.at(i, 0) = ring.means.at(3, 0);
        one.at(i, 1) = ring.means.at(3, 1);
    }
    auto s = metrics::evaluate_samples(one, ring);
    CHECK(s.modes == 1);
    CHECK(s.hq_fraction == 1.0);

    nd::Rng rng(11);
    s = metrics::evaluate_samples(synth::sample_batch(ring, rng, 2500).samples, ring);
    CHECK(s.modes == 8);
    const double p = 1.0 - std::exp(-4.5);
    CHECK(std::abs(s.hq_fraction - p) < 3 * std::sqrt(p * (1 - p) / 2500));

    CHECK_THROWS_AS(metrics::evaluate_samples(Tensor({0, 2}), ring), std::invalid_argument);
}

TEST_CASE("hq fraction of the true high-dim sampler matches chi-square with 30 degrees of freedom") {
    nd::Rng build(3);
    const auto spec = synth::make_highdim(build);
    nd::Rng rng(5);
    const std::size_t n = 5000;
    const auto s = metrics::evaluate_samples(synth::sample_batch(spec, rng, n).samples, spec);
    // Noise lives in the 30-dim subspace; radius 10 sigma gives P(chi^2_30 <= 100), which is 1 to 1e-12.
    CHECK(s.hq_fraction == 1.0);
    CHECK(s.modes == 10);
}

TEST_CASE("summaries and aggregation") {
    const auto s = metrics::summarize({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.std == doctest::Approx(std::sqrt(1.25)));

    std::vector<metrics::RunMetrics> runs{{1, 8, 0.5, 0.1}, {2, 6, 0.3, 0.3}};
    const auto rep = metrics::aggregate(runs, 2500);
    CHECK(rep.modes.mean == 7.0);
    CHECK(rep.modes.std == 1.0);
    CHECK(rep.hq_fraction.mean == doctest::Approx(0.4));
    REQUIRE(rep.ivom.has_value());
    CHECK(rep.ivom->mean == doctest::Approx(0.2));
    runs[1].ivom.reset();
    CHECK_FALSE(metrics::aggregate(runs, 2500).ivom.has_value());
    CHECK_THROWS_AS(metrics::aggregate({}, 2500), std::invalid_argument);
}

TEST_CASE("ivom: realizable targets") {
    nd::Rng init(21);
    const std::vector<std::size_t> dims{3, 16, 2};
    const auto g = nn::init_params(init, dims, nn::Activation::Tanh);
    nd::Rng zr(22);
    const Tensor targets = nn::mlp_apply(g, nd::randn(zr, {20, 3}));
    nd::Rng rng(23);
    const auto res = metrics::ivom(g, targets, {}, rng);
    CHECK(res.mean_mse < 1e-4);
    CHECK(res.diverged == 0);
    CHECK(res.per_target.size() == 20);
}

TEST_CASE("ivom: constant generator gives the exact mean squared distance") {
    const Tensor c = Tensor::vector({0.5, -1.5});
    const auto g = linear_generator(Tensor({2, 3}, 0.0), c);
    const Tensor targets = Tensor::from_rows({{1.0, 2.0}, {-3.0, 0.0}, {0.5, -1.5}});
    nd::Rng rng(1);
    const auto res = metrics::ivom(g, targets, {}, rng);
    double expect = 0;
    for (std::size_t i = 0; i < 3; ++i)
        expect += (std::pow(targets.at(i, 0) - 0.5, 2) + std::pow(targets.at(i, 1) + 1.5, 2)) / 2.0;
    expect /= 3.0;
    CHECK(res.mean_mse == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("ivom: linear generator matches the least-squares residual") {
    // G(z) = W z with W [5 x 2]; the optimum is the projection of x on col(W).
    nd::Rng wr(31);
    const Tensor w = nd::randn(wr, {5, 2});
    const auto g = linear_generator(w, Tensor({5}, 0.0));
    const Tensor targets = nd::randn(wr, {40, 5});

    Eigen::MatrixXd W(5, 2);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 2; ++c) W(r, c) = w.at(r, c);
    const Eigen::MatrixXd normal = W.transpose() * W;
    double oracle = 0;
    for (std::size_t i = 0; i < targets.rows(); ++i) {
        Eigen::VectorXd x(5);
        for (int c = 0; c < 5; ++c) x(c) = targets.at(i, c);
        const Eigen::VectorXd z = normal.ldlt().solve(W.transpose() * x);
        oracle += (x - W * z).squaredNorm() / 5.0;
    }
    oracle /= static_cast<double>(targets.rows());

    nd::Rng rng(32);
    metrics::IvomConfig cfg;
    const auto res = metrics::ivom(g, targets, cfg, rng);
    CHECK(std::abs(res.mean_mse - oracle) < 1e-6);
}

TEST_CASE("ivom: overflowing generator is flagged as diverged") {
    const auto g = linear_generator(Tensor({2, 2}, 1e200), Tensor({2}, 0.0));
    const Tensor targets = Tensor::from_rows({{1.0, 1.0}, {0.0, 2.0}});
    nd::Rng rng(3);
    const auto res = metrics::ivom(g, targets, {}, rng);
    CHECK(res.diverged == 2);
    CHECK(res.mean_mse == std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(metrics::ivom(g, Tensor({2, 3}), {}, rng), nd::ShapeError);
}

TEST_CASE("evaluate is deterministic given models and eval seed") {
    train::TrainedModel m;
    m.config.latent_dim = 2;
    m.config.extra_noise_dims = 1;
    nd::Rng init(4);
    const std::vector<std::size_t> dims{3, 8, 2};
    m.generator = nn::init_params(init, dims, nn::Activation::Tanh);
    m.data_dim = 2;
    const auto ring = synth::make_ring();
    metrics::EvalConfig cfg;
    cfg.ivom = true;
    cfg.ivom_targets = 10;
    cfg.ivom_config.steps = 20;
    const auto a = metrics::evaluate({m, m}, ring, cfg);
    const auto b = metrics::evaluate({m, m}, ring, cfg);
    CHECK(a.runs[0].hq_fraction == b.runs[0].hq_fraction);
    CHECK(*a.runs[0].ivom == *b.runs[0].ivom);
    CHECK(a.modes.std == 0.0);
    CHECK(a.runs.size() == 2);
}
