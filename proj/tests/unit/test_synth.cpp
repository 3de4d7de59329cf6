#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "veegan/mixture.hpp"

using namespace veegan;
using nd::Tensor;

namespace {

double dist(const Tensor& pts, std::size_t i, const Tensor& means, std::size_t k) {
    double s = 0;
    for (std::size_t j = 0; j < pts.shape()[1]; ++j) {
        const double d = pts.at(i, j) - means.at(k, j);
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("make_ring construction") {
    auto s = synth::make_ring(8, 2.0, 0.02);
    CHECK(s.n_modes() == 8);
    CHECK(s.means.at(0, 0) == doctest::Approx(2.0));
    CHECK(s.means.at(0, 1) == doctest::Approx(0.0));
    CHECK(s.means.at(2, 0) == doctest::Approx(0.0));
    CHECK(s.means.at(2, 1) == doctest::Approx(2.0));
    CHECK(dist(s.means, 0, s.means, 1) == doctest::Approx(2 * 2 * std::sin(std::numbers::pi / 8)).epsilon(1e-12));
    CHECK(dist(s.means, 0, s.means, 1) == doctest::Approx(1.5307).epsilon(1e-4));
    CHECK(s.quality_radius_multiplier == 3.0);

    auto one = synth::make_ring(1, 3.0, 0.02);
    CHECK(one.n_modes() == 1);
    CHECK(one.means.at(0, 0) == 3.0);
    CHECK(one.means.at(0, 1) == 0.0);

    CHECK_THROWS_AS(synth::make_ring(8, 2.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(synth::make_ring(8, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(synth::make_ring(8, 2.0, 0.0), std::invalid_argument);
}

TEST_CASE("make_grid construction") {
    auto s = synth::make_grid(5, 2.0, 0.05);
    CHECK(s.n_modes() == 25);
    std::vector<std::pair<double, double>> got;
    for (std::size_t k = 0; k < 25; ++k) got.emplace_back(s.means.at(k, 0), s.means.at(k, 1));
    for (double a : {-4.0, -2.0, 0.0, 2.0, 4.0})
        for (double b : {-4.0, -2.0, 0.0, 2.0, 4.0}) CHECK(std::find(got.begin(), got.end(), std::pair{a, b}) != got.end());
    double best = 1e9;
    for (std::size_t i = 0; i < 25; ++i)
        for (std::size_t j = i + 1; j < 25; ++j) best = std::min(best, dist(s.means, i, s.means, j));
    CHECK(best == doctest::Approx(2.0));

    auto single = synth::make_grid(1, 2.0, 0.05);
    CHECK(single.means == Tensor({1, 2}, 0.0));
    CHECK_THROWS_AS(synth::make_grid(0, 2.0, 0.05), std::invalid_argument);
}

TEST_CASE("make_highdim embedding is an isometry") {
    nd::Rng rng(3);
    auto s = synth::make_highdim(rng, 10, 30, 60, 0.1, 1.0);
    CHECK(s.dim() == 60);
    CHECK(s.quality_radius_multiplier == 10.0);
    REQUIRE(s.embed);
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> e(s.embed->data().data(), 60, 30);
    CHECK((e.transpose() * e - RowMat::Identity(30, 30)).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::VectorXd v = Eigen::VectorXd::Random(30);
    CHECK((e * v).norm() == doctest::Approx(v.norm()).epsilon(1e-12));
    synth::validate(s);

    nd::Rng r2(3);
    CHECK(synth::make_highdim(r2, 10, 30, 60, 0.1, 1.0).means == s.means);
    CHECK_THROWS_AS(synth::make_highdim(rng, 10, 70, 60), std::invalid_argument);
    // Modes cannot be 20 sigma apart in 1D with a tiny scale.
    CHECK_THROWS_AS(synth::make_highdim(rng, 10, 1, 4, 0.1, 0.01), std::invalid_argument);
}

TEST_CASE("sample_batch statistics") {
    auto ring = synth::make_ring(8, 2.0, 0.02);

    auto tight = ring;
    tight.sigma = 1e-200;
    nd::Rng r0(1);
    auto b0 = synth::sample_batch(tight, r0, 50);
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(std::abs(b0.samples.at(i, 0) - ring.means.at(b0.component_ids[i], 0)) < 1e-150);
        CHECK(std::abs(b0.samples.at(i, 1) - ring.means.at(b0.component_ids[i], 1)) < 1e-150);
    }

    nd::Rng rng(2024);
    const std::size_t n = 100000;
    auto b = synth::sample_batch(ring, rng, n);
    std::size_t within = 0;
    std::vector<std::size_t> counts(8, 0);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        within += dist(b.samples, i, ring.means, b.component_ids[i]) <= 3 * ring.sigma;
        counts[b.component_ids[i]]++;
        mx += b.samples.at(i, 0);
        my += b.samples.at(i, 1);
    }
    // 2D chi-square: P(|eps| <= 3) = 1 - exp(-4.5); binomial SE ~ 3.3e-4.
    const double p = 1 - std::exp(-4.5);
    CHECK(std::abs(static_cast<double>(within) / n - p) < 1e-3);
    CHECK(std::abs(static_cast<double>(within) / n - 0.98889) < 1e-3);
    const double se = std::sqrt(n * (1.0 / 8) * (7.0 / 8));
    for (std::size_t c : counts) CHECK(std::abs(static_cast<double>(c) - n / 8.0) < 3 * se);
    CHECK(std::abs(mx / n) < 0.02);
    CHECK(std::abs(my / n) < 0.02);
}

TEST_CASE("nearest mode recovers the generating component") {
    for (const auto& spec : {synth::make_ring(), synth::make_grid()}) {
        nd::Rng rng(5);
        auto b = synth::sample_batch(spec, rng, 10000);
        for (std::size_t i = 0; i < 10000; ++i) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < spec.n_modes(); ++k)
                if (dist(b.samples, i, spec.means, k) < dist(b.samples, i, spec.means, best)) best = k;
            REQUIRE(best == b.component_ids[i]);
        }
    }
}

TEST_CASE("data source hides labels and json round-trips") {
    nd::Rng rng(8);
    auto hd = synth::make_highdim(rng, 10, 30, 60);
    synth::DataSource src(hd);
    nd::Rng a(1), b(1);
    CHECK(src.draw(a, 7) == synth::sample_batch(hd, b, 7).samples);
    auto back = synth::mixture_from_json(synth::to_json(hd));
    CHECK(back.means == hd.means);
    CHECK(*back.embed == *hd.embed);
    CHECK(back.sigma == hd.sigma);
    CHECK(synth::mixture_from_json(nlohmann::json::parse(synth::to_json(synth::make_ring()).dump())).means ==
          synth::make_ring().means);
}
