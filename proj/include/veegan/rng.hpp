#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "veegan/tensor.hpp"

namespace veegan::nd {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seeded pseudo-random stream (64-bit Mersenne Twister).
///
/// Sub-streams are derived from the seed alone via `split`, so a child's draws
/// never depend on how much of the parent (or of a sibling) was consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }

    Rng split(std::uint64_t stream) const;
    Rng split(std::string_view name) const;

    double normal();
    double uniform(double lo = 0.0, double hi = 1.0);
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

Tensor randn(Rng& rng, const Shape& shape);
Tensor rand_uniform(Rng& rng, const Shape& shape, double lo, double hi);

}  // namespace veegan::nd
