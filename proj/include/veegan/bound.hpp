#pragma once

#include <cstddef>
#include <vector>

#include "veegan/trainer.hpp"

namespace veegan::bound {

/// Linear-Gaussian family with p(x) = N(0, 1) and p0(z) = N(0, 1):
/// reconstructor p(z | x) = N(a x, 1), generator q(x | z) = N(b z, s^2).
struct LinearGaussianFamily {
    double a = 0.0;
    double b = 0.0;
    double s = 1.0;

    /// Throws std::invalid_argument unless a and b are finite and s is finite and positive.
    void validate() const;
};

/// Cross-entropy -E_{p0}[log p(z)] with p(z) = N(0, a^2 + 1).
double lhs_cross_entropy(const LinearGaussianFamily& fam);

/// KL[q(x|z) p0(z) || p(z|x) p(x)] between the two bivariate joints.
double joint_kl(const LinearGaussianFamily& fam);

/// joint_kl(fam) + H[p0].
double rhs_bound(const LinearGaussianFamily& fam);

struct GridPoint {
    LinearGaussianFamily fam;
    double lhs;
    double rhs;
    double margin() const { return rhs - lhs; }
};

/// a, b in {-2, -1.8, ..., 2}; s in {0.25, 0.5, 1, 1.5, 2}.
std::vector<GridPoint> bound_grid();

struct GridVerdict {
    std::size_t points = 0;
    std::size_t violations = 0;
    double min_margin = 0.0;
    LinearGaussianFamily worst;
    bool holds() const { return violations == 0; }
};

/// A point violates the bound when rhs - lhs < -tolerance.
GridVerdict check_grid(const std::vector<GridPoint>& grid, double tolerance = 1e-9);

/// Gauss-Hermite rule for the standard normal weight: sum_i w_i f(x_i) ~ E[f(Z)], Z ~ N(0, 1).
struct Quadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};
Quadrature gauss_hermite(std::size_t n);

struct OptimumThresholds {
    double max_abs_mean = 0.1;
    double min_std = 0.85;
    double max_std = 1.15;
    double max_recon_mse = 0.05;
};

struct OptimumReport {
    double mean = 0.0;
    double std = 0.0;
    double recon_mse = 0.0;
    bool mean_ok = false;
    bool std_ok = false;
    bool recon_ok = false;
    bool pass() const { return mean_ok && std_ok && recon_ok; }
};

/// Generator output mean/std and E||z - F(G(z, e))||^2 / K under the input prior, integrated with a
/// tensor-product Gauss-Hermite rule of `nodes` points per input dimension.
/// Requires a one-dimensional generator output and a reconstructor.
OptimumReport gaussian_optimum_check(const train::TrainedModel& model, const OptimumThresholds& thresholds = {},
                               std::size_t nodes = 48);

}  // namespace veegan::bound
