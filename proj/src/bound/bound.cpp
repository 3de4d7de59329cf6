#include "veegan/bound.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace veegan::bound {

void LinearGaussianFamily::validate() const {
    if (!std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("linear-Gaussian family: a and b must be finite");
    if (!std::isfinite(s) || !(s > 0.0)) {
        throw std::invalid_argument("linear-Gaussian family: s = " + std::to_string(s) +
                                    " gives a singular generator covariance");
    }
}

double lhs_cross_entropy(const LinearGaussianFamily& fam) {
    fam.validate();
    const double v = fam.a * fam.a + 1.0;
    return 0.5 * std::log(2.0 * std::numbers::pi * v) + 0.5 / v;
}

double joint_kl(const LinearGaussianFamily& fam) {
    fam.validate();
    // Coordinates (z, x). q: z ~ N(0,1), x = b z + s e. p: x ~ N(0,1), z = a x + n.
    Eigen::Matrix2d q, p;
    q << 1.0, fam.b, fam.b, fam.b * fam.b + fam.s * fam.s;
    p << fam.a * fam.a + 1.0, fam.a, fam.a, 1.0;
    const Eigen::LDLT<Eigen::Matrix2d> pl(p);
    const double trace = pl.solve(q).trace();
    return 0.5 * (trace - 2.0 + std::log(p.determinant() / q.determinant()));
}

double rhs_bound(const LinearGaussianFamily& fam) {
    const double entropy_p0 = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
    return joint_kl(fam) + entropy_p0;
}

std::vector<GridPoint> bound_grid() {
    std::vector<GridPoint> out;
    for (int i = 0; i <= 20; ++i) {
        for (int j = 0; j <= 20; ++j) {
            for (double s : {0.25, 0.5, 1.0, 1.5, 2.0}) {
                LinearGaussianFamily f{(i - 10) / 5.0, (j - 10) / 5.0, s};
                out.push_back({f, lhs_cross_entropy(f), rhs_bound(f)});
            }
        }
    }
    return out;
}

GridVerdict check_grid(const std::vector<GridPoint>& grid, double tolerance) {
    GridVerdict v;
    v.points = grid.size();
    bool first = true;
    for (const auto& g : grid) {
        if (first || g.margin() < v.min_margin) {
            v.min_margin = g.margin();
            v.worst = g.fam;
            first = false;
        }
        if (g.margin() < -tolerance) ++v.violations;
    }
    return v;
}

Quadrature gauss_hermite(std::size_t n) {
    if (n == 0) throw std::invalid_argument("gauss_hermite: need at least one node");
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(N, N);
    for (Eigen::Index k = 1; k < N; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Quadrature q;
    for (Eigen::Index k = 0; k < N; ++k) {
        q.nodes.push_back(es.eigenvalues()(k));
        q.weights.push_back(es.eigenvectors()(0, k) * es.eigenvectors()(0, k));
    }
    // Exact symmetry of the rule removes round-off in odd moments.
    for (std::size_t k = 0; k < n / 2; ++k) {
        const std::size_t m = n - 1 - k;
        const double x = 0.5 * (q.nodes[m] - q.nodes[k]);
        const double w = 0.5 * (q.weights[m] + q.weights[k]);
        q.nodes[k] = -x;
        q.nodes[m] = x;
        q.weights[k] = q.weights[m] = w;
    }
    if (n % 2 == 1) q.nodes[n / 2] = 0.0;
    double total = 0.0;
    for (double w : q.weights) total += w;
    for (double& w : q.weights) w /= total;
    return q;
}

OptimumReport gaussian_optimum_check(const train::TrainedModel& model, const OptimumThresholds& t, std::size_t nodes) {
    if (!model.reconstructor) throw std::invalid_argument("gaussian_optimum_check: model has no reconstructor");
    if (model.generator.out_dim() != 1) {
        throw std::invalid_argument("gaussian_optimum_check: expected a one-dimensional generator output, got " +
                                    std::to_string(model.generator.out_dim()));
    }
    const std::size_t k = model.config.latent_dim, dims = model.generator.in_dim();
    if (dims < k) throw std::invalid_argument("gaussian_optimum_check: generator input narrower than latent_dim");
    const Quadrature q = gauss_hermite(nodes);

    std::size_t total = 1;
    for (std::size_t d = 0; d < dims; ++d) {
        if (total > (std::size_t{1} << 24) / nodes) throw std::invalid_argument("gaussian_optimum_check: quadrature grid too large");
        total *= nodes;
    }
    nd::Tensor z({total, dims});
    std::vector<double> w(total, 1.0);
    for (std::size_t i = 0; i < total; ++i) {
        std::size_t rem = i;
        for (std::size_t d = 0; d < dims; ++d) {
            const std::size_t idx = rem % nodes;
            rem /= nodes;
            z.at(i, d) = q.nodes[idx];
            w[i] *= q.weights[idx];
        }
    }
    const nd::Tensor x = nn::mlp_apply(model.generator, z);
    const nd::Tensor z_hat = nn::mlp_apply(*model.reconstructor, x);

    double m1 = 0.0, m2 = 0.0, rec = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
        m1 += w[i] * x[i];
        double e = 0.0;
        for (std::size_t d = 0; d < k; ++d) e += std::pow(z.at(i, d) - z_hat.at(i, d), 2);
        rec += w[i] * e / static_cast<double>(k);
    }
    for (std::size_t i = 0; i < total; ++i) m2 += w[i] * (x[i] - m1) * (x[i] - m1);

    OptimumReport r;
    r.mean = m1;
    r.std = std::sqrt(m2);
    r.recon_mse = rec;
    r.mean_ok = std::abs(r.mean) < t.max_abs_mean;
    r.std_ok = r.std >= t.min_std && r.std <= t.max_std;
    r.recon_ok = r.recon_mse < t.max_recon_mse;
    return r;
}

}  // namespace veegan::bound
