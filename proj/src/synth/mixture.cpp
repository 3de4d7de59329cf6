#include "veegan/mixture.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace veegan::synth {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double min_pairwise_distance(const nd::Tensor& means) {
    const std::size_t m = means.shape()[0], d = means.shape()[1];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = means.at(i, k) - means.at(j, k);
                s += diff * diff;
            }
            best = std::min(best, std::sqrt(s));
        }
    return best;
}

bool separable(const MixtureSpec& spec) {
    return spec.n_modes() < 2 || min_pairwise_distance(spec.means) > 2.0 * spec.quality_radius();
}

nd::Tensor to_tensor(const RowMat& m) {
    nd::Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    Eigen::Map<RowMat>(t.data().data(), m.rows(), m.cols()) = m;
    return t;
}

Eigen::Map<const RowMat> view(const nd::Tensor& t) {
    return {t.data().data(), static_cast<Eigen::Index>(t.shape()[0]), static_cast<Eigen::Index>(t.shape()[1])};
}

}  // namespace

void validate(const MixtureSpec& spec) {
    if (!(spec.sigma > 0)) throw std::invalid_argument("mixture: sigma must be positive");
    if (spec.means.rank() != 2 || spec.n_modes() == 0) throw std::invalid_argument("mixture: means must be [M x D], M >= 1");
    if (!separable(spec)) {
        throw std::invalid_argument("mixture: modes are not separable: min pairwise distance " +
                                    std::to_string(min_pairwise_distance(spec.means)) + " <= 2 * " +
                                    std::to_string(spec.quality_radius_multiplier) + " * sigma");
    }
    if (spec.embed) {
        const auto e = view(*spec.embed);
        const RowMat gram = e.transpose() * e;
        const double err = (gram - RowMat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
        if (err > 1e-10) throw std::invalid_argument("mixture: embed columns are not orthonormal");
        if (!spec.low_means || spec.low_means->shape()[1] != spec.embed->shape()[1]) {
            throw std::invalid_argument("mixture: embedded mixture needs low-dimensional means matching the embed");
        }
    }
}

MixtureSpec make_ring(std::size_t n_modes, double radius, double sigma) {
    if (!(radius > 0) || n_modes == 0) throw std::invalid_argument("make_ring: need radius > 0 and n_modes >= 1");
    MixtureSpec s;
    s.kind = "ring";
    s.sigma = sigma;
    s.means = nd::Tensor({n_modes, 2});
    for (std::size_t k = 0; k < n_modes; ++k) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_modes);
        s.means.at(k, 0) = radius * std::cos(a);
        s.means.at(k, 1) = radius * std::sin(a);
    }
    validate(s);
    return s;
}

MixtureSpec make_grid(std::size_t side, double spacing, double sigma) {
    if (side == 0 || !(spacing > 0)) throw std::invalid_argument("make_grid: need side >= 1 and spacing > 0");
    MixtureSpec s;
    s.kind = "grid";
    s.sigma = sigma;
    s.means = nd::Tensor({side * side, 2});
    const double center = 0.5 * static_cast<double>(side - 1);
    for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j) {
            s.means.at(i * side + j, 0) = (static_cast<double>(i) - center) * spacing;
            s.means.at(i * side + j, 1) = (static_cast<double>(j) - center) * spacing;
        }
    validate(s);
    return s;
}

MixtureSpec make_highdim(nd::Rng& rng, std::size_t n_modes, std::size_t d_low, std::size_t d_high, double sigma,
                         double mode_scale) {
    if (d_low == 0 || d_low > d_high) throw std::invalid_argument("make_highdim: need 1 <= d_low <= d_high");
    MixtureSpec s;
    s.kind = "highdim";
    s.sigma = sigma;
    s.quality_radius_multiplier = 10.0;

    nd::Tensor gauss = nd::randn(rng, {d_high, d_low});
    Eigen::HouseholderQR<RowMat> qr(view(gauss));
    const RowMat q = qr.householderQ() * RowMat::Identity(static_cast<Eigen::Index>(d_high), static_cast<Eigen::Index>(d_low));
    s.embed = to_tensor(q);

    for (int attempt = 0; attempt < 2; ++attempt) {
        nd::Tensor low = nd::randn(rng, {n_modes, d_low});
        for (double& v : low.data()) v *= mode_scale;
        s.low_means = low;
        s.means = to_tensor(view(low) * q.transpose());
        if (separable(s)) {
            validate(s);
            return s;
        }
    }
    throw std::invalid_argument("make_highdim: modes not separable after resampling; increase mode_scale or reduce sigma");
}

MixtureSpec make_standard_normal(std::size_t dim) {
    MixtureSpec s;
    s.kind = "gaussian";
    s.sigma = 1.0;
    s.means = nd::Tensor({1, dim});
    validate(s);
    return s;
}

Batch sample_batch(const MixtureSpec& spec, nd::Rng& rng, std::size_t n) {
    const std::size_t m = spec.n_modes(), d = spec.dim();
    Batch b{nd::Tensor({n, d}), std::vector<std::size_t>(n)};
    if (spec.embed) {
        const std::size_t dl = spec.embed->shape()[1];
        const auto e = view(*spec.embed);
        Eigen::VectorXd eps(static_cast<Eigen::Index>(dl));
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = rng.index(m);
            b.component_ids[i] = k;
            for (std::size_t j = 0; j < dl; ++j) eps[static_cast<Eigen::Index>(j)] = spec.sigma * rng.normal();
            const Eigen::VectorXd offset = e * eps;
            for (std::size_t j = 0; j < d; ++j) b.samples.at(i, j) = spec.means.at(k, j) + offset[static_cast<Eigen::Index>(j)];
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = rng.index(m);
            b.component_ids[i] = k;
            for (std::size_t j = 0; j < d; ++j) b.samples.at(i, j) = spec.means.at(k, j) + spec.sigma * rng.normal();
        }
    }
    return b;
}

DataSource::DataSource(MixtureSpec spec) : spec_(std::move(spec)) { validate(spec_); }

nd::Tensor DataSource::draw(nd::Rng& rng, std::size_t n) const { return sample_batch(spec_, rng, n).samples; }

namespace {

nlohmann::json tensor_json(const nd::Tensor& t) { return {{"shape", t.shape()}, {"data", t.values()}}; }

nd::Tensor tensor_from(const nlohmann::json& j) {
    return nd::Tensor(j.at("shape").get<nd::Shape>(), j.at("data").get<std::vector<double>>());
}

}  // namespace

nlohmann::json to_json(const MixtureSpec& spec) {
    nlohmann::json j{{"kind", spec.kind},
                     {"sigma", spec.sigma},
                     {"quality_radius_multiplier", spec.quality_radius_multiplier},
                     {"means", tensor_json(spec.means)}};
    if (spec.embed) j["embed"] = tensor_json(*spec.embed);
    if (spec.low_means) j["low_means"] = tensor_json(*spec.low_means);
    return j;
}

MixtureSpec mixture_from_json(const nlohmann::json& j) {
    MixtureSpec s;
    s.kind = j.at("kind").get<std::string>();
    s.sigma = j.at("sigma").get<double>();
    s.quality_radius_multiplier = j.at("quality_radius_multiplier").get<double>();
    s.means = tensor_from(j.at("means"));
    if (j.contains("embed")) s.embed = tensor_from(j.at("embed"));
    if (j.contains("low_means")) s.low_means = tensor_from(j.at("low_means"));
    validate(s);
    return s;
}

}  // namespace veegan::synth
