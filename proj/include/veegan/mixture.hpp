#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "veegan/rng.hpp"
#include "veegan/tensor.hpp"

namespace veegan::synth {

/// Uniform-weight isotropic Gaussian mixture, optionally embedded by a linear
/// map with orthonormal columns.
///
/// `means` are always in the ambient (sampled) space. When `embed` is present,
/// samples are embed * (low_mean + sigma * eps) with eps ~ N(0, I_low), so the
/// noise lives in the embedded subspace.
struct MixtureSpec {
    std::string kind;  // "ring", "grid", "highdim" or "gaussian"
    nd::Tensor means;  // [M x D]
    double sigma = 1.0;
    std::optional<nd::Tensor> embed;      // [D_high x D_low]
    std::optional<nd::Tensor> low_means;  // [M x D_low]
    double quality_radius_multiplier = 3.0;

    std::size_t n_modes() const { return means.shape()[0]; }
    std::size_t dim() const { return means.shape()[1]; }
    double quality_radius() const { return quality_radius_multiplier * sigma; }
};

/// Throws std::invalid_argument when sigma <= 0, modes are not separated by more
/// than 2 * quality_radius, or embed columns are not orthonormal to 1e-10.
void validate(const MixtureSpec& spec);

MixtureSpec make_ring(std::size_t n_modes = 8, double radius = 2.0, double sigma = 0.02);
MixtureSpec make_grid(std::size_t side = 5, double spacing = 2.0, double sigma = 0.05);
MixtureSpec make_highdim(nd::Rng& rng, std::size_t n_modes = 10, std::size_t d_low = 30, std::size_t d_high = 60,
                         double sigma = 0.1, double mode_scale = 1.0);
/// Single standard-normal component in `dim` dimensions.
MixtureSpec make_standard_normal(std::size_t dim = 1);

struct Batch {
    nd::Tensor samples;                     // [n x D]
    std::vector<std::size_t> component_ids;  // diagnostics only
};

Batch sample_batch(const MixtureSpec& spec, nd::Rng& rng, std::size_t n);

/// Unlabelled view of a mixture handed to trainers; component ids are not reachable through it.
class DataSource {
public:
    explicit DataSource(MixtureSpec spec);

    nd::Tensor draw(nd::Rng& rng, std::size_t n) const;
    std::size_t dim() const { return spec_.dim(); }

private:
    MixtureSpec spec_;
};

nlohmann::json to_json(const MixtureSpec& spec);
MixtureSpec mixture_from_json(const nlohmann::json& j);

}  // namespace veegan::synth
