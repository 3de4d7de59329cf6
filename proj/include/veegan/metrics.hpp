#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "veegan/mixture.hpp"
#include "veegan/mlp.hpp"
#include "veegan/tensor.hpp"
#include "veegan/trainer.hpp"

namespace veegan::metrics {

/// mask[i] is true when sample i lies within spec.quality_radius() of its nearest mode mean.
std::vector<bool> high_quality_mask(const nd::Tensor& samples, const synth::MixtureSpec& spec);

/// Index of the nearest mode mean for every sample. Ties go to the lowest index.
std::vector<std::size_t> nearest_mode(const nd::Tensor& samples, const synth::MixtureSpec& spec);

/// Number of components that are the nearest mode of at least one high-quality sample.
std::size_t modes_captured(const nd::Tensor& samples, const synth::MixtureSpec& spec);

struct IvomConfig {
    std::size_t steps = 200;
    std::size_t restarts = 3;
    double lr = 0.05;
};

struct IvomResult {
    /// Mean over targets of the best ||x - G(z)||^2 / D; +inf if any target diverged.
    double mean_mse = 0.0;
    std::vector<double> per_target;
    std::size_t diverged = 0;
};

/// Inference via optimization: per target, gradient descent on the full generator input
/// from `cfg.restarts` random starts drawn from `rng`, keeping the best final error.
IvomResult ivom(const nn::NetParams& generator, const nd::Tensor& targets, const IvomConfig& cfg, nd::Rng& rng);

struct SampleMetrics {
    std::size_t modes = 0;
    double hq_fraction = 0.0;
    std::size_t n_samples = 0;
};

/// Throws std::invalid_argument on an empty sample set.
SampleMetrics evaluate_samples(const nd::Tensor& samples, const synth::MixtureSpec& spec);

struct RunMetrics {
    std::uint64_t seed = 0;
    std::size_t modes = 0;
    double hq_fraction = 0.0;
    std::optional<double> ivom;
};

struct Summary {
    double mean = 0.0;
    /// Population standard deviation over runs.
    double std = 0.0;
};

Summary summarize(const std::vector<double>& values);

struct MetricsReport {
    std::size_t n_samples = 0;
    std::vector<RunMetrics> runs;
    Summary modes;
    Summary hq_fraction;
    std::optional<Summary> ivom;
};

/// Aggregates per-run metrics. Throws std::invalid_argument when `runs` is empty.
MetricsReport aggregate(std::vector<RunMetrics> runs, std::size_t n_samples);

struct EvalConfig {
    std::size_t n_samples = 2500;
    bool ivom = false;
    std::size_t ivom_targets = 500;
    IvomConfig ivom_config{};
    std::uint64_t seed = 0;
};

/// Metrics for one trained model. Samples, IvOM targets and IvOM restarts use sub-streams of `cfg.seed`.
RunMetrics evaluate_model(const train::TrainedModel& model, const synth::MixtureSpec& spec, const EvalConfig& cfg);

/// Per-run metrics plus mean/std over `models`.
MetricsReport evaluate(const std::vector<train::TrainedModel>& models, const synth::MixtureSpec& spec,
                       const EvalConfig& cfg);

}  // namespace veegan::metrics
