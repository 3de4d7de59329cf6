#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "veegan/mixture.hpp"
#include "veegan/mlp.hpp"
#include "veegan/optim.hpp"
#include "veegan/snapshot.hpp"

namespace veegan::train {

enum class Method : std::uint8_t { Gan, Ali, Unrolled, Veegan, VeeganDae };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

enum class PretrainMode : std::uint8_t {
    /// Run the discriminator and reconstructor updates of the VEEGAN loop with the generator frozen.
    Warmup,
    /// Regress F(x) toward a fixed pool of N(0, I) draws paired with a fixed pool of data.
    Regress,
};

enum class GeneratorLoss : std::uint8_t {
    /// GAN/Unrolled: descend the minimax objective. ALI: ascend the logistic loss.
    Minimax,
    /// Non-saturating form with flipped labels.
    Enhanced,
};

enum class VeeganAdversarialTerm : std::uint8_t {
    /// mean D(z, x_g), the raw discriminator output.
    Raw,
    /// mean softplus(D(z, x_g)).
    Logistic,
};

struct TrainerConfig {
    Method method = Method::Veegan;
    std::size_t latent_dim = 2;
    /// Extra generator inputs that are never reconstructed.
    std::size_t extra_noise_dims = 1;
    std::size_t batch_size = 128;
    std::size_t steps = 25000;

    std::vector<std::size_t> generator_hidden{128, 128};
    std::vector<std::size_t> reconstructor_hidden{128, 128};
    std::vector<std::size_t> discriminator_hidden{128, 128};
    nn::Activation generator_activation = nn::Activation::Tanh;
    nn::Activation reconstructor_activation = nn::Activation::Tanh;
    nn::Activation discriminator_activation = nn::Activation::LeakyRelu;
    double leaky_slope = 0.2;

    nn::OptimizerConfig generator_opt{};
    nn::OptimizerConfig reconstructor_opt{};
    nn::OptimizerConfig discriminator_opt{};

    /// Std of the Gaussian p(z | x) centred on F(x).
    double reconstructor_noise_std = 1.0;

    std::size_t unroll_steps = 5;
    /// Learning rate of the plain-SGD inner discriminator steps used for unrolling.
    double unroll_lr = 1e-3;

    std::size_t pretrain_steps = 0;
    PretrainMode pretrain_mode = PretrainMode::Warmup;
    std::size_t pretrain_pool = 4096;

    double dae_lambda = 0.01;
    GeneratorLoss generator_loss = GeneratorLoss::Enhanced;
    VeeganAdversarialTerm veegan_adversarial = VeeganAdversarialTerm::Raw;

    std::size_t trace_every = 100;
    std::uint64_t seed = 0;

    std::size_t generator_input_dim() const { return latent_dim + extra_noise_dims; }
    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;
};

nlohmann::json to_json(const TrainerConfig& cfg);
TrainerConfig trainer_config_from_json(const nlohmann::json& j);

struct Networks {
    nn::NetParams generator;
    std::optional<nn::NetParams> reconstructor;
    nn::NetParams discriminator;
};

/// Fresh networks for `cfg.method`, drawn from streams split off `cfg.seed`.
Networks init_networks(const TrainerConfig& cfg, std::size_t data_dim);

/// Everything random that one training step consumes.
struct StepSamples {
    nd::Tensor z;            // [N x K]
    nd::Tensor extra;        // [N x E] generator noise that is not reconstructed
    nd::Tensor x;            // [N x D] data
    nd::Tensor recon_noise;  // [N x K] noise of p(z | x)
};

/// Independent sub-streams for each sampling site of a run.
class SampleStreams {
public:
    explicit SampleStreams(std::uint64_t seed);
    StepSamples draw(const TrainerConfig& cfg, const synth::DataSource& data);

private:
    nd::Rng latent_, extra_, data_, recon_;
};

using LossTrace = std::vector<std::pair<std::string, double>>;

/// Descent directions for one step: each optimizer subtracts its gradient.
struct StepGradients {
    std::vector<nd::Tensor> generator;
    std::vector<nd::Tensor> reconstructor;
    std::vector<nd::Tensor> discriminator;
    LossTrace losses;
};

StepGradients veegan_gradients(const Networks& nets, const StepSamples& s, const TrainerConfig& cfg);
StepGradients veegan_dae_gradients(const Networks& nets, const StepSamples& s, const TrainerConfig& cfg);
StepGradients gan_gradients(const Networks& nets, const StepSamples& s, const TrainerConfig& cfg);
StepGradients ali_gradients(const Networks& nets, const StepSamples& s, const TrainerConfig& cfg);
/// Generator gradient taken through cfg.unroll_steps differentiable SGD steps of the discriminator.
StepGradients unrolled_gradients(const Networks& nets, const StepSamples& s, const TrainerConfig& cfg);

struct TraceRecord {
    std::size_t step;
    LossTrace losses;
};

struct TrainedModel {
    TrainerConfig config;
    std::size_t data_dim = 0;
    nn::NetParams generator;
    std::optional<nn::NetParams> reconstructor;
    nn::NetParams discriminator;
    std::vector<TraceRecord> trace;

    /// n generator samples with fresh latent and extra noise drawn from `rng`.
    nd::Tensor sample(nd::Rng& rng, std::size_t n) const;
};

nn::Blob encode_model(const TrainedModel& model);
TrainedModel decode_model(std::span<const std::uint8_t> blob);

/// Non-finite loss or gradient during training.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t step, const std::string& what, nn::Blob last_good);
    std::size_t step() const noexcept { return step_; }
    /// encode_model() of the networks at the start of the failing step.
    const nn::Blob& last_good() const noexcept { return last_good_; }

private:
    std::size_t step_;
    nn::Blob last_good_;
};

/// Mutable state of a run: networks plus one optimizer state per network.
struct TrainingState {
    Networks nets;
    nn::OptState generator_opt;
    std::optional<nn::OptState> reconstructor_opt;
    nn::OptState discriminator_opt;
};

TrainingState init_state(const TrainerConfig& cfg, std::size_t data_dim);

/// Updates the reconstructor (and, for Warmup, the discriminator) for cfg.pretrain_steps. Zero steps is a no-op.
void pretrain_reconstructor(const synth::DataSource& data, const TrainerConfig& cfg, TrainingState& state);

TrainedModel train_veegan(const synth::DataSource& data, const TrainerConfig& cfg);
TrainedModel train_gan(const synth::DataSource& data, const TrainerConfig& cfg);
TrainedModel train_ali(const synth::DataSource& data, const TrainerConfig& cfg);
TrainedModel train_unrolled(const synth::DataSource& data, const TrainerConfig& cfg);

/// Dispatches on cfg.method.
TrainedModel train(const synth::DataSource& data, const TrainerConfig& cfg);

}  // namespace veegan::train
