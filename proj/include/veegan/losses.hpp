#pragma once

#include <cstdint>

#include "veegan/tape.hpp"

// Scalar loss builders for the adversarial objectives. Every builder is a pure
// function of its input nodes. Discriminator outputs are raw (pre-sigmoid)
// logits; any shape is accepted and reduced by a mean over all elements.
//
// Sign convention: sigma(D) is the probability that a sample (or pair) came
// from the generator, so at the discriminator optimum D = log q / p.

namespace veegan::losses {

enum class Route : std::uint8_t { Generator = 1, Reconstructor = 2, Discriminator = 4 };

constexpr std::uint8_t operator|(Route a, Route b) { return static_cast<std::uint8_t>(a) | static_cast<std::uint8_t>(b); }
constexpr std::uint8_t operator|(std::uint8_t a, Route b) { return a | static_cast<std::uint8_t>(b); }

/// A scalar tape node plus the set of networks whose parameters the loss is allowed to update.
struct LossValue {
    nd::Var value;
    std::uint8_t routes = 0;

    bool routes_to(Route r) const { return (routes & static_cast<std::uint8_t>(r)) != 0; }
    double item() const { return value.item(); }
};

/// mean log sigma(d_fake) + mean log(1 - sigma(d_real)). The discriminator ascends, the generator descends.
LossValue gan_objective(const nd::Var& d_on_fake, const nd::Var& d_on_real);

/// mean -log sigma(logits), minimized by the generator. The logits must score
/// "looks like data" as positive; callers using the convention above pass -D.
LossValue enhanced_generator_loss(const nd::Var& logits);

/// Monte Carlo logistic-regression loss on joint pairs:
/// -mean log sigma(D(z, x_g)) - mean log(1 - sigma(D(z_g, x))). Minimized by the discriminator.
LossValue joint_lr_loss(const nd::Var& d_on_generated_pairs, const nd::Var& d_on_data_pairs);

/// Squared l2 between latent codes and their reconstructions, averaged over the
/// batch and divided by the latent width K.
LossValue reconstruction_loss(const nd::Var& z, const nd::Var& z_hat);

/// mean D(z, x_g) + reconstruction. The raw discriminator output enters directly.
LossValue veegan_generator_loss(const nd::Var& d_on_generated_pairs, const LossValue& recon);

/// Non-saturating logistic alternative: softplus(D) = -log(1 - sigma(D)) in place of the raw logit.
LossValue veegan_generator_loss_logistic(const nd::Var& d_on_generated_pairs, const LossValue& recon);

/// lambda * batch mean of ||x - x_hat||^2 (data-space autoencoder penalty).
LossValue dae_variant_loss(const nd::Var& x, const nd::Var& x_hat, double lambda);

}  // namespace veegan::losses
