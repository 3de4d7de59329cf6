#include "veegan/losses.hpp"

#include <stdexcept>

#include "veegan/ops.hpp"

namespace veegan::losses {

using nd::Var;

LossValue gan_objective(const Var& d_on_fake, const Var& d_on_real) {
    Var v = nd::add(nd::mean(nd::log_sigmoid(d_on_fake)), nd::mean(nd::log_sigmoid(nd::neg(d_on_real))));
    return {v, Route::Generator | Route::Discriminator};
}

LossValue enhanced_generator_loss(const Var& logits) {
    return {nd::neg(nd::mean(nd::log_sigmoid(logits))), static_cast<std::uint8_t>(Route::Generator)};
}

LossValue joint_lr_loss(const Var& d_on_generated_pairs, const Var& d_on_data_pairs) {
    Var v = nd::neg(nd::add(nd::mean(nd::log_sigmoid(d_on_generated_pairs)),
                            nd::mean(nd::log_sigmoid(nd::neg(d_on_data_pairs)))));
    return {v, static_cast<std::uint8_t>(Route::Discriminator)};
}

LossValue reconstruction_loss(const Var& z, const Var& z_hat) {
    if (z.shape() != z_hat.shape() || z.shape().size() != 2) {
        throw nd::ShapeError("reconstruction_loss: incompatible shapes " + nd::shape_str(z.shape()) + " and " +
                             nd::shape_str(z_hat.shape()));
    }
    const double denom = static_cast<double>(z.shape()[0] * z.shape()[1]);
    Var v = nd::scale(nd::squared_l2(nd::sub(z, z_hat)), 1.0 / denom);
    return {v, Route::Generator | Route::Reconstructor};
}

LossValue veegan_generator_loss(const Var& d_on_generated_pairs, const LossValue& recon) {
    return {nd::add(nd::mean(d_on_generated_pairs), recon.value), recon.routes | Route::Generator};
}

LossValue veegan_generator_loss_logistic(const Var& d_on_generated_pairs, const LossValue& recon) {
    return {nd::add(nd::mean(nd::softplus(d_on_generated_pairs)), recon.value), recon.routes | Route::Generator};
}

LossValue dae_variant_loss(const Var& x, const Var& x_hat, double lambda) {
    if (lambda < 0) throw std::invalid_argument("dae_variant_loss: lambda must be >= 0");
    if (x.shape() != x_hat.shape() || x.shape().size() != 2) {
        throw nd::ShapeError("dae_variant_loss: incompatible shapes " + nd::shape_str(x.shape()) + " and " +
                             nd::shape_str(x_hat.shape()));
    }
    Var v = nd::scale(nd::squared_l2(nd::sub(x, x_hat)), lambda / static_cast<double>(x.shape()[0]));
    return {v, Route::Generator | Route::Reconstructor};
}

}  // namespace veegan::losses
