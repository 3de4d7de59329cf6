#include "veegan/trainer.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "veegan/losses.hpp"
#include "veegan/ops.hpp"

namespace veegan::train {

using nd::Tape;
using nd::Tensor;
using nd::Var;

std::string to_string(Method m) {
    switch (m) {
        case Method::Gan: return "gan";
        case Method::Ali: return "ali";
        case Method::Unrolled: return "unrolled";
        case Method::Veegan: return "veegan";
        case Method::VeeganDae: return "veegan_dae";
    }
    return "unknown";
}

Method method_from_string(const std::string& s) {
    for (Method m : {Method::Gan, Method::Ali, Method::Unrolled, Method::Veegan, Method::VeeganDae})
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown method '" + s + "' (expected gan, ali, unrolled, veegan, veegan_dae)");
}

namespace {

bool uses_reconstructor(Method m) { return m == Method::Ali || m == Method::Veegan || m == Method::VeeganDae; }

std::vector<std::size_t> layer_dims(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}

std::string pretrain_to_string(PretrainMode m) { return m == PretrainMode::Warmup ? "warmup" : "regress"; }
std::string gen_loss_to_string(GeneratorLoss g) { return g == GeneratorLoss::Minimax ? "minimax" : "enhanced"; }
std::string adv_to_string(VeeganAdversarialTerm a) { return a == VeeganAdversarialTerm::Raw ? "raw" : "logistic"; }

nlohmann::json opt_to_json(const nn::OptimizerConfig& o) {
    return {{"kind", nn::to_string(o.kind)}, {"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}};
}

nn::OptimizerConfig opt_from_json(const nlohmann::json& j) {
    nn::OptimizerConfig o;
    o.kind = nn::optimizer_from_string(j.at("kind").get<std::string>());
    o.lr = j.at("lr").get<double>();
    o.beta1 = j.at("beta1").get<double>();
    o.beta2 = j.at("beta2").get<double>();
    o.eps = j.at("eps").get<double>();
    return o;
}

}  // namespace

void TrainerConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("trainer config: " + m); };
    if (latent_dim == 0) fail("latent_dim must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
    if (!(reconstructor_noise_std >= 0.0) || !std::isfinite(reconstructor_noise_std))
        fail("reconstructor_noise_std must be finite and non-negative");
    if (!(unroll_lr >= 0.0) || !std::isfinite(unroll_lr)) fail("unroll_lr must be finite and non-negative");
    if (!(dae_lambda >= 0.0) || !std::isfinite(dae_lambda)) fail("dae_lambda must be finite and non-negative");
    if (pretrain_mode == PretrainMode::Regress && pretrain_steps > 0 && pretrain_pool == 0)
        fail("pretrain_pool must be positive for regress pretraining");
    for (const auto* o : {&generator_opt, &reconstructor_opt, &discriminator_opt})
        if (!(o->lr >= 0.0) || !std::isfinite(o->lr)) fail("learning rates must be finite and non-negative");
    if (trace_every == 0) fail("trace_every must be positive");
}

nlohmann::json to_json(const TrainerConfig& c) {
    return {
        {"method", to_string(c.method)},
        {"latent_dim", c.latent_dim},
        {"extra_noise_dims", c.extra_noise_dims},
        {"batch_size", c.batch_size},
        {"steps", c.steps},
        {"generator_hidden", c.generator_hidden},
        {"reconstructor_hidden", c.reconstructor_hidden},
        {"discriminator_hidden", c.discriminator_hidden},
        {"generator_activation", nn::to_string(c.generator_activation)},
        {"reconstructor_activation", nn::to_string(c.reconstructor_activation)},
        {"discriminator_activation", nn::to_string(c.discriminator_activation)},
        {"leaky_slope", c.leaky_slope},
        {"generator_opt", opt_to_json(c.generator_opt)},
        {"reconstructor_opt", opt_to_json(c.reconstructor_opt)},
        {"discriminator_opt", opt_to_json(c.discriminator_opt)},
        {"reconstructor_noise_std", c.reconstructor_noise_std},
        {"unroll_steps", c.unroll_steps},
        {"unroll_lr", c.unroll_lr},
        {"pretrain_steps", c.pretrain_steps},
        {"pretrain_mode", pretrain_to_string(c.pretrain_mode)},
        {"pretrain_pool", c.pretrain_pool},
        {"dae_lambda", c.dae_lambda},
        {"generator_loss", gen_loss_to_string(c.generator_loss)},
        {"veegan_adversarial", adv_to_string(c.veegan_adversarial)},
        {"trace_every", c.trace_every},
        {"seed", c.seed},
    };
}

TrainerConfig trainer_config_from_json(const nlohmann::json& j) {
    TrainerConfig c;
    c.method = method_from_string(j.at("method").get<std::string>());
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.extra_noise_dims = j.at("extra_noise_dims").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.steps = j.at("steps").get<std::size_t>();
    c.generator_hidden = j.at("generator_hidden").get<std::vector<std::size_t>>();
    c.reconstructor_hidden = j.at("reconstructor_hidden").get<std::vector<std::size_t>>();
    c.discriminator_hidden = j.at("discriminator_hidden").get<std::vector<std::size_t>>();
    c.generator_activation = nn::activation_from_string(j.at("generator_activation").get<std::string>());
    c.reconstructor_activation = nn::activation_from_string(j.at("reconstructor_activation").get<std::string>());
    c.discriminator_activation = nn::activation_from_string(j.at("discriminator_activation").get<std::string>());
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.generator_opt = opt_from_json(j.at("generator_opt"));
    c.reconstructor_opt = opt_from_json(j.at("reconstructor_opt"));
    c.discriminator_opt = opt_from_json(j.at("discriminator_opt"));
    c.reconstructor_noise_std = j.at("reconstructor_noise_std").get<double>();
    c.unroll_steps = j.at("unroll_steps").get<std::size_t>();
    c.unroll_lr = j.at("unroll_lr").get<double>();
    c.pretrain_steps = j.at("pretrain_steps").get<std::size_t>();
    const auto pm = j.at("pretrain_mode").get<std::string>();
    if (pm == "warmup") c.pretrain_mode = PretrainMode::Warmup;
    else if (pm == "regress") c.pretrain_mode = PretrainMode::Regress;
    else throw std::invalid_argument("unknown pretrain_mode '" + pm + "'");
    c.pretrain_pool = j.at("pretrain_pool").get<std::size_t>();
    c.dae_lambda = j.at("dae_lambda").get<double>();
    const auto gl = j.at("generator_loss").get<std::string>();
    if (gl == "minimax") c.generator_loss = GeneratorLoss::Minimax;
    else if (gl == "enhanced") c.generator_loss = GeneratorLoss::Enhanced;
    else throw std::invalid_argument("unknown generator_loss '" + gl + "'");
    const auto adv = j.at("veegan_adversarial").get<std::string>();
    if (adv == "raw") c.veegan_adversarial = VeeganAdversarialTerm::Raw;
    else if (adv == "logistic") c.veegan_adversarial = VeeganAdversarialTerm::Logistic;
    else throw std::invalid_argument("unknown veegan_adversarial '" + adv + "'");
    c.trace_every = j.at("trace_every").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

Networks init_networks(const TrainerConfig& cfg, std::size_t data_dim) {
    cfg.validate();
    const nd::Rng root(cfg.seed);
    Networks nets;
    {
        nd::Rng r = root.split("init_generator");
        const auto dims = layer_dims(cfg.generator_input_dim(), cfg.generator_hidden, data_dim);
        nets.generator = nn::init_params(r, dims, cfg.generator_activation, nn::Activation::Identity, cfg.leaky_slope);
    }
    const bool joint = uses_reconstructor(cfg.method);
    if (joint) {
        nd::Rng r = root.split("init_reconstructor");
        const auto dims = layer_dims(data_dim, cfg.reconstructor_hidden, cfg.latent_dim);
        nets.reconstructor =
            nn::init_params(r, dims, cfg.reconstructor_activation, nn::Activation::Identity, cfg.leaky_slope);
    }
    {
        nd::Rng r = root.split("init_discriminator");
        const std::size_t in = joint ? cfg.latent_dim + data_dim : data_dim;
        const auto dims = layer_dims(in, cfg.discriminator_hidden, 1);
        nets.discriminator =
            nn::init_params(r, dims, cfg.discriminator_activation, nn::Activation::Identity, cfg.leaky_slope);
    }
    return nets;
}

SampleStreams::SampleStreams(std::uint64_t seed)
    : latent_(nd::Rng(seed).split("latent")),
      extra_(nd::Rng(seed).split("extra_noise")),
      data_(nd::Rng(seed).split("data")),
      recon_(nd::Rng(seed).split("reconstructor_noise")) {}

StepSamples SampleStreams::draw(const TrainerConfig& cfg, const synth::DataSource& data) {
    const std::size_t n = cfg.batch_size;
    StepSamples s;
    s.z = nd::randn(latent_, {n, cfg.latent_dim});
    s.extra = cfg.extra_noise_dims > 0 ? nd::randn(extra_, {n, cfg.extra_noise_dims}) : Tensor({n, 0}, 0.0);
    s.x = data.draw(data_, n);
    s.recon_noise = nd::randn(recon_, {n, cfg.latent_dim});
    return s;
}

namespace {

Var generator_input(Tape& tape, const StepSamples& s) {
    Var z = tape.constant(s.z);
    if (s.extra.cols() == 0) return z;
    return nd::concat_cols(z, tape.constant(s.extra));
}

std::vector<Tensor> negated(std::vector<Tensor> ts) {
    for (auto& t : ts)
        for (double& v : t.data()) v = -v;
    return ts;
}

std::vector<Var> concat(const std::vector<Var>& a, const std::vector<Var>& b) {
    std::vector<Var> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

/// Shared forward graph of the joint-space methods.
struct JointGraph {
    std::vector<Var> gp, fp, dp;
    Var z, x, x_gen, d_gen, d_data;
};

JointGraph joint_forward(Tape& tape, const Networks& nets, const StepSamples& s, double noise_std) {
    if (!nets.reconstructor) throw std::invalid_argument("joint-space method requires a reconstructor network");
    JointGraph g;
    g.gp = nn::bind(tape, nets.generator);
    g.fp = nn::bind(tape, *nets.reconstructor);
    g.dp = nn::bind(tape, nets.discriminator);
    g.z = tape.constant(s.z);
    g.x = tape.constant(s.x);
    g.x_gen = nn::mlp_forward(nets.generator, g.gp, generator_input(tape, s));
    Var z_data = nd::add(nn::mlp_forward(*nets.reconstructor, g.fp, g.x),
                         tape.constant(nd::kernels::scale(s.recon_noise, noise_std)));
    g.d_gen = nn::mlp_forward(nets.discriminator, g.dp, nd::concat_cols(g.z, g.x_gen));
    g.d_data = nn::mlp_forward(nets.discriminator, g.dp, nd::concat_cols(z_data, g.x));
    return g;
}

}  // namespace

StepGradients veegan_gradients(const Networks& nets, const StepSamples& s, const TrainerConfig& cfg) {
    Tape tape;
    JointGraph g = joint_forward(tape, nets, s, cfg.reconstructor_noise_std);
    auto lr = losses::joint_lr_loss(g.d_gen, g.d_data);
    StepGradients out;
    out.discriminator = tape.gradients(lr.value, g.dp);

    Var z_hat = nn::mlp_forward(*nets.reconstructor, g.fp, g.x_gen);
    auto recon = losses::reconstruction_loss(g.z, z_hat);
    auto obj = cfg.veegan_adversarial == VeeganAdversarialTerm::Raw
                   ? losses::veegan_generator_loss(g.d_gen, recon)
                   : losses::veegan_generator_loss_logistic(g.d_gen, recon);
    auto grads = tape.gradients(obj.value, concat(g.gp, g.fp));
    out.generator.assign(grads.begin(), grads.begin() + static_cast<std::ptrdiff_t>(g.gp.size()));
    out.reconstructor.assign(grads.begin() + static_cast<std::ptrdiff_t>(g.gp.size()), grads.end());
    out.losses = {{"disc_lr", lr.item()}, {"gen_adv", obj.item() - recon.item()}, {"recon", recon.item()}};
    return out;
}

StepGradients veegan_dae_gradients(const Networks& nets, const StepSamples& s, const TrainerConfig& cfg) {
    Tape tape;
    JointGraph g = joint_forward(tape, nets, s, cfg.reconstructor_noise_std);
    auto lr = losses::joint_lr_loss(g.d_gen, g.d_data);
    StepGradients out;
    out.discriminator = tape.gradients(lr.value, g.dp);

    Var z_rec = nn::mlp_forward(*nets.reconstructor, g.fp, g.x);
    if (s.extra.cols() > 0) z_rec = nd::concat_cols(z_rec, tape.constant(s.extra));
    Var x_rec = nn::mlp_forward(nets.generator, g.gp, z_rec);
    auto dae = losses::dae_variant_loss(g.x, x_rec, cfg.dae_lambda);
    Var adv = nd::mean(g.d_gen);
    Var obj = nd::add(adv, dae.value);
    auto grads = tape.gradients(obj, concat(g.gp, g.fp));
    out.generator.assign(grads.begin(), grads.begin() + static_cast<std::ptrdiff_t>(g.gp.size()));
    out.reconstructor.assign(grads.begin() + static_cast<std::ptrdiff_t>(g.gp.size()), grads.end());
    out.losses = {{"disc_lr", lr.item()}, {"gen_adv", adv.item()}, {"dae", dae.item()}};
    return out;
}

StepGradients ali_gradients(const Networks& nets, const StepSamples& s, const TrainerConfig& cfg) {
    Tape tape;
    JointGraph g = joint_forward(tape, nets, s, cfg.reconstructor_noise_std);
    auto lr = losses::joint_lr_loss(g.d_gen, g.d_data);
    StepGradients out;
    out.discriminator = tape.gradients(lr.value, g.dp);

    // Minimax: G and F ascend the discriminator's loss. Enhanced: they descend it with the labels flipped.
    Var obj = cfg.generator_loss == GeneratorLoss::Minimax
                  ? nd::neg(lr.value)
                  : losses::joint_lr_loss(nd::neg(g.d_gen), nd::neg(g.d_data)).value;
    auto grads = tape.gradients(obj, concat(g.gp, g.fp));
    out.generator.assign(grads.begin(), grads.begin() + static_cast<std::ptrdiff_t>(g.gp.size()));
    out.reconstructor.assign(grads.begin() + static_cast<std::ptrdiff_t>(g.gp.size()), grads.end());
    out.losses = {{"disc_lr", lr.item()}, {"gen_loss", obj.item()}};
    return out;
}

namespace {

Var gan_generator_objective(const Networks& nets, std::span<const Var> dp, const Var& x_gen, const Var& x,
                            GeneratorLoss kind) {
    Var d_fake = nn::mlp_forward(nets.discriminator, dp, x_gen);
    if (kind == GeneratorLoss::Enhanced) return losses::enhanced_generator_loss(nd::neg(d_fake)).value;
    Var d_real = nn::mlp_forward(nets.discriminator, dp, x);
    return losses::gan_objective(d_fake, d_real).value;
}

}  // namespace

StepGradients gan_gradients(const Networks& nets, const StepSamples& s, const TrainerConfig& cfg) {
    Tape tape;
    auto gp = nn::bind(tape, nets.generator);
    auto dp = nn::bind(tape, nets.discriminator);
    Var x = tape.constant(s.x);
    Var x_gen = nn::mlp_forward(nets.generator, gp, generator_input(tape, s));
    Var d_fake = nn::mlp_forward(nets.discriminator, dp, x_gen);
    Var d_real = nn::mlp_forward(nets.discriminator, dp, x);
    auto obj = losses::gan_objective(d_fake, d_real);
    StepGradients out;
    out.discriminator = negated(tape.gradients(obj.value, dp));

    Var gen = gan_generator_objective(nets, dp, x_gen, x, cfg.generator_loss);
    out.generator = tape.gradients(gen, gp);
    out.losses = {{"gan_objective", obj.item()}, {"gen_loss", gen.item()}};
    return out;
}

StepGradients unrolled_gradients(const Networks& nets, const StepSamples& s, const TrainerConfig& cfg) {
    Tape tape;
    auto gp = nn::bind(tape, nets.generator);
    auto dp = nn::bind(tape, nets.discriminator);
    Var x = tape.constant(s.x);
    Var x_gen = nn::mlp_forward(nets.generator, gp, generator_input(tape, s));
    Var d_fake = nn::mlp_forward(nets.discriminator, dp, x_gen);
    Var d_real = nn::mlp_forward(nets.discriminator, dp, x);
    auto obj = losses::gan_objective(d_fake, d_real);
    StepGradients out;
    out.discriminator = negated(tape.gradients(obj.value, dp));

    std::vector<Var> omega = dp;
    for (std::size_t j = 0; j < cfg.unroll_steps; ++j) {
        Var inner = losses::gan_objective(nn::mlp_forward(nets.discriminator, omega, x_gen),
                                          nn::mlp_forward(nets.discriminator, omega, x))
                        .value;
        auto g = tape.grad(inner, omega, nd::GradMode::CreateGraph);
        for (std::size_t i = 0; i < omega.size(); ++i) omega[i] = nd::add(omega[i], nd::scale(g[i], cfg.unroll_lr));
    }
    Var gen = gan_generator_objective(nets, omega, x_gen, x, cfg.generator_loss);
    out.generator = tape.gradients(gen, gp);
    out.losses = {{"gan_objective", obj.item()}, {"gen_loss", gen.item()}};
    return out;
}

Tensor TrainedModel::sample(nd::Rng& rng, std::size_t n) const {
    return nn::mlp_apply(generator, nd::randn(rng, {n, config.generator_input_dim()}));
}

namespace {

constexpr char kModelMagic[8] = {'V', 'G', 'M', 'O', 'D', 'E', 'L', 0};
constexpr std::uint32_t kModelVersion = 1;

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <class T>
void put(nn::Blob& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

void put_chunk(nn::Blob& out, std::span<const std::uint8_t> chunk) {
    put<std::uint64_t>(out, chunk.size());
    out.insert(out.end(), chunk.begin(), chunk.end());
}

class ModelReader {
public:
    explicit ModelReader(std::span<const std::uint8_t> in) : in_(in) {}
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::span<const std::uint8_t> chunk() {
        const auto n = get<std::uint64_t>();
        need(n);
        auto out = in_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    void need(std::uint64_t n) const {
        if (n > in_.size() - pos_) throw nn::CorruptBlob("model file: truncated");
    }
    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace

// Model file: magic, u32 version, u64 data_dim, chunk(config JSON), chunk(G), chunk(D),
// u8 has_F, [chunk(F)], u64 FNV-1a checksum. A chunk is a u64 length and raw bytes.
nn::Blob encode_model(const TrainedModel& m) {
    nn::Blob out(kModelMagic, kModelMagic + 8);
    put<std::uint32_t>(out, kModelVersion);
    put<std::uint64_t>(out, m.data_dim);
    const std::string cfg = to_json(m.config).dump();
    put_chunk(out, std::span(reinterpret_cast<const std::uint8_t*>(cfg.data()), cfg.size()));
    put_chunk(out, nn::encode_net(m.generator));
    put_chunk(out, nn::encode_net(m.discriminator));
    put<std::uint8_t>(out, m.reconstructor ? 1 : 0);
    if (m.reconstructor) put_chunk(out, nn::encode_net(*m.reconstructor));
    put<std::uint64_t>(out, fnv1a(out));
    return out;
}

TrainedModel decode_model(std::span<const std::uint8_t> blob) {
    if (blob.size() < 8 + 4 + 8 || std::memcmp(blob.data(), kModelMagic, 8) != 0)
        throw nn::CorruptBlob("model file: bad magic");
    const auto body = blob.first(blob.size() - 8);
    std::uint64_t stored;
    std::memcpy(&stored, blob.data() + body.size(), 8);
    if (stored != fnv1a(body)) throw nn::CorruptBlob("model file: checksum mismatch");
    ModelReader r(body);
    r.need(8);
    for (int i = 0; i < 8; ++i) r.get<std::uint8_t>();
    if (const auto v = r.get<std::uint32_t>(); v != kModelVersion)
        throw nn::CorruptBlob("model file: unsupported version " + std::to_string(v));
    TrainedModel m;
    m.data_dim = r.get<std::uint64_t>();
    const auto cfg = r.chunk();
    try {
        m.config = trainer_config_from_json(nlohmann::json::parse(cfg.begin(), cfg.end()));
    } catch (const std::exception& e) {
        throw nn::CorruptBlob(std::string("model file: bad config: ") + e.what());
    }
    m.generator = nn::decode_net(r.chunk());
    m.discriminator = nn::decode_net(r.chunk());
    if (r.get<std::uint8_t>() != 0) m.reconstructor = nn::decode_net(r.chunk());
    if (r.pos() != body.size()) throw nn::CorruptBlob("model file: trailing bytes");
    return m;
}

TrainingDiverged::TrainingDiverged(std::size_t step, const std::string& what, nn::Blob last_good)
    : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + what),
      step_(step),
      last_good_(std::move(last_good)) {}

TrainingState init_state(const TrainerConfig& cfg, std::size_t data_dim) {
    TrainingState st{init_networks(cfg, data_dim), {}, std::nullopt, {}};
    st.generator_opt = nn::OptState::for_params(cfg.generator_opt, st.nets.generator);
    if (st.nets.reconstructor)
        st.reconstructor_opt = nn::OptState::for_params(cfg.reconstructor_opt, *st.nets.reconstructor);
    st.discriminator_opt = nn::OptState::for_params(cfg.discriminator_opt, st.nets.discriminator);
    return st;
}

namespace {

TrainedModel to_model(const TrainingState& st, const TrainerConfig& cfg, std::size_t data_dim,
                      std::vector<TraceRecord> trace = {}) {
    TrainedModel m;
    m.config = cfg;
    m.data_dim = data_dim;
    m.generator = st.nets.generator;
    m.reconstructor = st.nets.reconstructor;
    m.discriminator = st.nets.discriminator;
    m.trace = std::move(trace);
    return m;
}

using GradFn = StepGradients (*)(const Networks&, const StepSamples&, const TrainerConfig&);

GradFn grad_fn(Method m) {
    switch (m) {
        case Method::Gan: return gan_gradients;
        case Method::Ali: return ali_gradients;
        case Method::Unrolled: return unrolled_gradients;
        case Method::Veegan: return veegan_gradients;
        case Method::VeeganDae: return veegan_dae_gradients;
    }
    throw std::invalid_argument("unknown method");
}

void check_losses(const LossTrace& losses) {
    for (const auto& [name, v] : losses)
        if (!std::isfinite(v)) throw nd::NonFiniteError("loss '" + name + "' is " + std::to_string(v));
}

void pretrain_regress(const synth::DataSource& data, const TrainerConfig& cfg, TrainingState& st) {
    const nd::Rng root(cfg.seed);
    nd::Rng pool_rng = root.split("pretrain_pool");
    const Tensor pool_x = data.draw(pool_rng, cfg.pretrain_pool);
    const Tensor pool_t = nd::randn(pool_rng, {cfg.pretrain_pool, cfg.latent_dim});
    nd::Rng pick = root.split("pretrain_batches");
    const std::size_t n = cfg.batch_size, dx = pool_x.cols(), dz = cfg.latent_dim;
    for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
        Tensor xb({n, dx}), tb({n, dz});
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = pick.index(cfg.pretrain_pool);
            for (std::size_t c = 0; c < dx; ++c) xb.at(i, c) = pool_x.at(j, c);
            for (std::size_t c = 0; c < dz; ++c) tb.at(i, c) = pool_t.at(j, c);
        }
        Tape tape;
        auto fp = nn::bind(tape, *st.nets.reconstructor);
        Var pred = nn::mlp_forward(*st.nets.reconstructor, fp, tape.constant(xb));
        auto loss = losses::reconstruction_loss(tape.constant(tb), pred);
        nn::optimizer_step(*st.nets.reconstructor, tape.gradients(loss.value, fp), *st.reconstructor_opt);
    }
}

}  // namespace

void pretrain_reconstructor(const synth::DataSource& data, const TrainerConfig& cfg, TrainingState& st) {
    if (cfg.pretrain_steps == 0) return;
    if (!st.nets.reconstructor) throw std::invalid_argument("pretraining requires a reconstructor network");
    if (cfg.pretrain_mode == PretrainMode::Regress) {
        pretrain_regress(data, cfg, st);
        return;
    }
    SampleStreams streams(nd::Rng(cfg.seed).split("pretrain").seed());
    const GradFn fn = grad_fn(cfg.method);
    for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
        const StepSamples s = streams.draw(cfg, data);
        const StepGradients g = fn(st.nets, s, cfg);
        nn::optimizer_step(st.nets.discriminator, g.discriminator, st.discriminator_opt);
        nn::optimizer_step(*st.nets.reconstructor, g.reconstructor, *st.reconstructor_opt);
    }
}

namespace {

TrainedModel run_training(const synth::DataSource& data, const TrainerConfig& cfg) {
    cfg.validate();
    TrainingState st = init_state(cfg, data.dim());
    pretrain_reconstructor(data, cfg, st);
    SampleStreams streams(cfg.seed);
    const GradFn fn = grad_fn(cfg.method);
    std::vector<TraceRecord> trace;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const StepSamples s = streams.draw(cfg, data);
        StepGradients g;
        try {
            g = fn(st.nets, s, cfg);
            check_losses(g.losses);
            // Updates are simultaneous: every gradient above was taken at the step-start parameters.
            nn::optimizer_step(st.nets.discriminator, g.discriminator, st.discriminator_opt);
            if (st.nets.reconstructor)
                nn::optimizer_step(*st.nets.reconstructor, g.reconstructor, *st.reconstructor_opt);
            nn::optimizer_step(st.nets.generator, g.generator, st.generator_opt);
        } catch (const nd::NonFiniteError& e) {
            throw TrainingDiverged(step, e.what(), encode_model(to_model(st, cfg, data.dim())));
        } catch (const nn::NonFiniteGradient& e) {
            throw TrainingDiverged(step, e.what(), encode_model(to_model(st, cfg, data.dim())));
        }
        if (step % cfg.trace_every == 0 || step + 1 == cfg.steps) trace.push_back({step, std::move(g.losses)});
    }
    return to_model(st, cfg, data.dim(), std::move(trace));
}

TrainedModel train_as(Method m, const synth::DataSource& data, TrainerConfig cfg) {
    cfg.method = m;
    return run_training(data, cfg);
}

}  // namespace

TrainedModel train_veegan(const synth::DataSource& data, const TrainerConfig& cfg) {
    if (cfg.method != Method::Veegan && cfg.method != Method::VeeganDae)
        return train_as(Method::Veegan, data, cfg);
    return run_training(data, cfg);
}
TrainedModel train_gan(const synth::DataSource& data, const TrainerConfig& cfg) {
    return train_as(Method::Gan, data, cfg);
}
TrainedModel train_ali(const synth::DataSource& data, const TrainerConfig& cfg) {
    return train_as(Method::Ali, data, cfg);
}
TrainedModel train_unrolled(const synth::DataSource& data, const TrainerConfig& cfg) {
    return train_as(Method::Unrolled, data, cfg);
}

TrainedModel train(const synth::DataSource& data, const TrainerConfig& cfg) { return run_training(data, cfg); }

}  // namespace veegan::train
