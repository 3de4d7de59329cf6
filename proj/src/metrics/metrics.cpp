#include "veegan/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "veegan/ops.hpp"
#include "veegan/optim.hpp"

namespace veegan::metrics {

namespace {

void require_dim(const nd::Tensor& samples, const synth::MixtureSpec& spec, const char* op) {
    if (samples.rank() != 2 || samples.cols() != spec.dim()) {
        throw nd::ShapeError(std::string(op) + ": samples of shape " + nd::shape_str(samples.shape()) +
                             " do not match mixture dimension " + std::to_string(spec.dim()));
    }
}

/// Nearest mode index and squared distance per sample.
void nearest(const nd::Tensor& samples, const synth::MixtureSpec& spec, std::vector<std::size_t>& idx,
             std::vector<double>& dist2) {
    const std::size_t n = samples.rows(), d = spec.dim(), m = spec.n_modes();
    idx.assign(n, 0);
    dist2.assign(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = samples.at(i, c) - spec.means.at(j, c);
                s += diff * diff;
            }
            if (s < dist2[i]) {
                dist2[i] = s;
                idx[i] = j;
            }
        }
    }
}

}  // namespace

std::vector<bool> high_quality_mask(const nd::Tensor& samples, const synth::MixtureSpec& spec) {
    require_dim(samples, spec, "high_quality_mask");
    std::vector<std::size_t> idx;
    std::vector<double> dist2;
    nearest(samples, spec, idx, dist2);
    const double r = spec.quality_radius();
    std::vector<bool> mask(samples.rows());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = std::sqrt(dist2[i]) <= r;
    return mask;
}

std::vector<std::size_t> nearest_mode(const nd::Tensor& samples, const synth::MixtureSpec& spec) {
    require_dim(samples, spec, "nearest_mode");
    std::vector<std::size_t> idx;
    std::vector<double> dist2;
    nearest(samples, spec, idx, dist2);
    return idx;
}

std::size_t modes_captured(const nd::Tensor& samples, const synth::MixtureSpec& spec) {
    require_dim(samples, spec, "modes_captured");
    std::vector<std::size_t> idx;
    std::vector<double> dist2;
    nearest(samples, spec, idx, dist2);
    const double r = spec.quality_radius();
    std::vector<bool> hit(spec.n_modes(), false);
    for (std::size_t i = 0; i < idx.size(); ++i)
        if (std::sqrt(dist2[i]) <= r) hit[idx[i]] = true;
    std::size_t count = 0;
    for (bool h : hit) count += h ? 1 : 0;
    return count;
}

SampleMetrics evaluate_samples(const nd::Tensor& samples, const synth::MixtureSpec& spec) {
    require_dim(samples, spec, "evaluate_samples");
    if (samples.rows() == 0) throw std::invalid_argument("evaluate_samples: empty sample set");
    const auto mask = high_quality_mask(samples, spec);
    std::size_t hq = 0;
    for (bool b : mask) hq += b ? 1 : 0;
    SampleMetrics out;
    out.n_samples = samples.rows();
    out.modes = modes_captured(samples, spec);
    out.hq_fraction = static_cast<double>(hq) / static_cast<double>(out.n_samples);
    return out;
}

namespace {

/// Per-row ||x - G(z)||^2 / D after `steps` Adam updates on z. Throws on non-finite values.
std::vector<double> ivom_descent(const nn::NetParams& g, const nd::Tensor& targets, nd::Tensor z,
                                 const IvomConfig& cfg) {
    const std::size_t n = targets.rows(), d = targets.cols();
    nn::OptState state;
    state.config.kind = nn::OptimizerKind::Adam;
    state.config.lr = cfg.lr;
    state.config.beta1 = 0.9;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        nd::Tape tape;
        auto params = nn::bind_constant(tape, g);
        nd::Var zv = tape.leaf(z);
        nd::Var diff = nd::sub(nn::mlp_forward(g, params, zv), tape.constant(targets));
        std::array<nd::Var, 1> wrt{zv};
        auto grads = tape.gradients(nd::squared_l2(diff), wrt);
        std::array<nd::Tensor*, 1> ps{&z};
        nn::adam_step(std::span<nd::Tensor* const>(ps), grads, state);
    }
    const nd::Tensor out = nn::mlp_apply(g, z);
    std::vector<double> mse(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double e = targets.at(i, c) - out.at(i, c);
            s += e * e;
        }
        mse[i] = s / static_cast<double>(d);
        if (!std::isfinite(mse[i])) throw nd::NonFiniteError("ivom: non-finite reconstruction error");
    }
    return mse;
}

}  // namespace

IvomResult ivom(const nn::NetParams& generator, const nd::Tensor& targets, const IvomConfig& cfg, nd::Rng& rng) {
    if (targets.rank() != 2 || targets.cols() != generator.out_dim()) {
        throw nd::ShapeError("ivom: targets of shape " + nd::shape_str(targets.shape()) +
                             " do not match generator output dimension " + std::to_string(generator.out_dim()));
    }
    if (cfg.restarts == 0) throw std::invalid_argument("ivom: restarts must be positive");
    const std::size_t n = targets.rows(), k = generator.in_dim();
    const double inf = std::numeric_limits<double>::infinity();
    IvomResult res;
    res.per_target.assign(n, inf);
    std::vector<bool> ok(n, false);
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        const nd::Tensor z0 = nd::randn(rng, {n, k});
        std::vector<double> mse;
        try {
            mse = ivom_descent(generator, targets, z0, cfg);
        } catch (const std::domain_error&) {
            // Rows do not interact, so rerunning each alone isolates the diverging targets.
            mse.assign(n, inf);
            for (std::size_t i = 0; i < n; ++i) {
                try {
                    mse[i] = ivom_descent(generator, targets.row(i).reshaped({1, targets.cols()}),
                                          z0.row(i).reshaped({1, k}), cfg)[0];
                } catch (const std::domain_error&) {
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (std::isfinite(mse[i])) {
                ok[i] = true;
                res.per_target[i] = std::min(res.per_target[i], mse[i]);
            }
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!ok[i]) ++res.diverged;
        total += res.per_target[i];
    }
    res.mean_mse = n == 0 ? 0.0 : total / static_cast<double>(n);
    return res;
}

Summary summarize(const std::vector<double>& values) {
    Summary s;
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

MetricsReport aggregate(std::vector<RunMetrics> runs, std::size_t n_samples) {
    if (runs.empty()) throw std::invalid_argument("aggregate: no runs");
    MetricsReport rep;
    rep.n_samples = n_samples;
    std::vector<double> modes, hq, iv;
    for (const auto& r : runs) {
        modes.push_back(static_cast<double>(r.modes));
        hq.push_back(r.hq_fraction);
        if (r.ivom) iv.push_back(*r.ivom);
    }
    rep.modes = summarize(modes);
    rep.hq_fraction = summarize(hq);
    if (iv.size() == runs.size()) rep.ivom = summarize(iv);
    rep.runs = std::move(runs);
    return rep;
}

RunMetrics evaluate_model(const train::TrainedModel& model, const synth::MixtureSpec& spec, const EvalConfig& cfg) {
    const nd::Rng root(cfg.seed);
    nd::Rng sample_rng = root.split("eval_samples");
    const auto sm = evaluate_samples(model.sample(sample_rng, cfg.n_samples), spec);
    RunMetrics rm;
    rm.seed = model.config.seed;
    rm.modes = sm.modes;
    rm.hq_fraction = sm.hq_fraction;
    if (cfg.ivom) {
        nd::Rng target_rng = root.split("ivom_targets");
        nd::Rng restart_rng = root.split("ivom_restarts");
        const nd::Tensor targets = synth::sample_batch(spec, target_rng, cfg.ivom_targets).samples;
        rm.ivom = ivom(model.generator, targets, cfg.ivom_config, restart_rng).mean_mse;
    }
    return rm;
}

MetricsReport evaluate(const std::vector<train::TrainedModel>& models, const synth::MixtureSpec& spec,
                       const EvalConfig& cfg) {
    std::vector<RunMetrics> runs;
    runs.reserve(models.size());
    for (const auto& m : models) runs.push_back(evaluate_model(m, spec, cfg));
    return aggregate(std::move(runs), cfg.n_samples);
}

}  // namespace veegan::metrics
