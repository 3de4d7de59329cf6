#include "veegan/experiment.hpp"

#include <atomic>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "veegan/version.hpp"

namespace veegan::exp {

namespace fs = std::filesystem;

ConfigError::ConfigError(std::string key, const std::string& what)
    : std::runtime_error("config key '" + key + "': " + what), key_(std::move(key)) {}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    std::istringstream in(v);
    T out{};
    in >> out;
    if (in.fail() || !(in >> std::ws).eof()) throw ConfigError(key, "cannot parse '" + v + "'");
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(out)) throw ConfigError(key, "value must be finite");
    }
    return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    if (!v.empty() && v[0] == '-') throw ConfigError(key, "must be non-negative");
    return parse_number<std::size_t>(key, v);
}

bool parse_bool(const std::string& key, const std::string& v) {
    const auto s = lower(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(parse_count(key, item));
    return out;
}

template <class F>
auto convert(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(key, e.what());
    }
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, std::map<std::string, Setter>>& setters() {
    static const std::map<std::string, std::map<std::string, Setter>> table = [] {
        std::map<std::string, std::map<std::string, Setter>> t;
        auto& e = t["experiment"];
        e["name"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.name = v; };
        e["methods"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.methods.clear();
            for (const auto& m : split_list(v)) c.methods.push_back(convert(k, [&] { return train::method_from_string(lower(m)); }));
            if (c.methods.empty()) throw ConfigError(k, "at least one method is required");
        };
        e["n_runs"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.n_runs = parse_count(k, v); };
        e["master_seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.master_seed = parse_number<std::uint64_t>(k, v);
        };
        e["output_dir"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; };
        e["record_wallclock"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.record_wallclock = parse_bool(k, v);
        };
        e["save_models"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.save_models = parse_bool(k, v); };
        e["export_density"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.export_density = parse_bool(k, v);
        };
        e["density_resolution"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.density_resolution = parse_count(k, v);
        };
        e["density_samples"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.density_samples = parse_count(k, v);
        };
        e["jobs"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.jobs = parse_count(k, v); };

        auto& d = t["dataset"];
        d["kind"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            const auto s = lower(v);
            if (s != "ring" && s != "grid" && s != "highdim" && s != "gaussian")
                throw ConfigError(k, "expected ring, grid, highdim or gaussian, got '" + v + "'");
            c.dataset.kind = s;
        };
        d["n_modes"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.n_modes = parse_count(k, v); };
        d["radius"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.radius = parse_number<double>(k, v); };
        d["sigma"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.sigma = parse_number<double>(k, v); };
        d["side"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.side = parse_count(k, v); };
        d["spacing"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.dataset.spacing = parse_number<double>(k, v);
        };
        d["d_low"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.d_low = parse_count(k, v); };
        d["d_high"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.d_high = parse_count(k, v); };
        d["mode_scale"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.dataset.mode_scale = parse_number<double>(k, v);
        };
        d["embed_seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.dataset.embed_seed = parse_number<std::uint64_t>(k, v);
        };
        d["dim"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.dim = parse_count(k, v); };

        auto& tr = t["trainer"];
        tr["latent_dim"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.trainer.latent_dim = parse_count(k, v); };
        tr["extra_noise_dims"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.extra_noise_dims = parse_count(k, v);
        };
        tr["batch_size"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.trainer.batch_size = parse_count(k, v); };
        tr["steps"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.trainer.steps = parse_count(k, v); };
        tr["generator_hidden"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.generator_hidden = parse_widths(k, v);
        };
        tr["reconstructor_hidden"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.reconstructor_hidden = parse_widths(k, v);
        };
        tr["discriminator_hidden"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.discriminator_hidden = parse_widths(k, v);
        };
        auto activation = [](nn::Activation train::TrainerConfig::*field) {
            return [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.trainer.*field = convert(k, [&] { return nn::activation_from_string(lower(v)); });
            };
        };
        tr["generator_activation"] = activation(&train::TrainerConfig::generator_activation);
        tr["reconstructor_activation"] = activation(&train::TrainerConfig::reconstructor_activation);
        tr["discriminator_activation"] = activation(&train::TrainerConfig::discriminator_activation);
        tr["leaky_slope"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.leaky_slope = parse_number<double>(k, v);
        };
        auto lr = [](nn::OptimizerConfig train::TrainerConfig::*field) {
            return [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
                (c.trainer.*field).lr = parse_number<double>(k, v);
            };
        };
        tr["generator_lr"] = lr(&train::TrainerConfig::generator_opt);
        tr["reconstructor_lr"] = lr(&train::TrainerConfig::reconstructor_opt);
        tr["discriminator_lr"] = lr(&train::TrainerConfig::discriminator_opt);
        auto all_opts = [](std::function<void(nn::OptimizerConfig&, const std::string&, const std::string&)> f) {
            return [f](ExperimentConfig& c, const std::string& k, const std::string& v) {
                for (auto* o : {&c.trainer.generator_opt, &c.trainer.reconstructor_opt, &c.trainer.discriminator_opt}) f(*o, k, v);
            };
        };
        tr["optimizer"] = all_opts([](nn::OptimizerConfig& o, const std::string& k, const std::string& v) {
            o.kind = convert(k, [&] { return nn::optimizer_from_string(lower(v)); });
        });
        tr["beta1"] = all_opts([](nn::OptimizerConfig& o, const std::string& k, const std::string& v) { o.beta1 = parse_number<double>(k, v); });
        tr["beta2"] = all_opts([](nn::OptimizerConfig& o, const std::string& k, const std::string& v) { o.beta2 = parse_number<double>(k, v); });
        tr["eps"] = all_opts([](nn::OptimizerConfig& o, const std::string& k, const std::string& v) { o.eps = parse_number<double>(k, v); });
        tr["reconstructor_noise_std"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.reconstructor_noise_std = parse_number<double>(k, v);
        };
        tr["unroll_steps"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.unroll_steps = parse_count(k, v);
        };
        tr["unroll_lr"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.unroll_lr = parse_number<double>(k, v);
        };
        tr["pretrain_steps"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.pretrain_steps = parse_count(k, v);
        };
        tr["pretrain_mode"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            const auto s = lower(v);
            if (s == "warmup") c.trainer.pretrain_mode = train::PretrainMode::Warmup;
            else if (s == "regress") c.trainer.pretrain_mode = train::PretrainMode::Regress;
            else throw ConfigError(k, "expected warmup or regress, got '" + v + "'");
        };
        tr["pretrain_pool"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.pretrain_pool = parse_count(k, v);
        };
        tr["dae_lambda"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.dae_lambda = parse_number<double>(k, v);
        };
        tr["generator_loss"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            const auto s = lower(v);
            if (s == "minimax") c.trainer.generator_loss = train::GeneratorLoss::Minimax;
            else if (s == "enhanced") c.trainer.generator_loss = train::GeneratorLoss::Enhanced;
            else throw ConfigError(k, "expected minimax or enhanced, got '" + v + "'");
        };
        tr["veegan_adversarial"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            const auto s = lower(v);
            if (s == "raw") c.trainer.veegan_adversarial = train::VeeganAdversarialTerm::Raw;
            else if (s == "logistic") c.trainer.veegan_adversarial = train::VeeganAdversarialTerm::Logistic;
            else throw ConfigError(k, "expected raw or logistic, got '" + v + "'");
        };
        tr["trace_every"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.trainer.trace_every = parse_count(k, v);
        };

        auto& ev = t["eval"];
        ev["n_samples"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.n_samples = parse_count(k, v); };
        ev["ivom"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.ivom = parse_bool(k, v); };
        ev["ivom_targets"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.eval.ivom_targets = parse_count(k, v);
        };
        ev["ivom_steps"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.eval.ivom_config.steps = parse_count(k, v);
        };
        ev["ivom_restarts"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.eval.ivom_config.restarts = parse_count(k, v);
        };
        ev["ivom_lr"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.eval.ivom_config.lr = parse_number<double>(k, v);
        };
        ev["seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.eval.seed = parse_number<std::uint64_t>(k, v);
        };
        return t;
    }();
    return table;
}

void validate(const ExperimentConfig& c) {
    if (c.n_runs == 0) throw ConfigError("experiment.n_runs", "must be positive");
    if (c.jobs == 0) throw ConfigError("experiment.jobs", "must be positive");
    if (c.density_resolution == 0) throw ConfigError("experiment.density_resolution", "must be positive");
    if (c.eval.n_samples == 0) throw ConfigError("eval.n_samples", "must be positive");
    if (c.eval.ivom_config.restarts == 0) throw ConfigError("eval.ivom_restarts", "must be positive");
    try {
        c.trainer.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("trainer", e.what());
    }
    try {
        synth::validate(build_mixture(c.dataset));
    } catch (const std::exception& e) {
        throw ConfigError("dataset", e.what());
    }
}

}  // namespace

synth::MixtureSpec build_mixture(const DatasetConfig& d) {
    if (d.kind == "ring") return synth::make_ring(d.n_modes, d.radius, d.sigma.value_or(0.02));
    if (d.kind == "grid") return synth::make_grid(d.side, d.spacing, d.sigma.value_or(0.05));
    if (d.kind == "highdim") {
        nd::Rng rng(d.embed_seed);
        return synth::make_highdim(rng, d.n_modes, d.d_low, d.d_high, d.sigma.value_or(0.1), d.mode_scale);
    }
    if (d.kind == "gaussian") {
        auto spec = synth::make_standard_normal(d.dim);
        if (d.sigma) spec.sigma = *d.sigma;
        return spec;
    }
    throw std::invalid_argument("unknown dataset kind '" + d.kind + "'");
}

ExperimentConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("<syntax>", "line " + std::to_string(e.line()) + ": " + e.message());
    }
    ExperimentConfig cfg;
    const auto& table = setters();
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(section, "key outside any [section]");
        const auto sec = table.find(section);
        if (sec == table.end()) throw ConfigError(section, "unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            const auto it = sec->second.find(key);
            if (it == sec->second.end()) throw ConfigError(full, "unknown key");
            it->second(cfg, full, trim(value.get_value<std::string>()));
        }
    }
    cfg.trainer.seed = cfg.master_seed;
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void apply_long_scale(ExperimentConfig& cfg) {
    if (cfg.dataset.kind != "highdim") throw ConfigError("dataset.kind", "--long applies to highdim configs only");
    cfg.dataset.d_low = 700;
    cfg.dataset.d_high = 1200;
}

nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json methods = nlohmann::json::array();
    for (auto m : c.methods) methods.push_back(train::to_string(m));
    nlohmann::json dataset = {{"kind", c.dataset.kind},     {"n_modes", c.dataset.n_modes}, {"radius", c.dataset.radius},
                              {"side", c.dataset.side},     {"spacing", c.dataset.spacing}, {"d_low", c.dataset.d_low},
                              {"d_high", c.dataset.d_high}, {"mode_scale", c.dataset.mode_scale},
                              {"embed_seed", c.dataset.embed_seed}, {"dim", c.dataset.dim}};
    dataset["sigma"] = build_mixture(c.dataset).sigma;
    nlohmann::json trainer = train::to_json(c.trainer);
    trainer.erase("method");
    trainer.erase("seed");
    return {
        {"experiment",
         {{"name", c.name},
          {"methods", methods},
          {"n_runs", c.n_runs},
          {"master_seed", c.master_seed},
          {"output_dir", c.output_dir},
          {"record_wallclock", c.record_wallclock},
          {"save_models", c.save_models},
          {"export_density", c.export_density},
          {"density_resolution", c.density_resolution},
          {"density_samples", c.density_samples},
          {"jobs", c.jobs}}},
        {"dataset", dataset},
        {"trainer", trainer},
        {"eval",
         {{"n_samples", c.eval.n_samples},
          {"ivom", c.eval.ivom},
          {"ivom_targets", c.eval.ivom_targets},
          {"ivom_steps", c.eval.ivom_config.steps},
          {"ivom_restarts", c.eval.ivom_config.restarts},
          {"ivom_lr", c.eval.ivom_config.lr},
          {"seed", c.eval.seed}}},
    };
}

std::uint64_t run_seed(std::uint64_t master_seed, std::size_t run) { return nd::splitmix64(master_seed + run); }

fs::path resolve_output_dir(const ExperimentConfig& cfg) {
    fs::path dir = cfg.output_dir.empty() ? fs::path("out") / cfg.name : fs::path(cfg.output_dir);
    if (dir.is_relative()) {
        if (const char* root = std::getenv("VEEGAN_OUT_ROOT"); root != nullptr && *root != '\0') dir = fs::path(root) / dir;
    }
    return dir;
}

bool ExperimentResult::all_ok() const {
    for (const auto& r : runs)
        if (!r.ok) return false;
    return true;
}

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string run_stem(train::Method m, std::size_t run) { return train::to_string(m) + "_run" + std::to_string(run); }

}  // namespace

std::string trace_csv(const std::vector<train::TraceRecord>& trace) {
    std::string out = "step";
    if (!trace.empty())
        for (const auto& [name, v] : trace.front().losses) out += "," + name;
    out += "\n";
    for (const auto& rec : trace) {
        out += std::to_string(rec.step);
        for (const auto& [name, v] : rec.losses) out += "," + fmt("%.17g", v);
        out += "\n";
    }
    return out;
}

std::string results_csv(const ExperimentConfig& cfg, const std::vector<RunRecord>& runs) {
    std::string out = "# schema_version=1\nmethod,run,seed,modes,hq_fraction,ivom,wallclock_s,status\n";
    std::vector<train::Method> order;
    for (const auto& r : runs)
        if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
    for (auto m : order) {
        std::vector<double> modes, hq, iv;
        for (const auto& r : runs) {
            if (r.method != m) continue;
            out += train::to_string(m) + "," + std::to_string(r.run) + "," + std::to_string(r.seed) + ",";
            if (r.ok && r.metrics) {
                const auto& mt = *r.metrics;
                out += std::to_string(mt.modes) + "," + fmt("%.6f", mt.hq_fraction) + ",";
                out += mt.ivom ? fmt("%.9g", *mt.ivom) : "";
                modes.push_back(static_cast<double>(mt.modes));
                hq.push_back(mt.hq_fraction);
                if (mt.ivom) iv.push_back(*mt.ivom);
            } else {
                out += ",,";
            }
            out += ",";
            if (cfg.record_wallclock) out += fmt("%.3f", r.train_seconds + r.eval_seconds);
            out += r.ok ? ",ok\n" : ",failed\n";
        }
        const auto ms = metrics::summarize(modes), hs = metrics::summarize(hq), is = metrics::summarize(iv);
        const bool any = !modes.empty(), all_iv = any && iv.size() == modes.size();
        out += train::to_string(m) + ",mean,," + (any ? fmt("%.6f", ms.mean) : "") + "," + (any ? fmt("%.6f", hs.mean) : "") +
               "," + (all_iv ? fmt("%.9g", is.mean) : "") + ",,aggregate\n";
        out += train::to_string(m) + ",std,," + (any ? fmt("%.6f", ms.std) : "") + "," + (any ? fmt("%.6f", hs.std) : "") +
               "," + (all_iv ? fmt("%.9g", is.std) : "") + ",,aggregate\n";
    }
    return out;
}

std::string summary_csv(const std::vector<RunRecord>& runs) {
    std::string out = "method,modes_mean,modes_std,hq_percent_mean,hq_percent_std,ivom_mean,ivom_std,runs_ok,runs_total\n";
    std::vector<train::Method> order;
    for (const auto& r : runs)
        if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
    for (auto m : order) {
        std::vector<double> modes, hq, iv;
        std::size_t total = 0;
        for (const auto& r : runs) {
            if (r.method != m) continue;
            ++total;
            if (!r.ok || !r.metrics) continue;
            modes.push_back(static_cast<double>(r.metrics->modes));
            hq.push_back(100.0 * r.metrics->hq_fraction);
            if (r.metrics->ivom) iv.push_back(*r.metrics->ivom);
        }
        const auto ms = metrics::summarize(modes), hs = metrics::summarize(hq), is = metrics::summarize(iv);
        const bool any = !modes.empty(), all_iv = any && iv.size() == modes.size();
        out += train::to_string(m) + "," + (any ? fmt("%.2f", ms.mean) + "," + fmt("%.2f", ms.std) : ",") + "," +
               (any ? fmt("%.2f", hs.mean) + "," + fmt("%.2f", hs.std) : ",") + "," +
               (all_iv ? fmt("%.6g", is.mean) + "," + fmt("%.6g", is.std) : ",") + "," + std::to_string(modes.size()) +
               "," + std::to_string(total) + "\n";
    }
    return out;
}

std::vector<std::vector<double>> density_grid(const nd::Tensor& samples, const DensityBounds& b, std::size_t res) {
    if (samples.rank() != 2 || samples.cols() != 2) {
        throw nd::ShapeError("density_grid: expected [n x 2] samples, got " + nd::shape_str(samples.shape()));
    }
    if (res == 0) throw std::invalid_argument("density_grid: resolution must be positive");
    if (!(b.xmax > b.xmin) || !(b.ymax > b.ymin)) throw std::invalid_argument("density_grid: empty bounds");
    std::vector<std::vector<double>> grid(res, std::vector<double>(res, 0.0));
    const std::size_t n = samples.rows();
    if (n == 0) return grid;
    auto cell = [res](double v, double lo, double hi) -> std::optional<std::size_t> {
        if (!(v >= lo && v <= hi)) return std::nullopt;
        const auto i = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(res));
        return std::min(i, res - 1);
    };
    std::vector<std::vector<std::size_t>> counts(res, std::vector<std::size_t>(res, 0));
    for (std::size_t i = 0; i < n; ++i) {
        const auto cx = cell(samples.at(i, 0), b.xmin, b.xmax);
        const auto cy = cell(samples.at(i, 1), b.ymin, b.ymax);
        if (cx && cy) ++counts[*cy][*cx];
    }
    for (std::size_t r = 0; r < res; ++r)
        for (std::size_t c = 0; c < res; ++c) grid[r][c] = static_cast<double>(counts[r][c]) / static_cast<double>(n);
    return grid;
}

std::string density_grid_text(const std::vector<std::vector<double>>& grid, const DensityBounds& b, std::size_t n) {
    std::string out = "# xmin=" + fmt("%.17g", b.xmin) + " xmax=" + fmt("%.17g", b.xmax) + " ymin=" + fmt("%.17g", b.ymin) +
                      " ymax=" + fmt("%.17g", b.ymax) + " resolution=" + std::to_string(grid.size()) +
                      " n=" + std::to_string(n) + "\n";
    for (const auto& row : grid) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out += " ";
            out += fmt("%.10g", row[c]);
        }
        out += "\n";
    }
    return out;
}

DensityBounds default_bounds(const synth::MixtureSpec& spec) {
    double lo = 0.0, hi = 0.0;
    for (double v : spec.means.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double half = std::max(std::abs(lo), std::abs(hi)) + std::max(1.0, 4.0 * spec.sigma);
    return {-half, half, -half, half};
}

namespace {

struct Task {
    train::Method method;
    std::size_t run;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, Stage stage) {
    validate(cfg);
    const fs::path dir = resolve_output_dir(cfg);
    fs::create_directories(dir);
    const synth::MixtureSpec spec = build_mixture(cfg.dataset);
    const synth::DataSource data(spec);
    const bool planar = spec.dim() == 2;
    const DensityBounds bounds = default_bounds(spec);

    std::vector<Task> tasks;
    for (auto m : cfg.methods)
        for (std::size_t r = 0; r < cfg.n_runs; ++r) tasks.push_back({m, r});
    std::vector<RunRecord> records(tasks.size());
    std::vector<std::vector<std::string>> task_artifacts(tasks.size());

    auto work = [&](std::size_t i) {
        const Task& t = tasks[i];
        RunRecord& rec = records[i];
        auto& files = task_artifacts[i];
        rec.method = t.method;
        rec.run = t.run;
        rec.seed = run_seed(cfg.master_seed, t.run);
        const std::string stem = run_stem(t.method, t.run);
        const fs::path model_path = dir / "models" / (stem + ".vgm");
        std::optional<train::TrainedModel> model;
        try {
            if (stage == Stage::Eval) {
                std::ifstream in(model_path, std::ios::binary);
                if (!in) throw std::runtime_error("missing model file " + model_path.string());
                const nn::Blob blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                model = train::decode_model(blob);
            } else {
                train::TrainerConfig tc = cfg.trainer;
                tc.method = t.method;
                tc.seed = rec.seed;
                const auto t0 = Clock::now();
                model = train::train(data, tc);
                rec.train_seconds = seconds_since(t0);
                write_file(dir / "traces" / (stem + ".csv"), trace_csv(model->trace));
                files.push_back("traces/" + stem + ".csv");
                if (cfg.save_models || stage == Stage::Train) {
                    const auto blob = train::encode_model(*model);
                    write_file(model_path, std::string(blob.begin(), blob.end()));
                    files.push_back("models/" + stem + ".vgm");
                }
            }
            if (stage != Stage::Train) {
                const auto t0 = Clock::now();
                metrics::EvalConfig ec = cfg.eval;
                ec.seed = nd::Rng(cfg.eval.seed).split(rec.seed).seed();
                rec.metrics = metrics::evaluate_model(*model, spec, ec);
                rec.eval_seconds = seconds_since(t0);
                if (cfg.export_density && planar) {
                    nd::Rng rng = nd::Rng(ec.seed).split("density");
                    const auto grid = density_grid(model->sample(rng, cfg.density_samples), bounds, cfg.density_resolution);
                    write_file(dir / "density" / (stem + ".txt"), density_grid_text(grid, bounds, cfg.density_samples));
                    files.push_back("density/" + stem + ".txt");
                }
            }
            rec.ok = true;
        } catch (const train::TrainingDiverged& e) {
            rec.error = e.what();
            const auto& blob = e.last_good();
            write_file(dir / "models" / (stem + ".diverged.vgm"), std::string(blob.begin(), blob.end()));
            files.push_back("models/" + stem + ".diverged.vgm");
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
    };

    const std::size_t workers = std::min(cfg.jobs, tasks.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) work(i);
            });
        for (auto& th : pool) th.join();
    }

    ExperimentResult result;
    result.output_dir = dir;
    result.runs = records;
    for (const auto& f : task_artifacts) result.artifacts.insert(result.artifacts.end(), f.begin(), f.end());

    if (stage != Stage::Train) {
        if (cfg.export_density && planar) {
            nd::Rng rng = nd::Rng(cfg.eval.seed).split("true_density");
            const auto grid = density_grid(data.draw(rng, cfg.density_samples), bounds, cfg.density_resolution);
            write_file(dir / "density" / "true.txt", density_grid_text(grid, bounds, cfg.density_samples));
            result.artifacts.push_back("density/true.txt");
        }
        write_file(dir / "results.csv", results_csv(cfg, records));
        write_file(dir / "summary.csv", summary_csv(records));
        result.artifacts.push_back("results.csv");
        result.artifacts.push_back("summary.csv");
    }
    result.artifacts.push_back("manifest.json");

    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json j = {{"method", train::to_string(r.method)},
                            {"run", r.run},
                            {"seed", r.seed},
                            {"status", r.ok ? "ok" : "failed"},
                            {"train_seconds", r.train_seconds},
                            {"eval_seconds", r.eval_seconds}};
        if (!r.error.empty()) j["error"] = r.error;
        runs.push_back(j);
    }
    const nlohmann::json manifest = {{"schema_version", 1},
                                     {"code_version", kVersion},
                                     {"stage", stage == Stage::Train ? "train" : stage == Stage::Eval ? "eval" : "run"},
                                     {"config", to_json(cfg)},
                                     {"dataset_spec", synth::to_json(spec)},
                                     {"seed_rule", "run r uses splitmix64(master_seed + r); every method shares it"},
                                     {"runs", runs},
                                     {"artifacts", result.artifacts}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return result;
}

}  // namespace veegan::exp
