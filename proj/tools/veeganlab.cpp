#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>

#include "veegan/bound.hpp"
#include "veegan/experiment.hpp"
#include "veegan/grad_suite.hpp"
#include "veegan/version.hpp"

namespace {

using namespace veegan;

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kBadConfig = 2;

struct RunOptions {
    std::string config;
    std::string out;
    bool long_scale = false;
    std::size_t jobs = 0;
};

int run_stage(const RunOptions& opt, exp::Stage stage) {
    exp::ExperimentConfig cfg;
    try {
        cfg = exp::load_config(opt.config);
        if (opt.long_scale) exp::apply_long_scale(cfg);
        if (!opt.out.empty()) cfg.output_dir = opt.out;
        if (opt.jobs > 0) cfg.jobs = opt.jobs;
    } catch (const exp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kBadConfig;
    }
    const auto result = exp::run_experiment(cfg, stage);
    for (const auto& r : result.runs) {
        std::cout << train::to_string(r.method) << " run " << r.run << " seed " << r.seed << ": ";
        if (!r.ok) {
            std::cout << "FAILED (" << r.error << ")\n";
        } else if (r.metrics) {
            std::cout << "modes " << r.metrics->modes << " hq " << r.metrics->hq_fraction;
            if (r.metrics->ivom) std::cout << " ivom " << *r.metrics->ivom;
            std::cout << "\n";
        } else {
            std::cout << "trained\n";
        }
    }
    if (stage != exp::Stage::Train) std::cout << exp::summary_csv(result.runs);
    std::cout << "artifacts in " << result.output_dir.string() << "\n";
    return result.all_ok() ? kOk : kFailed;
}

struct BoundOptions {
    std::optional<double> a, b, s;
    bool swap = false;
    double tolerance = 1e-9;
};

int check_bound(const BoundOptions& opt) {
    std::vector<bound::GridPoint> grid;
    if (opt.a || opt.b || opt.s) {
        const bound::LinearGaussianFamily fam{opt.a.value_or(0.0), opt.b.value_or(0.0), opt.s.value_or(1.0)};
        try {
            fam.validate();
        } catch (const std::invalid_argument& e) {
            std::cerr << "check-bound: " << e.what() << "\n";
            return kBadConfig;
        }
        grid.push_back({fam, bound::lhs_cross_entropy(fam), bound::rhs_bound(fam)});
    } else {
        grid = bound::bound_grid();
    }
    if (opt.swap)
        for (auto& g : grid) std::swap(g.lhs, g.rhs);
    const auto verdict = bound::check_grid(grid, opt.tolerance);
    if (grid.size() == 1) {
        const auto& g = grid.front();
        std::printf("a=%g b=%g s=%g lhs=%.15f rhs=%.15f margin=%.3e%s\n", g.fam.a, g.fam.b, g.fam.s, g.lhs, g.rhs, g.margin(),
                    std::abs(g.margin()) <= opt.tolerance ? " (equality)" : "");
    }
    for (const auto& g : grid) {
        if (g.margin() < -opt.tolerance) {
            std::printf("violation at a=%g b=%g s=%g: lhs=%.15f rhs=%.15f\n", g.fam.a, g.fam.b, g.fam.s, g.lhs, g.rhs);
        }
    }
    std::printf("%zu points, %zu violations, min margin %.3e at a=%g b=%g s=%g: %s\n", verdict.points, verdict.violations,
                verdict.min_margin, verdict.worst.a, verdict.worst.b, verdict.worst.s, verdict.holds() ? "HOLDS" : "VIOLATED");
    return verdict.holds() ? kOk : kFailed;
}

struct DensityOptions {
    std::string model;
    std::string out;
    std::size_t samples = 20000;
    std::size_t resolution = 100;
    std::vector<double> bounds;
    std::uint64_t seed = 0;
};

int export_density(const DensityOptions& opt) {
    std::ifstream in(opt.model, std::ios::binary);
    if (!in) {
        std::cerr << "export-density: cannot read " << opt.model << "\n";
        return kBadConfig;
    }
    const nn::Blob blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto model = train::decode_model(blob);
    if (model.data_dim != 2) {
        std::cerr << "export-density: model generates " << model.data_dim << "-dimensional samples, need 2\n";
        return kBadConfig;
    }
    exp::DensityBounds b{-3.0, 3.0, -3.0, 3.0};
    if (!opt.bounds.empty()) b = {opt.bounds[0], opt.bounds[1], opt.bounds[2], opt.bounds[3]};
    nd::Rng rng(opt.seed);
    const auto grid = exp::density_grid(model.sample(rng, opt.samples), b, opt.resolution);
    const std::string text = exp::density_grid_text(grid, b, opt.samples);
    if (opt.out.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(opt.out);
        out << text;
        if (!out) {
            std::cerr << "export-density: cannot write " << opt.out << "\n";
            return kFailed;
        }
    }
    return kOk;
}

int grad_check(std::size_t seeds, double tolerance) {
    const auto report = gradcheck::run_suite(seeds, tolerance);
    for (const auto& c : report.cases) std::printf("%-28s max_err=%.3e %s\n", c.name.c_str(), c.max_error, c.ok ? "ok" : "FAIL");
    std::printf("%zu cases, tolerance %.1e, %.2fs: %s\n", report.cases.size(), report.tolerance, report.seconds,
                report.pass() ? "PASS" : "FAIL");
    return report.pass() ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"veeganlab: train and evaluate mode-collapse experiments on synthetic mixtures"};
    app.set_version_flag("--version", veegan::kVersion);
    app.require_subcommand(1);

    RunOptions run_opt;
    auto add_run = [&](const char* name, const char* help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", run_opt.config, "experiment config file")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", run_opt.out, "output directory (overrides experiment.output_dir)");
        sub->add_flag("--long", run_opt.long_scale, "use the 700->1200 dimensional high-dim embedding");
        sub->add_option("-j,--jobs", run_opt.jobs, "concurrent runs (overrides experiment.jobs)");
        return sub;
    };
    auto* train_cmd = add_run("train", "train every method and run, saving models and traces");
    auto* eval_cmd = add_run("eval", "evaluate previously trained models");
    auto* run_cmd = add_run("run", "train and evaluate");

    BoundOptions bound_opt;
    auto* bound_cmd = app.add_subcommand("check-bound", "check the reconstructor cross-entropy bound on linear-Gaussian families");
    bound_cmd->add_option("--a", bound_opt.a, "reconstructor slope (single-point mode)");
    bound_cmd->add_option("--b", bound_opt.b, "generator slope (single-point mode)");
    bound_cmd->add_option("--s", bound_opt.s, "generator noise std (single-point mode)");
    bound_cmd->add_option("--tol", bound_opt.tolerance, "violation tolerance");
    bound_cmd->add_flag("--swap-sides", bound_opt.swap, "test hook: compare rhs <= lhs instead");

    DensityOptions dens_opt;
    auto* dens_cmd = app.add_subcommand("export-density", "write a 2D histogram of generator samples");
    dens_cmd->add_option("-m,--model", dens_opt.model, "trained model file")->required();
    dens_cmd->add_option("-o,--out", dens_opt.out, "output file (stdout if omitted)");
    dens_cmd->add_option("-n,--samples", dens_opt.samples, "number of samples")->check(CLI::PositiveNumber);
    dens_cmd->add_option("-r,--resolution", dens_opt.resolution, "cells per axis")->check(CLI::PositiveNumber);
    dens_cmd->add_option("--bounds", dens_opt.bounds, "xmin xmax ymin ymax")->expected(4);
    dens_cmd->add_option("--seed", dens_opt.seed, "sampling seed");

    std::size_t gc_seeds = 5;
    double gc_tol = 1e-4;
    auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference check of every primitive and composed losses");
    gc_cmd->add_option("--seeds", gc_seeds, "random points per case")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--tol", gc_tol, "max relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kBadConfig;
    }

    try {
        if (*train_cmd) return run_stage(run_opt, veegan::exp::Stage::Train);
        if (*eval_cmd) return run_stage(run_opt, veegan::exp::Stage::Eval);
        if (*run_cmd) return run_stage(run_opt, veegan::exp::Stage::Run);
        if (*bound_cmd) return check_bound(bound_opt);
        if (*dens_cmd) return export_density(dens_opt);
        if (*gc_cmd) return grad_check(gc_seeds, gc_tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailed;
    }
    return kOk;
}
