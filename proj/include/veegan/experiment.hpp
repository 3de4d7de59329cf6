#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "veegan/metrics.hpp"
#include "veegan/mixture.hpp"
#include "veegan/trainer.hpp"

namespace veegan::exp {

/// Unknown section/key or malformed value in an experiment config. `key()` is "section.key".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what);
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

struct DatasetConfig {
    std::string kind = "ring";  // ring | grid | highdim | gaussian
    std::size_t n_modes = 8;
    double radius = 2.0;
    std::size_t side = 5;
    double spacing = 2.0;
    std::size_t d_low = 30;
    std::size_t d_high = 60;
    double mode_scale = 1.0;
    std::uint64_t embed_seed = 0;
    std::size_t dim = 1;
    /// Unset means the kind's default (ring 0.02, grid 0.05, highdim 0.1, gaussian 1).
    std::optional<double> sigma;
};

synth::MixtureSpec build_mixture(const DatasetConfig& d);

struct ExperimentConfig {
    std::string name = "experiment";
    std::vector<train::Method> methods{train::Method::Gan, train::Method::Ali, train::Method::Unrolled, train::Method::Veegan};
    std::size_t n_runs = 5;
    std::uint64_t master_seed = 0;
    /// Relative paths resolve against $VEEGAN_OUT_ROOT when set, else the working directory.
    std::string output_dir;
    bool record_wallclock = false;
    bool save_models = true;
    bool export_density = true;
    std::size_t density_resolution = 100;
    std::size_t density_samples = 20000;
    std::size_t jobs = 1;

    DatasetConfig dataset;
    train::TrainerConfig trainer;
    metrics::EvalConfig eval;
};

/// Parses the `[section]` / `key = value` format. Every key has a default; unknown keys throw ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Replaces the dataset by its long variant (700 -> 1200 dims) for high-dim configs.
void apply_long_scale(ExperimentConfig& cfg);

/// Fully resolved config, as written to the manifest.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Seed of run r: splitmix64(master_seed + r). Independent of n_runs.
std::uint64_t run_seed(std::uint64_t master_seed, std::size_t run);

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

struct RunRecord {
    train::Method method;
    std::size_t run = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::optional<metrics::RunMetrics> metrics;
    double train_seconds = 0.0;
    double eval_seconds = 0.0;
};

struct ExperimentResult {
    std::vector<RunRecord> runs;
    std::filesystem::path output_dir;
    std::vector<std::string> artifacts;
    bool all_ok() const;
};

enum class Stage { Train, Eval, Run };

/// Trains and/or evaluates every (method, run) pair and writes the artifacts. Eval-only loads saved models.
ExperimentResult run_experiment(const ExperimentConfig& cfg, Stage stage = Stage::Run);

/// results.csv contents: per-run rows then mean/std rows per method.
std::string results_csv(const ExperimentConfig& cfg, const std::vector<RunRecord>& runs);
/// summary.csv contents: one row per method, Table-1 layout.
std::string summary_csv(const std::vector<RunRecord>& runs);

struct DensityBounds {
    double xmin = -3, xmax = 3, ymin = -3, ymax = 3;
};

/// Normalized 2D histogram: entry [i][j] counts samples with y in row i and x in column j, divided by n.
/// Samples on the upper bound fall in the last cell; samples outside the bounds are dropped from the grid
/// but still count in n. Throws ShapeError for non-2D samples.
std::vector<std::vector<double>> density_grid(const nd::Tensor& samples, const DensityBounds& b, std::size_t resolution);

/// One header line (`# xmin=... xmax=... ymin=... ymax=... resolution=R n=N`) then R rows of R values.
std::string density_grid_text(const std::vector<std::vector<double>>& grid, const DensityBounds& b, std::size_t n);

/// Square bounds covering the mixture means with a margin.
DensityBounds default_bounds(const synth::MixtureSpec& spec);

/// Loss trace as CSV: `step,<loss names...>`.
std::string trace_csv(const std::vector<train::TraceRecord>& trace);

}  // namespace veegan::exp
