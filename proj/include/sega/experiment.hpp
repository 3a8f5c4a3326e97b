#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sega/config.hpp"
#include "sega/diagnostics.hpp"
#include "sega/sampler.hpp"

namespace sega {

/// One grid cell: (pointer, value) overrides.
using GridPoint = std::vector<std::pair<std::string, json>>;

struct SeedOutcome {
    std::uint64_t seed = 0;
    Latent final_sample;
    /// Data posterior of every estimator tag, in estimator tag order.
    std::vector<double> posteriors;
    double target_posterior = 0.0;
    /// L2 distance to the unguided final sample of the same seed.
    double displacement = 0.0;
    GammaLog log;
};

struct CellOutcome {
    GridPoint point;
    std::vector<SeedOutcome> seeds;
    double mean_target_posterior = 0.0;
    double mean_displacement = 0.0;
    std::optional<MaskReport> masks;
    std::optional<DistributionReport> final_distribution;
};

struct AssertionOutcome {
    std::string description;
    double value = 0.0;
    bool passed = false;
};

struct RunResult {
    ExperimentConfig config;
    std::vector<std::string> tags;
    std::vector<CellOutcome> cells;
    std::vector<AssertionOutcome> assertions;

    bool ok() const;
};

/// Cartesian product of the grid axes in row-major order (last axis fastest).
std::vector<GridPoint> expand_grid(const ExperimentConfig& config);

/// Runs every seed of a single (grid-free) config plus its unguided baseline.
CellOutcome run_cell(const ExperimentConfig& config, std::size_t jobs, bool keep_logs = false);

RunResult run_experiment(const ExperimentConfig& config, std::size_t jobs);

struct AblationResult {
    ExperimentConfig config;
    std::vector<GridAxis> axes;
    std::vector<CellOutcome> cells;
    /// Row-major [row][column] matrices; only filled for two axes.
    std::vector<std::vector<double>> target_posterior;
    std::vector<std::vector<double>> displacement;
};

/// Needs exactly two axes unless `long_form` is set.
AblationResult run_ablation(const ExperimentConfig& config, std::size_t jobs, bool long_form = false);

struct DiagResult {
    std::size_t step = 0;
    std::size_t diffusion_time = 0;
    std::vector<std::pair<std::string, DistributionReport>> reports;
};

/// Distribution reports of the unconditional, prompt-conditioned and every
/// edit-conditioned estimate at `config.diag_step`, pooled over seeds.
DiagResult run_diag(const ExperimentConfig& config, std::size_t jobs);

void write_run_outputs(const RunResult& result, const std::string& directory, const std::vector<std::string>& formats);
void write_ablation_outputs(const AblationResult& result, const std::string& directory,
                            const std::vector<std::string>& formats);
void write_diag_outputs(const DiagResult& result, const std::string& directory, const std::vector<std::string>& formats);

std::string run_rows_csv(const RunResult& result);
std::string cell_summary_csv(const RunResult& result);
std::string ablation_matrix_csv(const AblationResult& result, const std::vector<std::vector<double>>& matrix);
std::string ablation_long_csv(const AblationResult& result);
json to_json(const RunResult& result);
json to_json(const AblationResult& result);
json to_json(const DiagResult& result);

}  // namespace sega
