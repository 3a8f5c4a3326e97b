#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sega/guidance.hpp"

namespace sega {

struct Histogram {
    std::vector<double> edges;  // bins + 1 entries
    std::vector<std::size_t> counts;
};

struct KernelDensity {
    double bandwidth = 0.0;
    std::vector<double> grid;
    std::vector<double> density;
};

struct DistributionReport {
    std::size_t count = 0;
    double mean = 0.0;
    /// Central moments use the 1/n normalization.
    double variance = 0.0;
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    Histogram histogram;
    KernelDensity kde;
};

inline constexpr std::size_t kde_grid_points = 512;
inline constexpr std::size_t default_histogram_bins = 64;

/// Silverman's rule, 1.06 sigma n^(-1/5).
double silverman_bandwidth(double stddev, std::size_t n);

/// Moments, histogram and a Gaussian KDE on a 512-point grid spanning
/// [min - 3h, max + 3h]. The KDE is rescaled to unit trapezoid mass on that
/// grid. Constant input falls back to a small bandwidth and zero shape
/// moments. Needs at least two values.
DistributionReport distribution_report(std::span<const double> values, std::optional<double> bandwidth = std::nullopt,
                                       std::size_t bins = default_histogram_bins);

double trapezoid(std::span<const double> x, std::span<const double> y);

struct StepMaskStats {
    std::size_t step = 0;
    /// Fraction of coordinates each concept edits at this step.
    std::vector<double> nonzero_fraction;
    /// Mean pairwise Jaccard index across concepts (1 with one concept).
    double mean_overlap = 1.0;
};

struct MaskReport {
    std::size_t concepts = 0;
    /// Mean over steps, runs and concepts.
    double nonzero_fraction = 0.0;
    /// concepts x concepts mean Jaccard index over steps and runs.
    std::vector<std::vector<double>> support_overlap;
    /// Per-step values averaged across runs.
    std::vector<StepMaskStats> per_step_series;
};

/// Jaccard index of two supports; two empty supports count as identical.
double jaccard(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Throws DomainError when the logs carry no mask recordings.
MaskReport mask_report(const GammaLog& log);
MaskReport mask_report(std::span<const GammaLog* const> logs);

nlohmann::json to_json(const DistributionReport& report);
nlohmann::json to_json(const MaskReport& report);
/// CSV with one row per histogram bin.
std::string histogram_csv(const DistributionReport& report);
/// CSV with one row per KDE grid point.
std::string kde_csv(const DistributionReport& report);
/// CSV with one row per step.
std::string mask_series_csv(const MaskReport& report);

}  // namespace sega
