#include "sega/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sega/csv.hpp"
#include "sega/error.hpp"

namespace sega {

double silverman_bandwidth(double stddev, std::size_t n) {
    return 1.06 * stddev * std::pow(static_cast<double>(n), -0.2);
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("trapezoid: grid and values differ in length");
    double area = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) area += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return area;
}

DistributionReport distribution_report(std::span<const double> values, std::optional<double> bandwidth,
                                       std::size_t bins) {
    if (values.size() < 2) throw DomainError("distribution_report needs at least 2 values");
    if (bins == 0) throw DomainError("distribution_report needs at least one histogram bin");
    if (bandwidth && !(*bandwidth > 0.0)) throw DomainError("kde bandwidth must be positive");
    for (double v : values) {
        if (!std::isfinite(v)) throw DomainError("distribution_report: non-finite value");
    }

    DistributionReport r;
    r.count = values.size();
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    r.mean = sum / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : values) {
        const double d = v - r.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    r.variance = m2;
    if (m2 > 0.0) {
        r.skewness = m3 / std::pow(m2, 1.5);
        r.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    }

    const auto [min_it, max_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *min_it;
    const double hi = *max_it;

    // Histogram over [lo, hi]; a constant sample gets one unit-wide span.
    const double h_lo = hi > lo ? lo : lo - 0.5;
    const double h_hi = hi > lo ? hi : hi + 0.5;
    r.histogram.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) {
        r.histogram.edges[i] = h_lo + (h_hi - h_lo) * static_cast<double>(i) / static_cast<double>(bins);
    }
    r.histogram.edges.back() = h_hi;
    r.histogram.counts.assign(bins, 0);
    for (double v : values) {
        auto bin = static_cast<std::size_t>((v - h_lo) / (h_hi - h_lo) * static_cast<double>(bins));
        r.histogram.counts[std::min(bin, bins - 1)]++;
    }

    double h = bandwidth.value_or(silverman_bandwidth(std::sqrt(m2), values.size()));
    if (!(h > 0.0)) h = 1e-3 * std::max(1.0, std::fabs(r.mean));
    r.kde.bandwidth = h;
    r.kde.grid.resize(kde_grid_points);
    r.kde.density.assign(kde_grid_points, 0.0);
    const double g_lo = lo - 3.0 * h;
    const double g_hi = hi + 3.0 * h;
    for (std::size_t i = 0; i < kde_grid_points; ++i) {
        r.kde.grid[i] = g_lo + (g_hi - g_lo) * static_cast<double>(i) / static_cast<double>(kde_grid_points - 1);
    }
    const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < kde_grid_points; ++i) {
        const double x = r.kde.grid[i];
        // Terms beyond 9 bandwidths are below 1e-17 of the peak.
        auto first = std::lower_bound(sorted.begin(), sorted.end(), x - 9.0 * h);
        auto last = std::upper_bound(sorted.begin(), sorted.end(), x + 9.0 * h);
        double acc = 0.0;
        for (auto it = first; it != last; ++it) {
            const double u = (x - *it) / h;
            acc += std::exp(-0.5 * u * u);
        }
        r.kde.density[i] = acc * norm;
    }
    const double mass = trapezoid(r.kde.grid, r.kde.density);
    if (mass > 0.0) {
        for (double& d : r.kde.density) d /= mass;
    }
    return r;
}

double jaccard(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) throw ShapeError("jaccard: masks differ in length");
    std::size_t both = 0, either = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        both += (a[i] && b[i]) ? 1 : 0;
        either += (a[i] || b[i]) ? 1 : 0;
    }
    return either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
}

MaskReport mask_report(const GammaLog& log) {
    const GammaLog* one[] = {&log};
    return mask_report(one);
}

MaskReport mask_report(std::span<const GammaLog* const> logs) {
    MaskReport report;
    std::size_t concepts = 0;
    bool found = false;
    for (const GammaLog* log : logs) {
        for (const auto& record : *log) {
            if (!record.masks.empty()) {
                concepts = record.masks.size();
                found = true;
                break;
            }
        }
        if (found) break;
    }
    if (!found) throw DomainError("mask_report: no recorded masks (enable mask recording for the run)");
    report.concepts = concepts;
    report.support_overlap.assign(concepts, std::vector<double>(concepts, 0.0));

    std::vector<StepMaskStats> series;
    std::vector<std::size_t> series_runs;
    double fraction_total = 0.0;
    std::size_t fraction_count = 0;
    std::size_t overlap_count = 0;

    for (const GammaLog* log : logs) {
        for (const auto& record : *log) {
            if (record.masks.size() != concepts) {
                throw DomainError("mask_report: step " + std::to_string(record.step) + " is missing mask recordings");
            }
            if (series.size() <= record.step) {
                series.resize(record.step + 1);
                series_runs.resize(record.step + 1, 0);
            }
            StepMaskStats& stats = series[record.step];
            stats.step = record.step;
            if (stats.nonzero_fraction.empty()) {
                stats.nonzero_fraction.assign(concepts, 0.0);
                stats.mean_overlap = 0.0;
            }
            for (std::size_t c = 0; c < concepts; ++c) {
                const auto& mask = record.masks[c];
                const double nz = static_cast<double>(std::count(mask.begin(), mask.end(), std::uint8_t{1})) /
                                  static_cast<double>(mask.size());
                stats.nonzero_fraction[c] += nz;
                fraction_total += nz;
                ++fraction_count;
            }
            double pair_sum = 0.0;
            std::size_t pairs = 0;
            for (std::size_t a = 0; a < concepts; ++a) {
                for (std::size_t b = 0; b < concepts; ++b) {
                    const double j = a == b ? 1.0 : jaccard(record.masks[a], record.masks[b]);
                    report.support_overlap[a][b] += j;
                    if (a < b) {
                        pair_sum += j;
                        ++pairs;
                    }
                }
            }
            stats.mean_overlap += pairs ? pair_sum / static_cast<double>(pairs) : 1.0;
            ++series_runs[record.step];
            ++overlap_count;
        }
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        if (series_runs[s] == 0) continue;
        const double runs = static_cast<double>(series_runs[s]);
        for (double& v : series[s].nonzero_fraction) v /= runs;
        series[s].mean_overlap /= runs;
        report.per_step_series.push_back(series[s]);
    }
    for (auto& row : report.support_overlap) {
        for (double& v : row) v /= static_cast<double>(overlap_count);
    }
    report.nonzero_fraction = fraction_total / static_cast<double>(fraction_count);
    return report;
}

nlohmann::json to_json(const DistributionReport& r) {
    return {
        {"count", r.count},
        {"mean", r.mean},
        {"variance", r.variance},
        {"skewness", r.skewness},
        {"excess_kurtosis", r.excess_kurtosis},
        {"histogram", {{"edges", r.histogram.edges}, {"counts", r.histogram.counts}}},
        {"kde", {{"bandwidth", r.kde.bandwidth}, {"grid", r.kde.grid}, {"density", r.kde.density}}},
    };
}

nlohmann::json to_json(const MaskReport& r) {
    nlohmann::json series = nlohmann::json::array();
    for (const auto& s : r.per_step_series) {
        series.push_back({{"step", s.step}, {"nonzero_fraction", s.nonzero_fraction}, {"mean_overlap", s.mean_overlap}});
    }
    return {
        {"concepts", r.concepts},
        {"nonzero_fraction", r.nonzero_fraction},
        {"support_overlap", r.support_overlap},
        {"per_step_series", series},
    };
}

std::string histogram_csv(const DistributionReport& r) {
    std::string out = csv::row({"bin", "lower", "upper", "count"});
    for (std::size_t i = 0; i < r.histogram.counts.size(); ++i) {
        out += csv::row({std::to_string(i), csv::number(r.histogram.edges[i]), csv::number(r.histogram.edges[i + 1]),
                         std::to_string(r.histogram.counts[i])});
    }
    return out;
}

std::string kde_csv(const DistributionReport& r) {
    std::string out = csv::row({"x", "density"});
    for (std::size_t i = 0; i < r.kde.grid.size(); ++i) {
        out += csv::row({csv::number(r.kde.grid[i]), csv::number(r.kde.density[i])});
    }
    return out;
}

std::string mask_series_csv(const MaskReport& r) {
    std::vector<std::string> header{"step"};
    for (std::size_t c = 0; c < r.concepts; ++c) header.push_back("nonzero_fraction_" + std::to_string(c));
    header.push_back("mean_overlap");
    std::string out = csv::row(header);
    for (const auto& s : r.per_step_series) {
        std::vector<std::string> cells{std::to_string(s.step)};
        for (double v : s.nonzero_fraction) cells.push_back(csv::number(v));
        cells.push_back(csv::number(s.mean_overlap));
        out += csv::row(cells);
    }
    return out;
}

}  // namespace sega
