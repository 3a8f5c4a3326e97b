#pragma once

#include <span>
#include <vector>

namespace sega {

/// 1-based ranks with ties given their average rank.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

/// Spearman rank correlation with average ranks for ties. A constant series
/// carries no rank information and yields 0.
double spearman(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> values);

}  // namespace sega
