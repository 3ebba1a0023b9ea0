#pragma once

#include <span>
#include <vector>

namespace engage::stats {

double mean(std::span<const double> x);
/// Sample (n - 1) standard deviation; 0 for fewer than two values.
double sample_sd(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);
/// 1-based ranks, ties get their average rank.
std::vector<double> average_ranks(std::span<const double> x);
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace engage::stats
