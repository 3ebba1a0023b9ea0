#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "engage/frame.hpp"
#include "engage/models/model.hpp"

namespace engage::models {

/// importance_j = mean over repeats of MSE(y, predict(X with column j
/// shuffled)) - MSE(y, predict(X)). Repeat r of column j shuffles with
/// derive_seed(seed, {j, r}); OpenMP-parallel over (column, repeat).
std::vector<double> permutation_importance(const TrainedModel& model, const ModelFrame& frame,
                                           const Eigen::VectorXd& y, int n_repeats,
                                           std::uint64_t seed);
/// Single-threaded reference of `permutation_importance`.
std::vector<double> permutation_importance_serial(const TrainedModel& model,
                                                  const ModelFrame& frame,
                                                  const Eigen::VectorXd& y, int n_repeats,
                                                  std::uint64_t seed);

}  // namespace engage::models
