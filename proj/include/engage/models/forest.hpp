#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "engage/frame.hpp"

namespace engage::models {

struct ForestOptions {
  int n_trees = 500;
  int mtry = 1;
  int min_leaf = 5;
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  ///< -1 marks a leaf; == p addresses the delivery factor
  double threshold = 0;
  std::uint8_t left_levels = 0;  ///< factor splits: bit (code-1) set goes left
  int left = -1;
  int right = -1;
  double value = 0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;
  double predict_row(const Eigen::MatrixXd& X, const std::vector<int>& group, Eigen::Index i) const;
};

struct ForestModel {
  std::vector<RegressionTree> trees;
  std::vector<std::vector<std::uint32_t>> out_of_bag;
  bool uses_group = false;

  /// Mean of the trees' outputs, accumulated in tree order.
  Eigen::VectorXd predict(const ModelFrame& f) const;
  Eigen::VectorXd predict_tree(const ModelFrame& f, std::size_t tree) const;
};

/// CART regression trees on bootstrap resamples with `mtry` candidate
/// features per split (the delivery factor counts as one feature). Tree t is
/// grown from derive_seed(seed, {t}), so results do not depend on the thread
/// count. OpenMP-parallel over trees.
ForestModel fit_random_forest(const ModelFrame& frame, const Eigen::VectorXd& y,
                              const ForestOptions& opt);
/// Single-threaded reference of `fit_random_forest`.
ForestModel fit_random_forest_serial(const ModelFrame& frame, const Eigen::VectorXd& y,
                                     const ForestOptions& opt);

}  // namespace engage::models
