#pragma once

#include <vector>

#include <Eigen/Dense>

#include "engage/frame.hpp"

namespace engage::models {

/// Treatment coding of the delivery factor against online (code 1).
/// `levels` lists the non-reference codes present at fit time.
struct GroupCoding {
  std::vector<int> levels;

  static GroupCoding from(const std::vector<int>& group);
  Eigen::MatrixXd dummies(const std::vector<int>& group) const;
  std::size_t size() const noexcept { return levels.size(); }
  bool operator==(const GroupCoding&) const = default;
};

struct LinearModel {
  double intercept = 0;
  Eigen::VectorXd beta;   ///< continuous predictors
  Eigen::VectorXd gamma;  ///< delivery contrasts, aligned with `coding.levels`
  GroupCoding coding;
  bool converged = true;
  long sweeps = 0;

  Eigen::VectorXd predict(const ModelFrame& f) const;
};

struct ElasticNetOptions {
  double tol = 1e-7;
  long max_sweeps = 100000;
};

/// Cyclic coordinate descent for
///   (1/2n)|y - b0 - X b - D g|^2 + lambda (alpha |b|_1 + (1-alpha)/2 |b|^2)
/// on a precomputed Gram matrix. Delivery dummies and the intercept are
/// unpenalized. One problem serves a whole (lambda, alpha) grid.
class ElasticNetProblem {
 public:
  ElasticNetProblem(const ModelFrame& frame, const Eigen::VectorXd& y);

  /// Coordinates are visited in schema order. `warm` seeds the solution.
  LinearModel solve(double lambda, double alpha, const ElasticNetOptions& opt = {},
                    const LinearModel* warm = nullptr) const;

  /// Solutions along `lambdas` (any order), each warm-started from the previous.
  std::vector<LinearModel> path(const std::vector<double>& lambdas, double alpha,
                                const ElasticNetOptions& opt = {}) const;

  /// Smallest lambda at which the lasso (alpha = 1) keeps every slope at 0.
  double lambda_max(double alpha = 1.0) const;

 private:
  Eigen::Index p_ = 0;      // continuous columns
  Eigen::Index dim_ = 0;    // continuous + dummies
  GroupCoding coding_;
  Eigen::VectorXd mean_;    // column means of [X D]
  double y_mean_ = 0;
  Eigen::MatrixXd gram_;    // Xc' Xc / n
  Eigen::VectorXd xty_;     // Xc' yc / n
  Eigen::VectorXd penalty_factor_;
};

LinearModel fit_elastic_net(const ModelFrame& frame, const Eigen::VectorXd& y, double lambda,
                            double alpha, const ElasticNetOptions& opt = {});

/// Least squares on [1 X D] via column-pivoted QR.
LinearModel fit_ols(const ModelFrame& frame, const Eigen::VectorXd& y);

}  // namespace engage::models
