#pragma once

#include <Eigen/Dense>

#include "engage/frame.hpp"
#include "engage/models/linear.hpp"

namespace engage::models {

struct PcrModel {
  Eigen::RowVectorXd center;  ///< training column means of X
  Eigen::MatrixXd loadings;   ///< p x m, orthonormal columns
  Eigen::VectorXd singular_values;
  double intercept = 0;
  Eigen::VectorXd score_coef;
  Eigen::VectorXd gamma;
  GroupCoding coding;

  Eigen::VectorXd predict(const ModelFrame& f) const;
};

/// SVD of the centred continuous block, shared by every component count.
class PcrProblem {
 public:
  PcrProblem(const ModelFrame& frame, const Eigen::VectorXd& y);

  Eigen::Index rank() const noexcept { return rank_; }
  /// Regresses y on the leading `n_components` scores plus delivery dummies.
  /// Throws Errc::rank_deficient when n_components exceeds the rank.
  PcrModel fit(Eigen::Index n_components) const;

 private:
  Eigen::RowVectorXd center_;
  Eigen::MatrixXd V_;
  Eigen::VectorXd sv_;
  Eigen::MatrixXd scores_;
  Eigen::MatrixXd dummies_;
  GroupCoding coding_;
  Eigen::VectorXd y_;
  Eigen::Index rank_ = 0;
};

PcrModel fit_pcr(const ModelFrame& frame, const Eigen::VectorXd& y, Eigen::Index n_components);

}  // namespace engage::models
