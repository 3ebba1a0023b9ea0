#pragma once

#include <vector>

#include <Eigen/Dense>

namespace engage::models {

/// Clamped cubic B-spline basis on [lo, hi] with interior knots.
class BSplineBasis {
 public:
  BSplineBasis() = default;
  BSplineBasis(double lo, double hi, std::vector<double> interior);

  int size() const noexcept { return static_cast<int>(knots_.size()) - 4; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  const std::vector<double>& knots() const noexcept { return knots_; }

  /// Basis values at x in [lo, hi].
  Eigen::RowVectorXd eval(double x) const;
  /// Derivative of order 1 or 2 at x in [lo, hi].
  Eigen::RowVectorXd derivative(double x, int order) const;
  /// S_ij = integral over [lo, hi] of B_i''(x) B_j''(x).
  Eigen::MatrixXd curvature_penalty() const;

 private:
  int span(double x) const;
  double lo_ = 0, hi_ = 1;
  std::vector<double> knots_;
};

/// Centred basis of one smooth term. Columns sum to zero over the training
/// values, so every fitted term is centred. Terms with fewer than four
/// distinct training values fall back to a single linear column. Outside the
/// training range the basis extends linearly.
class TermBasis {
 public:
  TermBasis() = default;
  static TermBasis build(const Eigen::VectorXd& x, int basis_size);

  bool is_linear() const noexcept { return linear_; }
  int dim() const noexcept { return linear_ ? 1 : static_cast<int>(Z_.cols()); }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }

  Eigen::RowVectorXd row(double x) const;
  Eigen::MatrixXd design(const Eigen::VectorXd& x) const;
  /// Curvature penalty in the centred coordinates (zero for linear terms).
  Eigen::MatrixXd penalty() const;

 private:
  bool linear_ = true;
  double mean_ = 0;
  double lo_ = 0, hi_ = 0;
  BSplineBasis spline_;
  Eigen::MatrixXd Z_;  // k x (k-1), orthogonal complement of the column means
};

}  // namespace engage::models
