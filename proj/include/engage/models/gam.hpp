#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "engage/frame.hpp"
#include "engage/models/linear.hpp"
#include "engage/models/spline.hpp"

namespace engage::models {

struct GamOptions {
  int basis_size = 10;
  int max_iter = 200;
  double tol = 1e-6;
  /// Sweeps during which each term re-selects its smoothing parameter by
  /// GCV; afterwards the smoothers are held fixed until convergence.
  int smoothing_sweeps = 20;
  /// Same smoothing parameter for every term instead of GCV. Infinity
  /// restricts every term to its linear part.
  std::optional<double> fixed_lambda;
};

struct SmoothTerm {
  std::string name;
  std::size_t column = 0;  ///< column in the frame the model was fitted on
  TermBasis basis;
  /// Orthonormalising transform: E = basis.design(x) * W has orthonormal
  /// columns on the training rows and penalty diag(d), d ascending.
  Eigen::MatrixXd W;
  Eigen::VectorXd d;
  double lambda = 0;
  Eigen::VectorXd w;     ///< coefficients in the orthonormal coordinates
  Eigen::VectorXd z;     ///< projections of the final partial residual
  Eigen::VectorXd coef;  ///< W * w, coefficients on the centred basis
  double edf = 0;

  double value(double x) const { return basis.row(x).dot(coef); }
};

struct GamModel {
  double intercept = 0;
  std::vector<SmoothTerm> terms;
  GroupCoding coding;
  Eigen::RowVectorXd group_center;
  Eigen::VectorXd gamma;      ///< delivery contrasts vs online
  Eigen::MatrixXd group_gram; ///< centred dummies' cross-product
  Eigen::VectorXd fitted;
  double sigma2 = 0;
  double residual_df = 0;
  int iterations = 0;
  bool converged = false;

  Eigen::VectorXd predict(const ModelFrame& f) const;
};

/// Backfitting of y ~ b0 + sum_j f_j(x_j) + delivery offsets. Each f_j is a
/// penalized cubic regression spline (curvature penalty) refitted to its
/// partial residuals. `columns` restricts the smooth terms to a subset of
/// the frame's columns. Throws Errc::backfit_divergence when the change in
/// fitted values grows for five consecutive sweeps.
GamModel fit_gam(const ModelFrame& frame, const Eigen::VectorXd& y, const GamOptions& opt = {},
                 const std::vector<std::size_t>* columns = nullptr);

struct SmoothGridPoint {
  double x = 0;
  double fit = 0;
  double lower = 0;
  double upper = 0;
};

struct SmoothTermReport {
  std::string name;
  double p_value = 1;
  double edf = 0;
  double statistic = 0;
  int rank = 0;
  std::vector<SmoothGridPoint> grid;
};

struct FactorTermReport {
  double p_value = 1;
  double statistic = 0;
  int df1 = 0;
  double df2 = 0;
  std::vector<int> levels;
  std::vector<double> effects;
};

struct GamSignificance {
  std::vector<SmoothTermReport> smooth;
  std::optional<FactorTermReport> factor;
};

/// Approximate p-values: for each smooth, a Wald statistic restricted to its
/// r = round(edf) least-penalized directions, referred to F(r, residual df);
/// the delivery factor gets an F-test of its contrasts. Grid bands are +-2
/// posterior standard errors over the training range.
GamSignificance gam_term_significance(const GamModel& model, int grid_points = 100);

/// Keeps predictor j when p_j < level in strictly more than
/// fold_fraction * n_folds folds. A predictor missing from a fold counts as
/// not significant there. Throws Errc::empty_selection; needs >= 2 folds.
std::vector<std::string> rgam_select(const std::vector<std::map<std::string, double>>& fold_p_values,
                                     double level = 0.1, double fold_fraction = 0.5);

}  // namespace engage::models
