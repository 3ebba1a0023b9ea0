#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "engage/features.hpp"
#include "engage/metric.hpp"
#include "engage/models/importance.hpp"
#include "engage/models/model.hpp"

namespace engage {

/// Raw modelling data. The response is either given directly (`y`) or
/// derived inside each fold from raw chapter scores: min-max scaling,
/// weighted IDF sum, Box-Cox.
struct Dataset {
  FeatureMatrix features;
  std::optional<Eigen::VectorXd> y;
  std::optional<ScoreTable> scores;  ///< rows aligned with `features`
  std::vector<double> weights;
  BoxCoxOptions boxcox;
  double min_nonzero_fraction = 0.01;
  bool with_delivery = true;

  std::size_t rows() const noexcept { return features.rows(); }
  /// Throws Errc::config_error unless exactly one response source is set and
  /// sizes agree.
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

/// All state learned from a training portion.
struct FoldPipeline {
  std::optional<ChapterScaler> scaler;
  std::optional<BoxCoxParams> boxcox;
  std::vector<bool> mask;
  Standardizer standardizer;

  static FoldPipeline fit(const Dataset& d, std::span<const std::size_t> train_rows);
  ModelFrame frame(const Dataset& d, std::span<const std::size_t> rows) const;
  /// Modelled response (Box-Cox scale when derived from scores).
  Eigen::VectorXd response(const Dataset& d, std::span<const std::size_t> rows) const;

  bool operator==(const FoldPipeline&) const = default;
};

struct Metrics {
  double rmse = 0;
  std::optional<double> r2;  ///< absent when the evaluation target is constant
};

/// RMSE and R^2 with the evaluation-set mean. Throws Errc::too_few_rows for
/// fewer than two or mismatched values.
Metrics metrics(std::span<const double> y, std::span<const double> yhat);
/// Throws Errc::zero_variance_target when R^2 is undefined.
double r_squared(std::span<const double> y, std::span<const double> yhat);

/// Seeded shuffled assignment of rows to k folds; sizes differ by at most 1.
std::vector<int> make_folds(std::size_t n, int k, std::uint64_t seed);

struct Segment {
  std::string label;
  std::size_t count = 0;
  double mean_residual = 0;  ///< mean(yhat - y)
  double rmse = 0;
  double y_min = 0;
  double y_max = 0;
};

struct SegmentReport {
  std::array<Segment, 5> segments;
};

/// Rows ranked by (y, row index) and cut into five equal-count groups.
SegmentReport segment_analysis(std::span<const double> y, std::span<const double> yhat);

struct Summary {
  double mean = 0, sd = 0, min = 0, max = 0;
  std::size_t count = 0;
};
Summary summarize(std::span<const double> v);

struct CvOptions {
  int folds = 10;
  int inner_folds = 10;
  std::uint64_t seed = 0;
  double rgam_level = 0.1;
  double rgam_fold_fraction = 0.5;
  models::FitOptions fit;
};

struct FoldResult {
  int fold = 0;
  std::size_t n_test = 0;
  double rmse = 0;
  std::optional<double> r2;
  models::ModelSpec chosen;
  std::vector<std::string> rgam_terms;  ///< rGAM only
  bool rgam_empty = false;
};

struct FamilyReport {
  models::Family family = models::Family::ridge;
  std::vector<FoldResult> folds;
  Summary rmse;
  Summary r2;
  std::vector<double> oof_observed;   ///< response on each fold's scale
  std::vector<double> oof_predicted;
  SegmentReport segments;
};

struct CvReport {
  std::uint64_t seed = 0;
  int k = 0;
  std::vector<int> fold_of_row;
  std::vector<FamilyReport> families;
  /// GAM p-values per outer fold (fit on that fold's training portion).
  std::vector<std::map<std::string, double>> gam_fold_p_values;

  const FamilyReport* find(models::Family f) const;
};

/// Everything an outer fold learns from its training rows.
struct OuterFoldFit {
  FoldPipeline pipeline;
  std::vector<models::TrainedModel> models;  ///< aligned with the grids
  std::vector<std::vector<std::string>> rgam_terms;
  std::vector<bool> rgam_empty;
  std::map<std::string, double> gam_p_values;
};

/// Fits the pipeline and tunes every grid on `train_rows` only, with inner
/// folds seeded from `fold_seed`.
OuterFoldFit fit_outer_fold(const Dataset& d, std::span<const std::size_t> train_rows,
                            const std::vector<models::ModelGrid>& grids, const CvOptions& opt,
                            std::uint64_t fold_seed);

/// Nested K-fold CV; outer folds run in parallel. Throws Errc::too_few_rows
/// when rows < 2K.
CvReport nested_cv(const Dataset& d, const std::vector<models::ModelGrid>& grids,
                   const CvOptions& opt);

/// Modal per-fold choice of a family; ties go to the spec that comes first
/// in grid order.
models::ModelSpec modal_spec(const FamilyReport& r, const models::ModelGrid& grid);

struct RefitFamily {
  models::TrainedModel model;
  std::vector<double> importance;  ///< per frame column
  std::optional<models::GamSignificance> significance;
  std::vector<std::string> rgam_terms;
  bool rgam_empty = false;
};

struct FinalRefit {
  FoldPipeline pipeline;
  std::vector<std::string> columns;
  std::vector<RefitFamily> families;
};

struct RefitOptions {
  int importance_repeats = 5;
  std::uint64_t seed = 0;
  double rgam_level = 0.1;
  double rgam_fold_fraction = 0.5;
  int smooth_grid_points = 100;
  models::FitOptions fit;
};

/// Refits each family on all rows with its modal hyperparameters, then
/// computes full-data permutation importance and GAM significance. The rGAM
/// keeps the terms significant in a majority of the CV report's outer-fold
/// GAM fits.
FinalRefit final_refit(const Dataset& d, const std::vector<models::ModelGrid>& grids,
                       const CvReport& cv, const RefitOptions& opt);

}  // namespace engage
