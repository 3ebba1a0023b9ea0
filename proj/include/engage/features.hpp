#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "engage/frame.hpp"
#include "engage/ingest.hpp"
#include "engage/sessionizer.hpp"

namespace engage {

enum class Resource { clicks = 0, lecture_note = 1, video = 2, quiz = 3 };

std::string_view to_string(Resource r) noexcept;
std::optional<Resource> resource_from_string(std::string_view s) noexcept;

struct FeatureColumn {
  Resource resource = Resource::clicks;
  int week = 0;

  std::string name() const;  ///< "<resource>_w<week>"
  bool operator==(const FeatureColumn&) const = default;
};

std::optional<FeatureColumn> parse_column_name(std::string_view name);

/// Students x weekly resource counts, plus the delivery method of each row.
struct FeatureMatrix {
  std::vector<std::string> users;
  std::vector<int> cohort;
  std::vector<DeliveryMethod> delivery;
  std::vector<FeatureColumn> columns;
  Eigen::MatrixXd values;

  std::size_t rows() const noexcept { return users.size(); }
};

/// Weekly counts for every stream. Clicks count every log; the other
/// resources count records classified to that kind. Column order is
/// week-major: for each week, clicks, lecture_note, video, quiz.
/// OpenMP-parallel over students.
FeatureMatrix weekly_counts(std::span<const StudentStream> streams,
                            std::span<const CohortConfig> cohorts, int week_lo, int week_hi);
/// Single-threaded reference of `weekly_counts`.
FeatureMatrix weekly_counts_serial(std::span<const StudentStream> streams,
                                   std::span<const CohortConfig> cohorts, int week_lo,
                                   int week_hi);

/// Divides every video column by the video count of the row's cohort.
void proportional_video(FeatureMatrix& m, std::span<const CohortConfig> cohorts);

/// Keep-mask over the columns of `values` restricted to `rows`: a column is
/// kept when its non-zero fraction is at least `min_nonzero_fraction`.
/// Throws Errc::all_columns_dropped.
std::vector<bool> sparsity_filter(const Eigen::MatrixXd& values, std::span<const std::size_t> rows,
                                  double min_nonzero_fraction = 0.01);
std::vector<bool> sparsity_filter(const Eigen::MatrixXd& values,
                                  double min_nonzero_fraction = 0.01);

/// Train-fitted centring and scaling (sample standard deviation) of the
/// columns surviving the mask. Zero-variance columns are dropped at fit.
class Standardizer {
 public:
  Standardizer() = default;

  static Standardizer fit(const Eigen::MatrixXd& values, std::span<const std::size_t> rows,
                          const std::vector<bool>& mask);

  bool fitted() const noexcept { return fitted_; }
  /// Indices (into the raw column set) of the retained columns.
  const std::vector<std::size_t>& columns() const noexcept { return columns_; }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& sd() const noexcept { return sd_; }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& values, std::span<const std::size_t> rows) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& standardized) const;

  bool operator==(const Standardizer&) const = default;

 private:
  bool fitted_ = false;
  std::vector<std::size_t> columns_;
  std::vector<double> mean_;
  std::vector<double> sd_;
};

/// Standardized continuous block of `rows` plus the delivery factor.
ModelFrame make_frame(const FeatureMatrix& m, std::span<const std::size_t> rows,
                      const Standardizer& standardizer, bool with_delivery = true);

}  // namespace engage
