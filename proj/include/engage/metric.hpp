#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "engage/sessionizer.hpp"

namespace engage {

/// First access day of each chapter within one cohort-year (index k-1).
/// Throws Errc::no_access when nobody opened a chapter.
std::vector<std::int64_t> release_dates(std::span<const ChapterAggregate> aggregates,
                                        int chapter_count);

struct RawScore {
  double immediacy = 0;  ///< release day minus first session day; <= 0
  double diversity = 0;  ///< distinct activities engaged
  double frequency = 0;  ///< number of sessions
};

/// Non-accessors get the maximal delay release - module_end_day and zero
/// diversity and frequency.
RawScore raw_scores(const ChapterAggregate& agg, std::int64_t release_day,
                    std::int64_t module_end_day);

enum class Score { immediacy = 0, diversity = 1, frequency = 2 };

/// Raw I/D/F per student (rows) and chapter (columns).
struct ScoreTable {
  std::vector<std::string> users;
  std::vector<int> cohort;
  Eigen::MatrixXd immediacy;
  Eigen::MatrixXd diversity;
  Eigen::MatrixXd frequency;

  std::size_t rows() const noexcept { return users.size(); }
  int chapters() const noexcept { return static_cast<int>(immediacy.cols()); }
  const Eigen::MatrixXd& score(Score s) const;
  Eigen::MatrixXd& score(Score s);
  ScoreTable subset(std::span<const std::size_t> rows) const;
};

/// Per-chapter, per-score min-max scaler fitted on training rows.
class ChapterScaler {
 public:
  ChapterScaler() = default;

  static ChapterScaler fit(const ScoreTable& table, std::span<const std::size_t> train_rows);
  static ChapterScaler fit(const ScoreTable& table);

  bool fitted() const noexcept { return fitted_; }
  /// (v - min) / (max - min); 0 when the training score is constant.
  double apply(double v, int chapter, Score s) const;
  double train_min(int chapter, Score s) const;
  double train_max(int chapter, Score s) const;

  bool operator==(const ChapterScaler&) const = default;

 private:
  bool fitted_ = false;
  // rows: chapters, cols: score
  std::vector<std::array<double, 3>> min_;
  std::vector<std::array<double, 3>> max_;
};

/// y = sum_k w_k * idf_k. Throws Errc::weight_mismatch on size mismatch or a
/// negative weight.
double engagement_metric(std::span<const double> idf, std::span<const double> weights);

/// Per-row engagement metric of `rows` using a fitted scaler.
std::vector<double> engagement_scores(const ScoreTable& table, std::span<const std::size_t> rows,
                                      const ChapterScaler& scaler,
                                      std::span<const double> weights);

/// Scaled I/D/F and IDF_k for one row, laid out [I_1..I_K, D_1.., F_1.., IDF_1..].
std::vector<double> scaled_row(const ScoreTable& table, std::size_t row,
                               const ChapterScaler& scaler);

struct BoxCoxOptions {
  double lambda_lo = -2.0;
  double lambda_hi = 2.0;
  double lambda_step = 0.05;
  double epsilon = 0.5;

  std::vector<double> grid() const;
};

struct BoxCoxParams {
  double lambda = 1.0;
  double shift = 0.0;
  /// Lower clamp for shifted out-of-sample values (half the smallest shifted
  /// training value).
  double floor = 0.0;

  bool operator==(const BoxCoxParams&) const = default;
};

/// (x^lambda - 1) / lambda for lambda != 0, log x at lambda == 0.
double boxcox(double x, double lambda);

/// Profile log-likelihood of positive data under a Box-Cox normal model,
/// variance at its MLE, including the Jacobian term.
double boxcox_profile_loglik(std::span<const double> x, double lambda);

/// Shift c = max(0, eps - min(y)); lambda maximises the profile likelihood
/// of y + c over the grid (first maximiser on ties).
/// Throws Errc::non_positive_after_shift when eps <= 0.
BoxCoxParams boxcox_fit(std::span<const double> y, const BoxCoxOptions& opt = {});

/// Transform of y + shift, with shifted values clamped below at `floor`.
double boxcox_apply(double y, const BoxCoxParams& p);

}  // namespace engage
