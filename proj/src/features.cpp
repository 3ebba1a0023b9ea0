#include "engage/features.hpp"

#include <charconv>
#include <cmath>

#include "engage/error.hpp"

namespace engage {

std::string_view to_string(Resource r) noexcept {
  switch (r) {
    case Resource::clicks: return "clicks";
    case Resource::lecture_note: return "lecture_note";
    case Resource::video: return "video";
    case Resource::quiz: return "quiz";
  }
  return "clicks";
}

std::optional<Resource> resource_from_string(std::string_view s) noexcept {
  for (auto r : {Resource::clicks, Resource::lecture_note, Resource::video, Resource::quiz})
    if (to_string(r) == s) return r;
  return std::nullopt;
}

std::string FeatureColumn::name() const {
  return std::string(to_string(resource)) + "_w" + std::to_string(week);
}

std::optional<FeatureColumn> parse_column_name(std::string_view name) {
  auto pos = name.rfind("_w");
  if (pos == std::string_view::npos) return std::nullopt;
  auto r = resource_from_string(name.substr(0, pos));
  if (!r) return std::nullopt;
  int week = 0;
  auto digits = name.substr(pos + 2);
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), week);
  if (ec != std::errc{} || p != digits.data() + digits.size()) return std::nullopt;
  return FeatureColumn{*r, week};
}

namespace {

constexpr int kResources = 4;

int resource_slot(ResourceKind k) {
  switch (k) {
    case ResourceKind::lecture_note: return static_cast<int>(Resource::lecture_note);
    case ResourceKind::video: return static_cast<int>(Resource::video);
    case ResourceKind::quiz: return static_cast<int>(Resource::quiz);
    default: return -1;
  }
}

FeatureMatrix empty_matrix(std::span<const StudentStream> streams,
                           std::span<const CohortConfig> cohorts, int week_lo, int week_hi) {
  if (week_hi < week_lo) throw Error(Errc::config_error, "empty week range");
  FeatureMatrix m;
  for (const auto& s : streams) {
    m.users.push_back(s.user_id);
    m.cohort.push_back(s.cohort);
    m.delivery.push_back(cohorts[static_cast<std::size_t>(s.cohort)].delivery);
  }
  for (int w = week_lo; w <= week_hi; ++w)
    for (int r = 0; r < kResources; ++r) m.columns.push_back({static_cast<Resource>(r), w});
  m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(streams.size()),
                                   static_cast<Eigen::Index>(m.columns.size()));
  return m;
}

void count_row(const StudentStream& s, int week_lo, int week_hi, Eigen::Index row,
               Eigen::MatrixXd& values) {
  for (const auto& rec : s.records) {
    if (rec.week < week_lo || rec.week > week_hi) continue;
    const Eigen::Index base = static_cast<Eigen::Index>(rec.week - week_lo) * kResources;
    values(row, base) += 1.0;
    int slot = resource_slot(rec.kind);
    if (slot > 0) values(row, base + slot) += 1.0;
  }
}

}  // namespace

FeatureMatrix weekly_counts(std::span<const StudentStream> streams,
                            std::span<const CohortConfig> cohorts, int week_lo, int week_hi) {
  FeatureMatrix m = empty_matrix(streams, cohorts, week_lo, week_hi);
  const auto n = static_cast<std::int64_t>(streams.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i)
    count_row(streams[static_cast<std::size_t>(i)], week_lo, week_hi, i, m.values);
  return m;
}

FeatureMatrix weekly_counts_serial(std::span<const StudentStream> streams,
                                   std::span<const CohortConfig> cohorts, int week_lo,
                                   int week_hi) {
  FeatureMatrix m = empty_matrix(streams, cohorts, week_lo, week_hi);
  for (std::size_t i = 0; i < streams.size(); ++i)
    count_row(streams[i], week_lo, week_hi, static_cast<Eigen::Index>(i), m.values);
  return m;
}

void proportional_video(FeatureMatrix& m, std::span<const CohortConfig> cohorts) {
  for (std::size_t j = 0; j < m.columns.size(); ++j) {
    if (m.columns[j].resource != Resource::video) continue;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const int videos = cohorts[static_cast<std::size_t>(m.cohort[i])].video_count;
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) /= videos;
    }
  }
}

std::vector<bool> sparsity_filter(const Eigen::MatrixXd& values, std::span<const std::size_t> rows,
                                  double min_nonzero_fraction) {
  if (rows.empty() || values.cols() == 0)
    throw Error(Errc::all_columns_dropped, "sparsity filter on an empty matrix");
  std::vector<bool> keep(static_cast<std::size_t>(values.cols()), false);
  const double n = static_cast<double>(rows.size());
  bool any = false;
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    std::size_t nonzero = 0;
    for (auto r : rows) nonzero += values(static_cast<Eigen::Index>(r), j) != 0.0;
    // Compare counts, not fractions, so an exact 1% is not lost to rounding.
    keep[static_cast<std::size_t>(j)] = static_cast<double>(nonzero) >= min_nonzero_fraction * n - 1e-9;
    any = any || keep[static_cast<std::size_t>(j)];
  }
  if (!any) throw Error(Errc::all_columns_dropped, "every predictor is sparser than the threshold");
  return keep;
}

std::vector<bool> sparsity_filter(const Eigen::MatrixXd& values, double min_nonzero_fraction) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(values.rows()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return sparsity_filter(values, rows, min_nonzero_fraction);
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& values, std::span<const std::size_t> rows,
                               const std::vector<bool>& mask) {
  if (rows.size() < 2) throw Error(Errc::not_fitted, "standardizer needs at least two rows");
  Standardizer s;
  const double n = static_cast<double>(rows.size());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    if (!mask.at(static_cast<std::size_t>(j))) continue;
    double mean = 0;
    for (auto r : rows) mean += values(static_cast<Eigen::Index>(r), j);
    mean /= n;
    double ss = 0;
    for (auto r : rows) {
      double d = values(static_cast<Eigen::Index>(r), j) - mean;
      ss += d * d;
    }
    double sd = std::sqrt(ss / (n - 1));
    if (!(sd > 0)) continue;
    s.columns_.push_back(static_cast<std::size_t>(j));
    s.mean_.push_back(mean);
    s.sd_.push_back(sd);
  }
  if (s.columns_.empty())
    throw Error(Errc::all_columns_dropped, "no predictor with non-zero training variance");
  s.fitted_ = true;
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& values,
                                    std::span<const std::size_t> rows) const {
  if (!fitted_) throw Error(Errc::not_fitted, "standardizer used before fit");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(columns_.size()));
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto j = static_cast<Eigen::Index>(columns_[c]);
    for (std::size_t i = 0; i < rows.size(); ++i)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          (values(static_cast<Eigen::Index>(rows[i]), j) - mean_[c]) / sd_[c];
  }
  return out;
}

Eigen::MatrixXd Standardizer::inverse(const Eigen::MatrixXd& z) const {
  if (!fitted_) throw Error(Errc::not_fitted, "standardizer used before fit");
  Eigen::MatrixXd out(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c)
    out.col(c) = z.col(c).array() * sd_[static_cast<std::size_t>(c)] + mean_[static_cast<std::size_t>(c)];
  return out;
}

ModelFrame make_frame(const FeatureMatrix& m, std::span<const std::size_t> rows,
                      const Standardizer& standardizer, bool with_delivery) {
  ModelFrame f;
  f.X = standardizer.apply(m.values, rows);
  for (auto c : standardizer.columns()) f.names.push_back(m.columns[c].name());
  if (with_delivery)
    for (auto r : rows) f.group.push_back(static_cast<int>(m.delivery[r]));
  return f;
}

}  // namespace engage
