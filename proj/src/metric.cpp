#include "engage/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "engage/error.hpp"

namespace engage {

std::vector<std::int64_t> release_dates(std::span<const ChapterAggregate> aggregates,
                                        int chapter_count) {
  constexpr auto none = std::numeric_limits<std::int64_t>::max();
  std::vector<std::int64_t> release(static_cast<std::size_t>(chapter_count), none);
  for (const auto& a : aggregates) {
    if (a.chapter < 1 || a.chapter > chapter_count || !a.earliest_day) continue;
    auto& r = release[static_cast<std::size_t>(a.chapter - 1)];
    r = std::min(r, *a.earliest_day);
  }
  for (int k = 0; k < chapter_count; ++k)
    if (release[static_cast<std::size_t>(k)] == none)
      throw Error(Errc::no_access, "chapter " + std::to_string(k + 1) + " was never accessed");
  return release;
}

RawScore raw_scores(const ChapterAggregate& agg, std::int64_t release_day,
                    std::int64_t module_end_day) {
  if (agg.session_count == 0 || !agg.earliest_day)
    return {static_cast<double>(release_day - module_end_day), 0.0, 0.0};
  return {static_cast<double>(release_day - *agg.earliest_day),
          static_cast<double>(agg.diversity()), static_cast<double>(agg.session_count)};
}

const Eigen::MatrixXd& ScoreTable::score(Score s) const {
  switch (s) {
    case Score::immediacy: return immediacy;
    case Score::diversity: return diversity;
    case Score::frequency: return frequency;
  }
  return immediacy;
}

Eigen::MatrixXd& ScoreTable::score(Score s) {
  return const_cast<Eigen::MatrixXd&>(std::as_const(*this).score(s));
}

ScoreTable ScoreTable::subset(std::span<const std::size_t> rows) const {
  ScoreTable out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.immediacy.resize(n, immediacy.cols());
  out.diversity.resize(n, diversity.cols());
  out.frequency.resize(n, frequency.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
    out.users.push_back(users[static_cast<std::size_t>(r)]);
    out.cohort.push_back(cohort[static_cast<std::size_t>(r)]);
    out.immediacy.row(i) = immediacy.row(r);
    out.diversity.row(i) = diversity.row(r);
    out.frequency.row(i) = frequency.row(r);
  }
  return out;
}

ChapterScaler ChapterScaler::fit(const ScoreTable& table, std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) throw Error(Errc::not_fitted, "scaler fit on zero rows");
  ChapterScaler s;
  const int K = table.chapters();
  constexpr double inf = std::numeric_limits<double>::infinity();
  s.min_.assign(static_cast<std::size_t>(K), {inf, inf, inf});
  s.max_.assign(static_cast<std::size_t>(K), {-inf, -inf, -inf});
  for (int sc = 0; sc < 3; ++sc) {
    const auto& m = table.score(static_cast<Score>(sc));
    for (auto r : train_rows)
      for (int k = 0; k < K; ++k) {
        double v = m(static_cast<Eigen::Index>(r), k);
        s.min_[static_cast<std::size_t>(k)][sc] = std::min(s.min_[static_cast<std::size_t>(k)][sc], v);
        s.max_[static_cast<std::size_t>(k)][sc] = std::max(s.max_[static_cast<std::size_t>(k)][sc], v);
      }
  }
  s.fitted_ = true;
  return s;
}

ChapterScaler ChapterScaler::fit(const ScoreTable& table) {
  std::vector<std::size_t> rows(table.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return fit(table, rows);
}

double ChapterScaler::apply(double v, int chapter, Score s) const {
  if (!fitted_) throw Error(Errc::not_fitted, "chapter scaler used before fit");
  const auto k = static_cast<std::size_t>(chapter - 1);
  const auto i = static_cast<std::size_t>(s);
  const double lo = min_.at(k)[i], hi = max_.at(k)[i];
  if (!(hi > lo)) return 0.0;
  return (v - lo) / (hi - lo);
}

double ChapterScaler::train_min(int chapter, Score s) const {
  if (!fitted_) throw Error(Errc::not_fitted, "chapter scaler used before fit");
  return min_.at(static_cast<std::size_t>(chapter - 1))[static_cast<std::size_t>(s)];
}

double ChapterScaler::train_max(int chapter, Score s) const {
  if (!fitted_) throw Error(Errc::not_fitted, "chapter scaler used before fit");
  return max_.at(static_cast<std::size_t>(chapter - 1))[static_cast<std::size_t>(s)];
}

double engagement_metric(std::span<const double> idf, std::span<const double> weights) {
  if (idf.size() != weights.size())
    throw Error(Errc::weight_mismatch, std::to_string(weights.size()) + " weights for " +
                                           std::to_string(idf.size()) + " chapters");
  double y = 0;
  for (std::size_t k = 0; k < idf.size(); ++k) {
    if (weights[k] < 0) throw Error(Errc::weight_mismatch, "negative chapter weight");
    y += weights[k] * idf[k];
  }
  return y;
}

std::vector<double> scaled_row(const ScoreTable& table, std::size_t row,
                               const ChapterScaler& scaler) {
  const int K = table.chapters();
  std::vector<double> out(static_cast<std::size_t>(4 * K));
  const auto r = static_cast<Eigen::Index>(row);
  for (int k = 0; k < K; ++k) {
    double i = scaler.apply(table.immediacy(r, k), k + 1, Score::immediacy);
    double d = scaler.apply(table.diversity(r, k), k + 1, Score::diversity);
    double f = scaler.apply(table.frequency(r, k), k + 1, Score::frequency);
    out[static_cast<std::size_t>(k)] = i;
    out[static_cast<std::size_t>(K + k)] = d;
    out[static_cast<std::size_t>(2 * K + k)] = f;
    out[static_cast<std::size_t>(3 * K + k)] = i + d + f;
  }
  return out;
}

std::vector<double> engagement_scores(const ScoreTable& table, std::span<const std::size_t> rows,
                                      const ChapterScaler& scaler,
                                      std::span<const double> weights) {
  const int K = table.chapters();
  if (weights.size() != static_cast<std::size_t>(K))
    throw Error(Errc::weight_mismatch, std::to_string(weights.size()) + " weights for " +
                                           std::to_string(K) + " chapters");
  std::vector<double> y;
  y.reserve(rows.size());
  std::vector<double> idf(static_cast<std::size_t>(K));
  for (auto r : rows) {
    auto s = scaled_row(table, r, scaler);
    std::copy(s.begin() + 3 * K, s.end(), idf.begin());
    y.push_back(engagement_metric(idf, weights));
  }
  return y;
}

std::vector<double> BoxCoxOptions::grid() const {
  std::vector<double> g;
  if (!(lambda_step > 0) || lambda_hi < lambda_lo) return g;
  const auto n = static_cast<long>(std::floor((lambda_hi - lambda_lo) / lambda_step + 1e-9));
  for (long i = 0; i <= n; ++i) {
    double v = lambda_lo + static_cast<double>(i) * lambda_step;
    if (std::abs(v) < lambda_step * 1e-9) v = 0.0;
    g.push_back(v);
  }
  return g;
}

double boxcox(double x, double lambda) {
  if (lambda == 0.0) return std::log(x);
  return std::expm1(lambda * std::log(x)) / lambda;
}

double boxcox_profile_loglik(std::span<const double> x, double lambda) {
  const double n = static_cast<double>(x.size());
  double mean = 0, sum_log = 0;
  for (double v : x) {
    mean += boxcox(v, lambda);
    sum_log += std::log(v);
  }
  mean /= n;
  double ss = 0;
  for (double v : x) {
    double d = boxcox(v, lambda) - mean;
    ss += d * d;
  }
  return -0.5 * n * std::log(ss / n) + (lambda - 1.0) * sum_log;
}

BoxCoxParams boxcox_fit(std::span<const double> y, const BoxCoxOptions& opt) {
  if (!(opt.epsilon > 0))
    throw Error(Errc::non_positive_after_shift, "Box-Cox epsilon must be positive");
  auto grid = opt.grid();
  if (grid.empty()) throw Error(Errc::config_error, "empty Box-Cox lambda grid");
  if (y.empty()) throw Error(Errc::not_fitted, "Box-Cox fit on zero values");
  const double lo = *std::min_element(y.begin(), y.end());
  BoxCoxParams p;
  p.shift = std::max(0.0, opt.epsilon - lo);
  std::vector<double> x(y.begin(), y.end());
  for (double& v : x) v += p.shift;
  if (*std::min_element(x.begin(), x.end()) <= 0)
    throw Error(Errc::non_positive_after_shift, "non-positive value after Box-Cox shift");
  p.floor = 0.5 * (lo + p.shift);

  double best = -std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    double ll = boxcox_profile_loglik(x, lambda);
    if (ll > best) {
      best = ll;
      p.lambda = lambda;
    }
  }
  return p;
}

double boxcox_apply(double y, const BoxCoxParams& p) {
  return boxcox(std::max(y + p.shift, p.floor), p.lambda);
}

}  // namespace engage
