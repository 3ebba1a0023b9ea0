// Shared builders and independent reference implementations for tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "engage/evaluation.hpp"
#include "engage/frame.hpp"
#include "engage/ingest.hpp"
#include "engage/sessionizer.hpp"

namespace fixtures {

inline engage::Minutes base_time() { return *engage::parse_timestamp("2020-10-05 00:00"); }

/// Record of `user` at `minute` after term start (2020-10-05, week 5).
inline engage::ClassifiedRecord at(std::int64_t minute, std::optional<int> chapter = std::nullopt,
                                   const std::string& context = "page", const std::string& user = "u") {
  engage::ClassifiedRecord r;
  r.base.timestamp = base_time() + std::chrono::minutes{minute};
  r.base.user_id = user;
  r.base.event_context = context;
  r.base.component = "c";
  r.base.event_name = "e";
  r.day_index = minute >= 0 ? minute / 1440 : -((-minute + 1439) / 1440);
  r.week = 5 + static_cast<int>(r.day_index / 7);
  r.chapter = chapter;
  r.kind = chapter ? engage::ResourceKind::lecture_note : engage::ResourceKind::other;
  r.activity_key = engage::activity_key(r.base);
  return r;
}

/// Session label of every record by direct pairwise inspection: record j
/// starts a new session when the gap to j-1 exceeds the threshold, and its
/// label counts all such breaks at or before j.
inline std::vector<int> naive_session_labels(const std::vector<std::int64_t>& minutes, int threshold) {
  std::vector<int> label(minutes.size(), 0);
  for (std::size_t j = 0; j < minutes.size(); ++j) {
    int breaks = 0;
    for (std::size_t i = 1; i <= j; ++i)
      if (minutes[i] - minutes[i - 1] > threshold) ++breaks;
    label[j] = breaks;
  }
  return label;
}

/// Sorted random minute offsets with clustered gaps (zero gaps, short gaps,
/// threshold-adjacent gaps and long breaks).
inline std::vector<std::int64_t> random_minutes(std::mt19937_64& rng, std::size_t n, int threshold) {
  std::vector<std::int64_t> m(n);
  std::uniform_int_distribution<int> kind(0, 4), small(0, 10), near(threshold - 1, threshold + 1),
      large(threshold + 1, 5000);
  std::int64_t t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      switch (kind(rng)) {
        case 0: break;
        case 1:
        case 2: t += small(rng); break;
        case 3: t += std::max(0, near(rng)); break;
        default: t += large(rng); break;
      }
    }
    m[i] = t;
  }
  return m;
}

/// Nearest-rank percentile by full sort, rounded half-up to `step`.
inline int sorted_threshold(std::vector<std::int64_t> gaps, int cap, int step, double pct) {
  std::vector<std::int64_t> kept;
  for (auto g : gaps)
    if (g > 0 && g <= cap) kept.push_back(g);
  std::sort(kept.begin(), kept.end());
  const auto n = kept.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(pct * static_cast<double>(n) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  const double v = static_cast<double>(kept[rank - 1]);
  return static_cast<int>(std::floor(v / step + 0.5)) * step;
}

inline engage::ModelFrame gaussian_frame(std::mt19937_64& rng, int n, int p, bool group = false) {
  std::normal_distribution<double> z;
  engage::ModelFrame f;
  f.X.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) f.X(i, j) = z(rng);
  for (int j = 0; j < p; ++j) f.names.push_back("x" + std::to_string(j));
  if (group) {
    std::uniform_int_distribution<int> g(1, 3);
    for (int i = 0; i < n; ++i) f.group.push_back(g(rng));
  }
  return f;
}

/// Dataset with a direct response. Feature columns are named as weekly
/// click columns so they pass through the feature machinery unchanged.
inline engage::Dataset direct_dataset(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      const std::vector<int>& group = {}) {
  engage::Dataset d;
  auto& f = d.features;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    f.users.push_back("s" + std::to_string(i));
    f.cohort.push_back(group.empty() ? 0 : group[static_cast<std::size_t>(i)] - 1);
    f.delivery.push_back(group.empty() ? engage::DeliveryMethod::online
                                       : static_cast<engage::DeliveryMethod>(group[static_cast<std::size_t>(i)]));
  }
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    f.columns.push_back({engage::Resource::clicks, static_cast<int>(j)});
  f.values = X;
  d.y = y;
  d.min_nonzero_fraction = 0.0;
  d.with_delivery = !group.empty();
  return d;
}

}  // namespace fixtures
