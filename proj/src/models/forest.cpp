#include "engage/models/forest.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <random>

#include "engage/error.hpp"
#include "engage/seed.hpp"

namespace engage::models {

double RegressionTree::predict_row(const Eigen::MatrixXd& X, const std::vector<int>& group,
                                   Eigen::Index i) const {
  const auto p = static_cast<int>(X.cols());
  int node = 0;
  while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& nd = nodes[static_cast<std::size_t>(node)];
    bool left;
    if (nd.feature == p) {
      left = (nd.left_levels >> (group[static_cast<std::size_t>(i)] - 1)) & 1u;
    } else {
      left = X(i, nd.feature) <= nd.threshold;
    }
    node = left ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(node)].value;
}

Eigen::VectorXd ForestModel::predict(const ModelFrame& f) const {
  const Eigen::Index n = f.rows();
  Eigen::VectorXd out(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0;
    for (const auto& t : trees) s += t.predict_row(f.X, f.group, i);
    out(i) = s / static_cast<double>(trees.size());
  }
  return out;
}

Eigen::VectorXd ForestModel::predict_tree(const ModelFrame& f, std::size_t tree) const {
  Eigen::VectorXd out(f.rows());
  for (Eigen::Index i = 0; i < f.rows(); ++i) out(i) = trees.at(tree).predict_row(f.X, f.group, i);
  return out;
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0;
  std::uint8_t left_levels = 0;
  double score = -1;
};

class TreeBuilder {
 public:
  TreeBuilder(const ModelFrame& f, const Eigen::VectorXd& y, const ForestOptions& opt)
      : X_(f.X), group_(f.group), y_(y), opt_(opt),
        n_features_(static_cast<int>(f.cols()) + (f.has_group() ? 1 : 0)) {}

  RegressionTree grow(std::vector<std::uint32_t> rows, std::mt19937_64& rng) {
    RegressionTree tree;
    idx_ = std::move(rows);
    struct Pending {
      int node;
      std::size_t begin, end;
    };
    std::vector<Pending> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, 0, idx_.size()});
    while (!stack.empty()) {
      auto [node, begin, end] = stack.back();
      stack.pop_back();
      const std::size_t n = end - begin;
      double sum = 0, lo = y_(idx_[begin]), hi = lo;
      for (std::size_t k = begin; k < end; ++k) {
        double v = y_(idx_[k]);
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      tree.nodes[static_cast<std::size_t>(node)].value = sum / static_cast<double>(n);
      if (n < 2 * static_cast<std::size_t>(opt_.min_leaf) || lo == hi) continue;

      Split best = find_split(begin, end, rng);
      if (best.feature < 0) continue;

      auto mid = std::partition(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                                idx_.begin() + static_cast<std::ptrdiff_t>(end),
                                [&](std::uint32_t r) { return goes_left(best, r); });
      const auto split_at = static_cast<std::size_t>(mid - idx_.begin());
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& nd = tree.nodes[static_cast<std::size_t>(node)];
      nd.feature = best.feature;
      nd.threshold = best.threshold;
      nd.left_levels = best.left_levels;
      nd.left = left;
      nd.right = left + 1;
      stack.push_back({left + 1, split_at, end});
      stack.push_back({left, begin, split_at});
    }
    return tree;
  }

 private:
  bool goes_left(const Split& s, std::uint32_t r) const {
    if (s.feature == static_cast<int>(X_.cols()))
      return (s.left_levels >> (group_[r] - 1)) & 1u;
    return X_(r, s.feature) <= s.threshold;
  }

  Split find_split(std::size_t begin, std::size_t end, std::mt19937_64& rng) {
    features_.resize(static_cast<std::size_t>(n_features_));
    std::iota(features_.begin(), features_.end(), 0);
    Split best;
    // Draw features without replacement; past mtry keep drawing only while
    // no valid split has been found.
    for (int t = 0; t < n_features_; ++t) {
      std::uniform_int_distribution<int> pick(t, n_features_ - 1);
      std::swap(features_[static_cast<std::size_t>(t)], features_[static_cast<std::size_t>(pick(rng))]);
      const int f = features_[static_cast<std::size_t>(t)];
      if (f == static_cast<int>(X_.cols()))
        factor_split(begin, end, best);
      else
        numeric_split(f, begin, end, best);
      if (t + 1 >= opt_.mtry && best.feature >= 0) break;
    }
    return best;
  }

  void numeric_split(int f, std::size_t begin, std::size_t end, Split& best) {
    const std::size_t n = end - begin;
    pairs_.resize(n);
    double total = 0;
    for (std::size_t k = 0; k < n; ++k) {
      auto r = idx_[begin + k];
      pairs_[k] = {X_(r, f), y_(r)};
      total += pairs_[k].second;
    }
    std::sort(pairs_.begin(), pairs_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto min_leaf = static_cast<std::size_t>(opt_.min_leaf);
    double left_sum = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      left_sum += pairs_[k].second;
      const std::size_t nl = k + 1, nr = n - nl;
      if (nl < min_leaf) continue;
      if (nr < min_leaf) break;
      if (!(pairs_[k].first < pairs_[k + 1].first)) continue;
      const double right_sum = total - left_sum;
      const double score = left_sum * left_sum / static_cast<double>(nl) +
                           right_sum * right_sum / static_cast<double>(nr);
      if (score > best.score) {
        double thr = pairs_[k].first + 0.5 * (pairs_[k + 1].first - pairs_[k].first);
        if (!(thr < pairs_[k + 1].first)) thr = pairs_[k].first;
        best = {f, thr, 0, score};
      }
    }
  }

  void factor_split(std::size_t begin, std::size_t end, Split& best) {
    std::array<double, 3> sum{};
    std::array<std::size_t, 3> count{};
    for (std::size_t k = begin; k < end; ++k) {
      int g = group_[idx_[k]] - 1;
      sum[static_cast<std::size_t>(g)] += y_(idx_[k]);
      ++count[static_cast<std::size_t>(g)];
    }
    std::vector<int> levels;
    for (int g = 0; g < 3; ++g)
      if (count[static_cast<std::size_t>(g)] > 0) levels.push_back(g);
    if (levels.size() < 2) return;
    // Ordering levels by mean response makes the prefix splits optimal.
    std::sort(levels.begin(), levels.end(), [&](int a, int b) {
      const double ma = sum[static_cast<std::size_t>(a)] / static_cast<double>(count[static_cast<std::size_t>(a)]);
      const double mb = sum[static_cast<std::size_t>(b)] / static_cast<double>(count[static_cast<std::size_t>(b)]);
      return ma < mb || (ma == mb && a < b);
    });
    const double total = sum[0] + sum[1] + sum[2];
    const std::size_t n = end - begin;
    const auto min_leaf = static_cast<std::size_t>(opt_.min_leaf);
    double left_sum = 0;
    std::size_t nl = 0;
    std::uint8_t mask = 0;
    for (std::size_t m = 0; m + 1 < levels.size(); ++m) {
      const auto g = static_cast<std::size_t>(levels[m]);
      left_sum += sum[g];
      nl += count[g];
      mask = static_cast<std::uint8_t>(mask | (1u << g));
      const std::size_t nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double right_sum = total - left_sum;
      const double score = left_sum * left_sum / static_cast<double>(nl) +
                           right_sum * right_sum / static_cast<double>(nr);
      if (score > best.score) best = {static_cast<int>(X_.cols()), 0.0, mask, score};
    }
  }

  const Eigen::MatrixXd& X_;
  const std::vector<int>& group_;
  const Eigen::VectorXd& y_;
  const ForestOptions& opt_;
  const int n_features_;
  std::vector<std::uint32_t> idx_;
  std::vector<int> features_;
  std::vector<std::pair<double, double>> pairs_;
};

void validate(const ModelFrame& frame, const Eigen::VectorXd& y, const ForestOptions& opt) {
  const int features = static_cast<int>(frame.cols()) + (frame.has_group() ? 1 : 0);
  if (opt.n_trees < 1) throw Error(Errc::invalid_hyperparameter, "forest needs n_trees >= 1");
  if (opt.mtry < 1 || opt.mtry > features)
    throw Error(Errc::invalid_hyperparameter, "forest needs 1 <= mtry <= p");
  if (opt.min_leaf < 1) throw Error(Errc::invalid_hyperparameter, "forest needs min_leaf >= 1");
  if (frame.rows() < 1 || y.size() != frame.rows())
    throw Error(Errc::too_few_rows, "forest needs matching rows");
}

void grow_one(const ModelFrame& frame, const Eigen::VectorXd& y, const ForestOptions& opt,
              std::size_t t, ForestModel& out) {
  const auto n = static_cast<std::uint32_t>(frame.rows());
  std::mt19937_64 rng(derive_seed(opt.seed, {t}));
  std::vector<std::uint32_t> rows(n);
  std::vector<std::uint32_t> oob;
  if (opt.bootstrap) {
    std::uniform_int_distribution<std::uint32_t> draw(0, n - 1);
    std::vector<char> seen(n, 0);
    for (auto& r : rows) {
      r = draw(rng);
      seen[r] = 1;
    }
    for (std::uint32_t i = 0; i < n; ++i)
      if (!seen[i]) oob.push_back(i);
  } else {
    std::iota(rows.begin(), rows.end(), 0u);
  }
  TreeBuilder builder(frame, y, opt);
  out.trees[t] = builder.grow(std::move(rows), rng);
  out.out_of_bag[t] = std::move(oob);
}

ForestModel prepare(const ModelFrame& frame, const Eigen::VectorXd& y, const ForestOptions& opt) {
  validate(frame, y, opt);
  ForestModel m;
  m.trees.resize(static_cast<std::size_t>(opt.n_trees));
  m.out_of_bag.resize(static_cast<std::size_t>(opt.n_trees));
  m.uses_group = frame.has_group();
  return m;
}

}  // namespace

ForestModel fit_random_forest(const ModelFrame& frame, const Eigen::VectorXd& y,
                              const ForestOptions& opt) {
  ForestModel m = prepare(frame, y, opt);
#pragma omp parallel for schedule(dynamic, 1)
  for (int t = 0; t < opt.n_trees; ++t) grow_one(frame, y, opt, static_cast<std::size_t>(t), m);
  return m;
}

ForestModel fit_random_forest_serial(const ModelFrame& frame, const Eigen::VectorXd& y,
                                     const ForestOptions& opt) {
  ForestModel m = prepare(frame, y, opt);
  for (int t = 0; t < opt.n_trees; ++t) grow_one(frame, y, opt, static_cast<std::size_t>(t), m);
  return m;
}

}  // namespace engage::models
