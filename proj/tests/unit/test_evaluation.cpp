#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"

#include "engage/error.hpp"
#include "engage/evaluation.hpp"
#include "engage/seed.hpp"

using namespace engage;
using namespace engage::models;

namespace {

ModelGrid ridge_grid() { return {Family::ridge, {{"lambda", {1e-4, 1e-2, 1.0}}}}; }

CvOptions cv_opts(int k, std::uint64_t seed) {
  CvOptions o;
  o.folds = k;
  o.inner_folds = k;
  o.seed = seed;
  return o;
}

Eigen::MatrixXd gaussian(std::mt19937_64& rng, int n, int p) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd X(n, p);
  for (auto& v : X.reshaped()) v = z(rng);
  return X;
}

// Scores-based dataset: two chapters, integer raw scores, features count-like.
Dataset score_dataset(std::mt19937_64& rng, int n) {
  std::poisson_distribution<int> pois(3.0);
  std::uniform_int_distribution<int> lag(0, 20);
  Eigen::MatrixXd X(n, 4);
  ScoreTable t;
  t.immediacy.resize(n, 2);
  t.diversity.resize(n, 2);
  t.frequency.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    t.users.push_back("s" + std::to_string(i));
    t.cohort.push_back(0);
    for (int k = 0; k < 2; ++k) {
      t.immediacy(i, k) = -lag(rng);
      t.diversity(i, k) = pois(rng);
      t.frequency(i, k) = pois(rng);
    }
    X(i, 0) = t.frequency(i, 0) + pois(rng);
    X(i, 1) = t.diversity(i, 1);
    X(i, 2) = pois(rng);
    X(i, 3) = i % 50 == 0 ? 1 : 0;
  }
  Dataset d = fixtures::direct_dataset(X, Eigen::VectorXd::Zero(n));
  d.y.reset();
  d.scores = t;
  d.weights = {0.6, 0.4};
  d.min_nonzero_fraction = 0.05;
  return d;
}

}  // namespace

TEST_CASE("metrics examples") {
  std::vector<double> y{0, 2}, half{1, 1};
  auto m = metrics(y, half);
  CHECK(m.rmse == doctest::Approx(1.0));
  REQUIRE(m.r2);
  CHECK(*m.r2 == doctest::Approx(0.0));
  std::vector<double> a{1, 5, 2, 8};
  auto same = metrics(a, a);
  CHECK(same.rmse == 0);
  CHECK(*same.r2 == 1);
  std::vector<double> c{3, 3, 3}, p{1, 2, 3};
  auto constant = metrics(c, p);
  CHECK_FALSE(constant.r2);
  CHECK(constant.rmse > 0);
  try {
    r_squared(c, p);
    FAIL("expected ZeroVarianceTarget");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::zero_variance_target);
  }
  CHECK_THROWS_AS(metrics(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST_CASE("fold partitions") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (std::size_t n : {20ul, 97ul, 900ul}) {
      auto f = make_folds(n, 10, seed);
      REQUIRE(f.size() == n);
      std::vector<std::size_t> count(10, 0);
      for (int v : f) {
        REQUIRE(v >= 0);
        REQUIRE(v < 10);
        ++count[static_cast<std::size_t>(v)];
      }
      CHECK(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()) <= 1);
    }
  }
  CHECK(make_folds(50, 5, 1) == make_folds(50, 5, 1));
  CHECK(make_folds(50, 5, 1) != make_folds(50, 5, 2));
}

TEST_CASE("segment analysis") {
  std::vector<double> y{5, 1, 9, 3, 7, 2, 8, 4, 6, 0};
  auto r = segment_analysis(y, y);
  for (const auto& s : r.segments) {
    CHECK(s.count == 2);
    CHECK(s.rmse == 0);
    CHECK(s.mean_residual == 0);
  }
  CHECK(r.segments[0].y_min == 0);
  CHECK(r.segments[0].y_max == 1);
  CHECK(r.segments[4].y_max == 9);

  std::vector<double> eleven(11, 1.0), pred(11, 1.0);
  auto t = segment_analysis(eleven, pred);
  std::size_t total = 0;
  for (const auto& s : t.segments) {
    total += s.count;
    CHECK((s.count == 2 || s.count == 3));
  }
  CHECK(total == 11);

  // predicting the noise-free value: observed extremes are partly noise,
  // so low quintiles are overestimated and high ones underestimated
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::vector<double> truth(2000), obs(2000), hat(2000);
  for (int i = 0; i < 2000; ++i) {
    truth[i] = z(rng);
    obs[i] = truth[i] + z(rng);
    hat[i] = truth[i];
  }
  auto s = segment_analysis(obs, hat);
  CHECK(s.segments[0].mean_residual > 0);
  CHECK(s.segments[4].mean_residual < 0);
}

TEST_CASE("summary") {
  std::vector<double> v{1, 2, 3, 4};
  auto s = summarize(v);
  CHECK(s.mean == 2.5);
  CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(s.min == 1);
  CHECK(s.max == 4);
  CHECK(s.count == 4);
}

TEST_CASE("perfect linear data") {
  std::mt19937_64 rng(2);
  auto X = gaussian(rng, 200, 5);
  Eigen::VectorXd beta(5);
  beta << 1, -2, 0.5, 0, 3;
  Eigen::VectorXd y = X * beta;
  auto rep = nested_cv(fixtures::direct_dataset(X, y), {ridge_grid()}, cv_opts(10, 7));
  REQUIRE(rep.families.size() == 1);
  for (const auto& f : rep.families[0].folds) {
    REQUIRE(f.r2);
    CHECK(*f.r2 > 0.999);
  }
}

TEST_CASE("report bookkeeping") {
  std::mt19937_64 rng(3);
  auto X = gaussian(rng, 120, 4);
  Eigen::VectorXd y = X.col(0) + 0.5 * gaussian(rng, 120, 1).col(0);
  std::vector<int> g(120);
  for (int i = 0; i < 120; ++i) g[i] = 1 + i % 3;
  auto d = fixtures::direct_dataset(X, y, g);
  ModelGrid pcr{Family::pcr, {{"n_components", {1, 2, 3}}}};
  auto rep = nested_cv(d, {ridge_grid(), pcr}, cv_opts(5, 11));
  CHECK(rep.k == 5);
  CHECK(rep.fold_of_row == make_folds(120, 5, derive_seed(11, {0})));
  for (const auto& fr : rep.families) {
    CHECK(fr.oof_predicted.size() == 120);
    CHECK(fr.folds.size() == 5);
    std::size_t tested = 0;
    std::vector<double> rmse;
    for (const auto& f : fr.folds) {
      tested += f.n_test;
      rmse.push_back(f.rmse);
    }
    CHECK(tested == 120);
    const auto direct = summarize(rmse);
    CHECK(fr.rmse.mean == direct.mean);
    CHECK(fr.rmse.sd == direct.sd);
    // observed values are the response itself here
    for (std::size_t i = 0; i < 120; ++i) CHECK(fr.oof_observed[i] == y(static_cast<Eigen::Index>(i)));
  }
  CHECK(rep.find(Family::pcr) != nullptr);
  CHECK(rep.find(Family::lasso) == nullptr);

  auto again = nested_cv(d, {ridge_grid(), pcr}, cv_opts(5, 11));
  CHECK(again.families[1].oof_predicted == rep.families[1].oof_predicted);

  CHECK_THROWS_AS(nested_cv(fixtures::direct_dataset(X.topRows(9), y.head(9)), {ridge_grid()}, cv_opts(5, 1)),
                  Error);
}

TEST_CASE("null data gives no out-of-fold skill") {
  double total = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    std::mt19937_64 rng(100 + s);
    auto X = gaussian(rng, 100, 5);
    Eigen::VectorXd y = gaussian(rng, 100, 1).col(0);
    auto rep = nested_cv(fixtures::direct_dataset(X, y), {ridge_grid()}, cv_opts(5, s));
    total += rep.families[0].r2.mean;
  }
  CHECK(total / 20 <= 0.05);
}

TEST_CASE("no leakage: deleting the test rows changes nothing") {
  std::mt19937_64 rng(4);
  auto d = score_dataset(rng, 150);
  const std::vector<ModelGrid> grids{ridge_grid(), {Family::random_forest, {{"n_trees", {10}}, {"mtry", {2}}, {"min_leaf", {5}}}}};
  auto folds = make_folds(150, 5, 9);
  for (int f = 0; f < 5; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < 150; ++i) (folds[i] == f ? test : train).push_back(i);
    const auto fold_seed = derive_seed(9, {1, static_cast<std::uint64_t>(f)});
    auto full = fit_outer_fold(d, train, grids, cv_opts(5, 9), fold_seed);
    auto reduced = d.subset(train);
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), 0);
    auto alone = fit_outer_fold(reduced, all, grids, cv_opts(5, 9), fold_seed);
    CHECK(full.pipeline == alone.pipeline);
    REQUIRE(full.pipeline.scaler);
    CHECK(*full.pipeline.scaler == ChapterScaler::fit(*d.scores, train));
    const auto frame = full.pipeline.frame(d, test);
    for (std::size_t m = 0; m < grids.size(); ++m) {
      CHECK(full.models[m].spec == alone.models[m].spec);
      CHECK(full.models[m].predict(frame) == alone.models[m].predict(frame));
    }
  }
}

TEST_CASE("derived response lives on the fold's Box-Cox scale") {
  std::mt19937_64 rng(5);
  auto d = score_dataset(rng, 100);
  std::vector<std::size_t> train(80), test(20);
  std::iota(train.begin(), train.end(), 0);
  std::iota(test.begin(), test.end(), 80);
  auto p = FoldPipeline::fit(d, train);
  REQUIRE(p.boxcox);
  const auto yt = p.response(d, test);
  const auto scaler = ChapterScaler::fit(*d.scores, train);
  const auto raw = engagement_scores(*d.scores, test, scaler, d.weights);
  for (std::size_t i = 0; i < test.size(); ++i) CHECK(yt(static_cast<Eigen::Index>(i)) == boxcox_apply(raw[i], *p.boxcox));
  // the rarely non-zero column falls under the 5% sparsity floor
  CHECK_FALSE(p.mask[3]);
}

TEST_CASE("modal spec") {
  FamilyReport r;
  r.family = Family::ridge;
  auto specs = ridge_grid().expand();
  for (int i : {2, 0, 2, 0, 1}) {
    FoldResult f;
    f.chosen = specs[static_cast<std::size_t>(i)];
    r.folds.push_back(f);
  }
  CHECK(modal_spec(r, ridge_grid()) == specs[0]);
  r.folds.back().chosen = specs[2];
  CHECK(modal_spec(r, ridge_grid()) == specs[2]);
}

TEST_CASE("final refit is deterministic and sane") {
  std::mt19937_64 rng(6);
  auto X = gaussian(rng, 150, 4);
  Eigen::VectorXd y = 2 * X.col(0) + X.col(1).array().square().matrix() + 0.3 * gaussian(rng, 150, 1).col(0);
  std::vector<int> g(150);
  for (int i = 0; i < 150; ++i) g[i] = 1 + i % 3;
  auto d = fixtures::direct_dataset(X, y, g);
  const std::vector<ModelGrid> grids{{Family::elastic_net, {{"alpha", {0.5}}, {"lambda", {1e-3, 1e-1}}}},
                                     ModelGrid::defaults(Family::gam), {Family::rgam, {{"basis_size", {8}}}}};
  auto cv = nested_cv(d, grids, cv_opts(5, 3));
  CHECK(cv.gam_fold_p_values.size() == 5);
  RefitOptions ro;
  ro.seed = 3;
  ro.importance_repeats = 3;
  auto a = final_refit(d, grids, cv, ro);
  auto b = final_refit(d, grids, cv, ro);
  REQUIRE(a.families.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.families[i].importance == b.families[i].importance);
  CHECK(a.columns.size() == 4);

  std::vector<std::size_t> all(150);
  std::iota(all.begin(), all.end(), 0);
  const auto full = a.pipeline.frame(d, all);
  const auto yv = a.pipeline.response(d, all);
  const auto pred = a.families[0].model.predict(full);
  const double rmse = std::sqrt((pred - yv).squaredNorm() / 150);
  CHECK(rmse <= cv.families[0].rmse.max * 1.1);

  CHECK(a.families[1].significance);
  CHECK(a.families[0].model.delivery_effects().size() == 2);
  CHECK(a.families[2].rgam_terms.size() >= 1);
  CHECK(std::find(a.families[2].rgam_terms.begin(), a.families[2].rgam_terms.end(), "clicks_w0") !=
        a.families[2].rgam_terms.end());
}
