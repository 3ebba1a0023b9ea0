#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"

#include "engage/error.hpp"
#include "engage/metric.hpp"

using namespace engage;

namespace {

ChapterAggregate agg(const char* user, int chapter, int sessions, std::optional<std::int64_t> day,
                     std::vector<std::uint8_t> activity = {}) {
  ChapterAggregate a;
  a.user_id = user;
  a.chapter = chapter;
  a.session_count = sessions;
  a.earliest_day = day;
  a.activity = std::move(activity);
  return a;
}

// Brute force profile log-likelihood, written from the density of the
// transformed sample: normal log-likelihood at the variance MLE plus the
// log-Jacobian (lambda - 1) * sum log x.
double oracle_loglik(const std::vector<double>& x, double lambda) {
  const double n = static_cast<double>(x.size());
  std::vector<double> t;
  for (double v : x) t.push_back(std::abs(lambda) < 1e-12 ? std::log(v) : (std::pow(v, lambda) - 1) / lambda);
  const double mu = std::accumulate(t.begin(), t.end(), 0.0) / n;
  double ss = 0;
  for (double v : t) ss += (v - mu) * (v - mu);
  double logsum = 0;
  for (double v : x) logsum += std::log(v);
  return -0.5 * n * std::log(ss / n) + (lambda - 1) * logsum;
}

ScoreTable table_of(const Eigen::MatrixXd& I, const Eigen::MatrixXd& D, const Eigen::MatrixXd& F) {
  ScoreTable t;
  for (Eigen::Index i = 0; i < I.rows(); ++i) {
    t.users.push_back("u" + std::to_string(i));
    t.cohort.push_back(0);
  }
  t.immediacy = I;
  t.diversity = D;
  t.frequency = F;
  return t;
}

}  // namespace

TEST_CASE("release dates") {
  std::vector<ChapterAggregate> a{agg("a", 1, 2, 5), agg("b", 1, 1, 3), agg("c", 1, 1, 9), agg("a", 2, 1, 0),
                                  agg("b", 2, 0, std::nullopt)};
  auto r = release_dates(a, 2);
  CHECK(r == std::vector<std::int64_t>{3, 0});

  std::vector<ChapterAggregate> none{agg("a", 1, 1, 4), agg("a", 2, 0, std::nullopt)};
  try {
    release_dates(none, 2);
    FAIL("expected NoAccess");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_access);
  }
}

TEST_CASE("raw scores") {
  auto s = raw_scores(agg("a", 1, 2, 10, {1, 0, 1, 1}), 10, 216);
  CHECK(s.immediacy == 0);
  CHECK(s.diversity == 3);
  CHECK(s.frequency == 2);
  CHECK(raw_scores(agg("a", 1, 1, 13, {1}), 10, 216).immediacy == -3);
  auto miss = raw_scores(agg("a", 1, 0, std::nullopt, {0, 0}), 10, 216);
  CHECK(miss.immediacy == -206);
  CHECK(miss.diversity == 0);
  CHECK(miss.frequency == 0);
}

TEST_CASE("chapter scaler") {
  Eigen::MatrixXd I(11, 2), D(11, 2), F(11, 2);
  for (int i = 0; i <= 10; ++i) {
    I(i, 0) = -i;
    I(i, 1) = -4;
    D(i, 0) = i;
    D(i, 1) = 2 * i;
    F(i, 0) = i % 3;
    F(i, 1) = 0;
  }
  auto t = table_of(I, D, F);
  auto sc = ChapterScaler::fit(t);
  CHECK(sc.apply(0, 1, Score::diversity) == 0);
  CHECK(sc.apply(10, 1, Score::diversity) == 1);
  CHECK(sc.apply(12, 1, Score::diversity) == doctest::Approx(1.2));
  CHECK(sc.apply(-10, 1, Score::immediacy) == 0);
  CHECK(sc.apply(-4, 2, Score::immediacy) == 0);
  CHECK(sc.apply(123, 2, Score::immediacy) == 0);
  CHECK(sc.apply(5, 2, Score::frequency) == 0);

  std::vector<std::size_t> train{0, 1, 2, 3};
  auto part = ChapterScaler::fit(t, train);
  CHECK(part.train_max(1, Score::diversity) == 3);
  CHECK(part.apply(10, 1, Score::diversity) == doctest::Approx(10.0 / 3));

  ChapterScaler empty;
  try {
    empty.apply(1, 1, Score::diversity);
    FAIL("expected NotFitted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::not_fitted);
  }

  // in-sample values lie in [0,1], y bounded by 3 * sum w
  std::vector<std::size_t> all(11);
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> w{0.6, 0.4};
  for (double y : engagement_scores(t, all, sc, w)) {
    CHECK(y >= 0);
    CHECK(y <= 3.0 + 1e-12);
  }
  for (std::size_t r = 0; r < all.size(); ++r)
    for (double v : scaled_row(t, r, sc)) {
      CHECK(v >= 0);
      CHECK(v <= 3);
    }
}

TEST_CASE("engagement metric") {
  std::vector<double> idf(20, 1.0), w(20);
  for (int k = 0; k < 20; ++k) w[k] = k < 10 ? 0.6 : 0.4;
  CHECK(engagement_metric(idf, w) == doctest::Approx(10.0));
  CHECK(engagement_metric(std::vector<double>(20, 0.0), w) == 0);
  std::vector<double> w2 = w;
  for (auto& v : w2) v *= 2;
  std::vector<double> mixed(20);
  for (int k = 0; k < 20; ++k) mixed[k] = 0.1 * k;
  CHECK(engagement_metric(mixed, w2) == doctest::Approx(2 * engagement_metric(mixed, w)));

  CHECK_THROWS_AS(engagement_metric(idf, std::vector<double>(19, 1.0)), Error);
  std::vector<double> neg(20, 1.0);
  neg[3] = -0.1;
  try {
    engagement_metric(idf, neg);
    FAIL("expected WeightMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::weight_mismatch);
  }
}

TEST_CASE("box-cox transform") {
  CHECK(boxcox(3.5, 1.0) == doctest::Approx(2.5));
  CHECK(boxcox(std::exp(1.0), 0.0) == doctest::Approx(1.0));
  CHECK(boxcox(4.0, 0.5) == doctest::Approx(2.0));
  BoxCoxParams p{1.0, 0.7, 0.0};
  CHECK(boxcox_apply(2.0, p) == doctest::Approx(1.7));
}

TEST_CASE("box-cox continuity near zero") {
  // The gap to log y at |lambda| = 1e-4 is about lambda * log(y)^2 / 2, so
  // the tolerance here scales with lambda.
  for (double y : {0.5, 1.5, 3.0, 20.0}) {
    for (double lam : {1e-4, -1e-4, 1e-6, -1e-6, 1e-8}) {
      const double ly = std::log(y);
      const double gap = std::abs(boxcox(y, lam) - ly);
      CHECK(gap <= std::abs(lam) * ly * ly + 1e-12);
    }
  }
}

TEST_CASE("box-cox grid and shift") {
  BoxCoxOptions o;
  auto g = o.grid();
  REQUIRE(g.size() == 81);
  CHECK(g.front() == doctest::Approx(-2));
  CHECK(g[40] == 0.0);
  CHECK(g.back() == doctest::Approx(2));

  std::vector<double> y{-1.0, 0.0, 2.0, 5.0};
  auto p = boxcox_fit(y);
  CHECK(p.shift == doctest::Approx(1.5));
  std::vector<double> pos{1.0, 2.0, 3.0};
  CHECK(boxcox_fit(pos).shift == 0);

  BoxCoxOptions bad;
  bad.epsilon = 0;
  try {
    boxcox_fit(y, bad);
    FAIL("expected NonPositiveAfterShift");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::non_positive_after_shift);
  }
}

TEST_CASE("box-cox fit equals the brute-force grid maximiser") {
  std::mt19937_64 rng(21);
  BoxCoxOptions o;
  const auto grid = o.grid();
  for (int t = 0; t < 20; ++t) {
    std::normal_distribution<double> z(2.0, 0.5 + 0.1 * t);
    std::vector<double> y(300);
    const double power = -1.0 + 0.1 * t;
    for (auto& v : y) v = std::exp(z(rng) * (1.0 + 0.2 * power));
    auto p = boxcox_fit(y, o);
    std::vector<double> shifted = y;
    for (auto& v : shifted) v += p.shift;
    double best = -INFINITY, arg = 0;
    for (double l : grid) {
      const double ll = oracle_loglik(shifted, l);
      if (ll > best) best = ll, arg = l;
    }
    CHECK(p.lambda == doctest::Approx(arg));
    CHECK(boxcox_profile_loglik(shifted, p.lambda) == doctest::Approx(oracle_loglik(shifted, p.lambda)).epsilon(1e-9));
  }
}

TEST_CASE("box-cox recovers lambda near zero on log-normal data") {
  int hits = 0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(3.0, 1.0);
    std::vector<double> y(2000);
    for (auto& v : y) v = std::exp(z(rng));
    if (std::abs(boxcox_fit(y).lambda) <= 0.05 + 1e-9) ++hits;
  }
  CHECK(hits >= 18);
}

TEST_CASE("scaling and transform preserve order") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<double> y(100);
  for (auto& v : y) v = u(rng);
  auto p = boxcox_fit(y);
  std::vector<std::size_t> idx(y.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return y[a] < y[b]; });
  for (std::size_t i = 1; i < idx.size(); ++i)
    CHECK(boxcox_apply(y[idx[i - 1]], p) < boxcox_apply(y[idx[i]], p));
}

TEST_CASE("out-of-sample values below the shifted range are clamped") {
  std::vector<double> y{1.0, 2.0, 3.0, 4.0};
  auto p = boxcox_fit(y);
  CHECK(std::isfinite(boxcox_apply(-100.0, p)));
  CHECK(boxcox_apply(-100.0, p) == boxcox_apply(-200.0, p));
  CHECK(boxcox_apply(-100.0, p) <= boxcox_apply(1.0, p));
}
