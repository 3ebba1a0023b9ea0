#include <random>

#include "doctest.h"
#include "fixtures.hpp"

#include "engage/error.hpp"
#include "engage/models/gam.hpp"

using namespace engage;
using namespace engage::models;

namespace {

ModelFrame one_column(const Eigen::VectorXd& x) {
  ModelFrame f;
  f.X = x;
  f.names = {"x"};
  return f;
}

Eigen::VectorXd normal(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> z;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

}  // namespace

TEST_CASE("b-spline basis") {
  BSplineBasis b(-1.0, 2.0, {-0.5, 0.0, 0.7, 1.5});
  CHECK(b.size() == 8);
  for (double x = -1.0; x <= 2.0; x += 0.01) {
    const auto r = b.eval(x);
    CHECK(r.sum() == doctest::Approx(1.0));
    CHECK(r.minCoeff() >= -1e-15);
  }
  // derivatives against central differences
  const double h = 1e-5;
  for (double x : {-0.9, -0.2, 0.33, 1.1, 1.9}) {
    const Eigen::RowVectorXd fd1 = (b.eval(x + h) - b.eval(x - h)) / (2 * h);
    CHECK((b.derivative(x, 1) - fd1).cwiseAbs().maxCoeff() < 1e-6);
    const Eigen::RowVectorXd fd2 = (b.derivative(x + h, 1) - b.derivative(x - h, 1)) / (2 * h);
    CHECK((b.derivative(x, 2) - fd2).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("curvature penalty equals numerical quadrature") {
  BSplineBasis b(0.0, 1.0, {0.2, 0.45, 0.6, 0.9});
  const int k = b.size();
  // composite Simpson with many panels; second derivatives are piecewise linear
  const int panels = 6000;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i <= panels; ++i) {
    const double x = static_cast<double>(i) / panels;
    const double w = (i == 0 || i == panels) ? 1 : (i % 2 ? 4 : 2);
    const Eigen::RowVectorXd d2 = b.derivative(std::min(x, 1.0), 2);
    S += w * d2.transpose() * d2;
  }
  S /= 3.0 * panels;
  CHECK((b.curvature_penalty() - S).cwiseAbs().maxCoeff() < 1e-3 * S.cwiseAbs().maxCoeff());

  // a straight line has no curvature: coefficients at the Greville abscissae
  Eigen::VectorXd c(k);
  const auto& t = b.knots();
  for (int j = 0; j < k; ++j) c(j) = 3.0 * (t[j + 1] + t[j + 2] + t[j + 3]) / 3.0 - 1.0;
  CHECK(c.dot(b.curvature_penalty() * c) < 1e-9);
  CHECK(b.eval(0.37).dot(c) == doctest::Approx(3.0 * 0.37 - 1.0));
}

TEST_CASE("term basis is centred and falls back to linear") {
  std::mt19937_64 rng(1);
  auto x = normal(rng, 200);
  auto tb = TermBasis::build(x, 10);
  CHECK_FALSE(tb.is_linear());
  CHECK(tb.dim() == 9);
  const auto D = tb.design(x);
  CHECK(D.colwise().sum().cwiseAbs().maxCoeff() < 1e-9);

  Eigen::VectorXd few(6);
  few << 0, 1, 2, 0, 1, 2;
  auto lin = TermBasis::build(few, 10);
  CHECK(lin.is_linear());
  CHECK(lin.dim() == 1);
  CHECK(lin.design(few).sum() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("linear signal: close to the line and to least squares") {
  std::mt19937_64 rng(2);
  auto x = normal(rng, 400);
  Eigen::VectorXd y = 2.0 * x + 0.5 * normal(rng, 400);
  auto f = one_column(x);
  auto g = fit_gam(f, y);
  CHECK(g.converged);
  auto ols = fit_ols(f, y);
  auto xt = normal(rng, 400);
  Eigen::VectorXd yt = 2.0 * xt + 0.5 * normal(rng, 400);
  auto ft = one_column(xt);
  const double rg = std::sqrt((g.predict(ft) - yt).squaredNorm() / 400);
  const double ro = std::sqrt((ols.predict(ft) - yt).squaredNorm() / 400);
  CHECK(rg <= 1.1 * ro);

  auto sig = gam_term_significance(g, 50);
  REQUIRE(sig.smooth.size() == 1);
  for (const auto& pt : sig.smooth[0].grid) {
    if (std::abs(pt.x) > 2) continue;
    CHECK(pt.lower - 1e-9 <= pt.fit);
    CHECK(pt.fit <= pt.upper + 1e-9);
    // intercept + f(x) tracks the true line 2x within the band (plus the
    // intercept's own error)
    CHECK(std::abs(g.intercept + pt.fit - 2.0 * pt.x) < (pt.upper - pt.lower) / 2 + 0.1);
  }
}

TEST_CASE("infinite smoothing equals linear regression") {
  std::mt19937_64 rng(3);
  auto f = fixtures::gaussian_frame(rng, 300, 4, true);
  Eigen::VectorXd y = f.X.col(0).array().sin().matrix() + f.X.col(1).array().square().matrix() +
                      0.3 * normal(rng, 300);
  for (Eigen::Index i = 0; i < 300; ++i) y(i) += f.group[i] == 2 ? 0.5 : 0.0;
  GamOptions o;
  o.fixed_lambda = std::numeric_limits<double>::infinity();
  o.tol = 1e-12;
  o.max_iter = 2000;
  auto g = fit_gam(f, y, o);
  auto ols = fit_ols(f, y);
  CHECK((g.predict(f) - ols.predict(f)).cwiseAbs().maxCoeff() < 1e-4);
  for (const auto& t : g.terms) CHECK(t.edf == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("zero response") {
  std::mt19937_64 rng(4);
  auto f = fixtures::gaussian_frame(rng, 100, 3);
  auto g = fit_gam(f, Eigen::VectorXd::Zero(100));
  CHECK(g.intercept == 0);
  CHECK(g.fitted.cwiseAbs().maxCoeff() == 0);
  for (const auto& t : g.terms)
    for (double x : {-1.0, 0.0, 2.0}) CHECK(t.value(x) == 0);
}

TEST_CASE("centring, fitted values and the training-range grid") {
  std::mt19937_64 rng(5);
  auto f = fixtures::gaussian_frame(rng, 250, 3, true);
  Eigen::VectorXd y = (2 * f.X.col(0)).array().sin().matrix() + 0.5 * f.X.col(2) + 0.2 * normal(rng, 250);
  auto g = fit_gam(f, y);
  for (const auto& t : g.terms) {
    double s = 0;
    for (Eigen::Index i = 0; i < 250; ++i) s += t.value(f.X(i, static_cast<Eigen::Index>(t.column)));
    CHECK(std::abs(s) < 1e-8);
  }
  CHECK((g.predict(f) - g.fitted).cwiseAbs().maxCoeff() < 1e-8);
  auto sig = gam_term_significance(g, 100);
  for (std::size_t j = 0; j < sig.smooth.size(); ++j) {
    const auto& grid = sig.smooth[j].grid;
    REQUIRE(grid.size() == 100);
    CHECK(grid.front().x == doctest::Approx(f.X.col(j).minCoeff()));
    CHECK(grid.back().x == doctest::Approx(f.X.col(j).maxCoeff()));
  }
  REQUIRE(sig.factor);
  CHECK(sig.factor->df1 == 2);
}

TEST_CASE("column subset") {
  std::mt19937_64 rng(6);
  auto f = fixtures::gaussian_frame(rng, 150, 5);
  Eigen::VectorXd y = f.X.col(3) + 0.1 * normal(rng, 150);
  std::vector<std::size_t> cols{1, 3};
  auto g = fit_gam(f, y, {}, &cols);
  REQUIRE(g.terms.size() == 2);
  CHECK(g.terms[0].name == "x1");
  CHECK(g.terms[1].name == "x3");
  std::vector<std::size_t> none;
  auto g0 = fit_gam(f, y, {}, &none);
  CHECK(g0.terms.empty());
  CHECK(g0.predict(f).cwiseAbs().maxCoeff() == doctest::Approx(std::abs(y.mean())));
}

TEST_CASE("a column constant on the sample contributes nothing") {
  std::mt19937_64 rng(16);
  auto f = fixtures::gaussian_frame(rng, 80, 3);
  f.X.col(1).setZero();
  Eigen::VectorXd y = f.X.col(0) + 0.1 * normal(rng, 80);
  auto g = fit_gam(f, y);
  REQUIRE(g.terms.size() == 3);
  CHECK(g.terms[1].W.cols() == 0);
  CHECK(g.predict(f).allFinite());
  auto sig = gam_term_significance(g);
  CHECK(sig.smooth[1].p_value == 1.0);
  CHECK(sig.smooth[0].p_value < 1e-6);
}

TEST_CASE("strong signal is highly significant") {
  std::mt19937_64 rng(7);
  ModelFrame f;
  f.X.resize(500, 2);
  f.X.col(0) = normal(rng, 500);
  f.X.col(1) = normal(rng, 500);
  f.names = {"signal", "noise"};
  Eigen::VectorXd y = f.X.col(0).array().sin().matrix() + 0.1 * normal(rng, 500);
  auto sig = gam_term_significance(fit_gam(f, y));
  CHECK(sig.smooth[0].p_value < 1e-4);
  CHECK(sig.smooth[0].edf > 2);
  CHECK(sig.smooth[1].p_value > 1e-4);
}

TEST_CASE("pure noise p-values are calibrated") {
  std::mt19937_64 rng(8);
  int reject = 0;
  const int sims = 200;
  for (int s = 0; s < sims; ++s) {
    auto x = normal(rng, 500);
    auto y = normal(rng, 500);
    auto sig = gam_term_significance(fit_gam(one_column(x), y), 10);
    const double p = sig.smooth[0].p_value;
    CHECK(p >= 0);
    CHECK(p <= 1);
    if (p < 0.05) ++reject;
  }
  const double rate = static_cast<double>(reject) / sims;
  MESSAGE("noise rejection rate at 0.05: " << rate);
  CHECK(rate >= 0.02);
  CHECK(rate <= 0.08);
}

TEST_CASE("factor effect F-test") {
  std::mt19937_64 rng(9);
  auto f = fixtures::gaussian_frame(rng, 300, 2, true);
  Eigen::VectorXd y = 0.3 * normal(rng, 300);
  for (Eigen::Index i = 0; i < 300; ++i) y(i) += f.group[i] == 3 ? 1.0 : 0.0;
  auto sig = gam_term_significance(fit_gam(f, y));
  REQUIRE(sig.factor);
  CHECK(sig.factor->p_value < 1e-6);
  REQUIRE(sig.factor->effects.size() == 2);
  CHECK(sig.factor->effects[1] == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("rgam selection") {
  auto folds = [](int significant, int total) {
    std::vector<std::map<std::string, double>> v(static_cast<std::size_t>(total));
    for (int f = 0; f < total; ++f) v[f] = {{"a", f < significant ? 0.01 : 0.5}, {"b", 0.9}};
    return v;
  };
  CHECK(rgam_select(folds(6, 10)) == std::vector<std::string>{"a"});
  try {
    rgam_select(folds(5, 10));
    FAIL("expected EmptySelection");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_selection);
  }
  CHECK_THROWS_AS(rgam_select(folds(0, 10)), Error);
  CHECK_THROWS_AS(rgam_select(folds(1, 1)), Error);

  // level is strict and a missing name counts as not significant
  std::vector<std::map<std::string, double>> v{{{"a", 0.1}, {"b", 0.05}}, {{"a", 0.09}, {"b", 0.05}}, {{"a", 0.01}}};
  CHECK(rgam_select(v) == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(rgam_select(v, 0.1, 2.0 / 3.0), Error);
  CHECK_THROWS_AS(rgam_select(v, 0.05), Error);
}
