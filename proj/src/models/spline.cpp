#include "engage/models/spline.hpp"

#include <algorithm>
#include <cmath>

namespace engage::models {

BSplineBasis::BSplineBasis(double lo, double hi, std::vector<double> interior) : lo_(lo), hi_(hi) {
  knots_.assign(4, lo);
  knots_.insert(knots_.end(), interior.begin(), interior.end());
  knots_.insert(knots_.end(), 4, hi);
}

int BSplineBasis::span(double x) const {
  const int k = size();
  if (x >= knots_[static_cast<std::size_t>(k)]) return k - 1;
  if (x <= knots_[3]) return 3;
  auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  return static_cast<int>(it - knots_.begin()) - 1;
}

Eigen::RowVectorXd BSplineBasis::eval(double x) const {
  return derivative(x, 0);
}

Eigen::RowVectorXd BSplineBasis::derivative(double x, int order) const {
  // Basis functions and derivatives on one knot span (Piegl & Tiller A2.3).
  constexpr int p = 3;
  const int i = span(x);
  const auto U = [&](int j) { return knots_[static_cast<std::size_t>(j)]; };
  double ndu[p + 1][p + 1];
  double left[p + 1], right[p + 1];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - U(i + 1 - j);
    right[j] = U(i + j) - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }

  double ders[p + 1];
  if (order == 0) {
    for (int j = 0; j <= p; ++j) ders[j] = ndu[j][p];
  } else {
    double a[2][p + 1];
    for (int r = 0; r <= p; ++r) {
      int s1 = 0, s2 = 1;
      a[0][0] = 1.0;
      double d = 0.0;
      for (int k = 1; k <= order; ++k) {
        d = 0.0;
        const int rk = r - k, pk = p - k;
        if (r >= k) {
          a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
          d = a[s2][0] * ndu[rk][pk];
        }
        const int j1 = rk >= -1 ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
        for (int j = j1; j <= j2; ++j) {
          a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
          d += a[s2][j] * ndu[rk + j][pk];
        }
        if (r <= pk) {
          a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
          d += a[s2][k] * ndu[r][pk];
        }
        std::swap(s1, s2);
      }
      ders[r] = d;
    }
    double factor = p;
    for (int k = 1; k < order; ++k) factor *= (p - k);
    for (double& v : ders) v *= factor;
  }

  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(size());
  for (int j = 0; j <= p; ++j) out(i - p + j) = ders[j];
  return out;
}

Eigen::MatrixXd BSplineBasis::curvature_penalty() const {
  const int k = size();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(k, k);
  // Second derivatives are linear on each knot interval: two-point
  // Gauss-Legendre integrates their products exactly.
  const double g = 1.0 / std::sqrt(3.0);
  for (std::size_t s = 3; s + 4 < knots_.size(); ++s) {
    const double a = knots_[s], b = knots_[s + 1];
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (double u : {-g, g}) {
      Eigen::RowVectorXd d2 = derivative(mid + half * u, 2);
      S.noalias() += half * d2.transpose() * d2;
    }
  }
  return S;
}

TermBasis TermBasis::build(const Eigen::VectorXd& x, int basis_size) {
  TermBasis b;
  b.mean_ = x.mean();
  b.lo_ = x.minCoeff();
  b.hi_ = x.maxCoeff();
  std::vector<double> uniq(x.data(), x.data() + x.size());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  const int k = std::min<int>(basis_size, static_cast<int>(uniq.size()));
  if (k < 4) {
    b.linear_ = true;
    return b;
  }
  b.linear_ = false;
  // Interior knots at evenly spaced quantiles of the distinct values.
  std::vector<double> interior;
  const int m = k - 4;
  for (int j = 1; j <= m; ++j) {
    double pos = static_cast<double>(j) * static_cast<double>(uniq.size() - 1) / (m + 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    double frac = pos - static_cast<double>(lo);
    double v = lo + 1 < uniq.size() ? uniq[lo] * (1 - frac) + uniq[lo + 1] * frac : uniq[lo];
    interior.push_back(v);
  }
  b.spline_ = BSplineBasis(b.lo_, b.hi_, interior);

  Eigen::MatrixXd B(x.size(), k);
  for (Eigen::Index i = 0; i < x.size(); ++i) B.row(i) = b.spline_.eval(x(i));
  Eigen::VectorXd c = B.colwise().mean().transpose();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
  b.Z_ = Q.rightCols(k - 1);
  return b;
}

Eigen::RowVectorXd TermBasis::row(double x) const {
  if (linear_) {
    Eigen::RowVectorXd r(1);
    r(0) = x - mean_;
    return r;
  }
  Eigen::RowVectorXd raw;
  if (x < lo_) {
    raw = spline_.eval(lo_) + (x - lo_) * spline_.derivative(lo_, 1);
  } else if (x > hi_) {
    raw = spline_.eval(hi_) + (x - hi_) * spline_.derivative(hi_, 1);
  } else {
    raw = spline_.eval(x);
  }
  return raw * Z_;
}

Eigen::MatrixXd TermBasis::design(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out(x.size(), dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) out.row(i) = row(x(i));
  return out;
}

Eigen::MatrixXd TermBasis::penalty() const {
  if (linear_) return Eigen::MatrixXd::Zero(1, 1);
  return Z_.transpose() * spline_.curvature_penalty() * Z_;
}

}  // namespace engage::models
