#include "engage/models/gam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <boost/math/distributions/fisher_f.hpp>

#include "engage/error.hpp"

namespace engage::models {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shrinkage of coordinate i at smoothing parameter lambda.
inline double shrink(double lambda, double d) {
  if (d == 0.0) return 1.0;
  if (lambda == kInf) return 0.0;
  return 1.0 / (1.0 + lambda * d);
}

void setup_term(SmoothTerm& t, const Eigen::VectorXd& x, int basis_size, Eigen::MatrixXd& E) {
  t.basis = TermBasis::build(x, basis_size);
  Eigen::MatrixXd B = t.basis.design(x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gram(B.transpose() * B);
  const Eigen::VectorXd& ev = gram.eigenvalues();
  const double top = ev.size() > 0 ? ev.maxCoeff() : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (top > 0 && ev(i) > 1e-9 * top) keep.push_back(i);
  if (keep.empty()) {
    // a column constant on this sample carries no smooth
    t.W = Eigen::MatrixXd::Zero(B.cols(), 0);
    t.d = Eigen::VectorXd(0);
    E = Eigen::MatrixXd(x.size(), 0);
    t.w = t.z = Eigen::VectorXd(0);
    t.lambda = 0;
    return;
  }
  Eigen::MatrixXd T(B.cols(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    T.col(static_cast<Eigen::Index>(c)) = gram.eigenvectors().col(keep[c]) / std::sqrt(ev(keep[c]));
  Eigen::MatrixXd P = T.transpose() * t.basis.penalty() * T;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> pen(0.5 * (P + P.transpose()));
  t.W = T * pen.eigenvectors();
  t.d = pen.eigenvalues();
  const double dmax = t.d.size() > 0 ? t.d.maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < t.d.size(); ++i)
    if (t.d(i) <= 1e-10 * dmax || t.d(i) < 0) t.d(i) = 0.0;
  E = B * t.W;
  t.w = Eigen::VectorXd::Zero(t.W.cols());
  t.z = t.w;
  t.lambda = 0;
}

double gcv_lambda(const SmoothTerm& t, const Eigen::VectorXd& z, double r_norm2, double n) {
  double dmin = kInf;
  for (Eigen::Index i = 0; i < t.d.size(); ++i)
    if (t.d(i) > 0) dmin = std::min(dmin, t.d(i));
  if (dmin == kInf) return 0.0;
  const double z_norm2 = z.squaredNorm();
  auto score = [&](double lambda) {
    double rss = r_norm2 - z_norm2, tr = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double s = shrink(lambda, t.d(i));
      tr += s;
      const double resid = z(i) * (1.0 - s);
      rss += resid * resid;
    }
    const double denom = n - tr;
    return n * std::max(rss, 0.0) / (denom * denom);
  };
  double best_lambda = kInf;
  double best = score(kInf);
  for (int g = 64; g >= 0; --g) {
    const double lambda = std::pow(10.0, -8.0 + 0.25 * g) / dmin;
    const double s = score(lambda);
    if (s < best) {
      best = s;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace

Eigen::VectorXd GamModel::predict(const ModelFrame& f) const {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(f.rows(), intercept);
  for (const auto& t : terms) {
    if (static_cast<Eigen::Index>(t.column) >= f.cols())
      throw Error(Errc::schema_mismatch, "frame lacks GAM column " + t.name);
    out += t.basis.design(f.X.col(static_cast<Eigen::Index>(t.column))) * t.coef;
  }
  if (coding.size() > 0) {
    Eigen::MatrixXd D = coding.dummies(f.group);
    D.rowwise() -= group_center;
    out += D * gamma;
  }
  return out;
}

GamModel fit_gam(const ModelFrame& frame, const Eigen::VectorXd& y, const GamOptions& opt,
                 const std::vector<std::size_t>* columns) {
  const Eigen::Index n = frame.rows();
  if (n < 3 || y.size() != n) throw Error(Errc::too_few_rows, "GAM needs n >= 3 matching rows");
  if (opt.basis_size < 4)
    throw Error(Errc::invalid_hyperparameter, "GAM basis size must be at least 4");

  std::vector<std::size_t> cols;
  if (columns) {
    cols = *columns;
  } else {
    for (Eigen::Index j = 0; j < frame.cols(); ++j) cols.push_back(static_cast<std::size_t>(j));
  }

  GamModel m;
  m.intercept = y.mean();
  std::vector<Eigen::MatrixXd> E(cols.size());
  std::vector<Eigen::VectorXd> f(cols.size(), Eigen::VectorXd::Zero(n));
  m.terms.resize(cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    m.terms[j].column = cols[j];
    m.terms[j].name = frame.names.at(cols[j]);
    setup_term(m.terms[j], frame.X.col(static_cast<Eigen::Index>(cols[j])), opt.basis_size, E[j]);
    if (opt.fixed_lambda) m.terms[j].lambda = *opt.fixed_lambda;
  }

  Eigen::MatrixXd D;
  Eigen::LDLT<Eigen::MatrixXd> group_solver;
  Eigen::VectorXd fg = Eigen::VectorXd::Zero(n);
  if (frame.has_group()) {
    m.coding = GroupCoding::from(frame.group);
    if (m.coding.size() > 0) {
      D = m.coding.dummies(frame.group);
      m.group_center = D.colwise().mean();
      D.rowwise() -= m.group_center;
      m.group_gram = D.transpose() * D;
      group_solver.compute(m.group_gram);
      m.gamma = Eigen::VectorXd::Zero(D.cols());
    }
  }

  Eigen::VectorXd resid = y.array() - m.intercept;
  const double nd = static_cast<double>(n);
  double last_change = kInf;
  double last_objective = kInf;
  int growth = 0;
  for (int it = 0; it < opt.max_iter; ++it) {
    const bool select = !opt.fixed_lambda && it < opt.smoothing_sweeps;
    const Eigen::VectorXd resid_before = resid;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      auto& t = m.terms[j];
      Eigen::VectorXd r = resid + f[j];
      t.z = E[j].transpose() * r;
      if (select) t.lambda = gcv_lambda(t, t.z, r.squaredNorm(), nd);
      for (Eigen::Index i = 0; i < t.z.size(); ++i) t.w(i) = t.z(i) * shrink(t.lambda, t.d(i));
      Eigen::VectorXd next = E[j] * t.w;
      resid = r - next;
      f[j] = std::move(next);
    }
    if (D.cols() > 0) {
      Eigen::VectorXd r = resid + fg;
      m.gamma = group_solver.solve(D.transpose() * r);
      Eigen::VectorXd next = D * m.gamma;
      resid = r - next;
      fg = std::move(next);
    }
    // fitted = y - resid
    const double change = (resid - resid_before).cwiseAbs().maxCoeff();
    m.iterations = it + 1;
    if (change < opt.tol) {
      m.converged = true;
      break;
    }
    // Once the smoothers are fixed each sweep is a block coordinate descent
    // step on the penalized residual sum of squares, which cannot increase
    // unless the iteration has broken down. Growth in the change alone is a
    // normal transient there, so a sweep counts as growing only when both
    // rise.
    double objective = resid.squaredNorm();
    for (const auto& t : m.terms)
      for (Eigen::Index i = 0; i < t.w.size(); ++i)
        if (t.w(i) != 0.0 && t.d(i) > 0) objective += t.lambda * t.d(i) * t.w(i) * t.w(i);
    if (!std::isfinite(objective))
      throw Error(Errc::backfit_divergence, "backfitting produced non-finite values");
    const bool worse = change > last_change && objective > last_objective * (1 + 1e-12);
    growth = !select && worse ? growth + 1 : 0;
    if (growth >= 5)
      throw Error(Errc::backfit_divergence,
                  "backfitting change grew for 5 consecutive sweeps (last " +
                      std::to_string(change) + ")");
    last_change = change;
    last_objective = objective;
  }

  // Final projections use the converged partial residuals.
  for (std::size_t j = 0; j < cols.size(); ++j) {
    auto& t = m.terms[j];
    t.z = E[j].transpose() * (resid + f[j]);
    t.coef = t.W * t.w;
    t.edf = 0;
    for (Eigen::Index i = 0; i < t.d.size(); ++i) t.edf += shrink(t.lambda, t.d(i));
  }

  m.fitted = Eigen::VectorXd::Constant(n, m.intercept);
  for (std::size_t j = 0; j < cols.size(); ++j) m.fitted += E[j] * m.terms[j].w;
  if (D.cols() > 0) m.fitted += D * m.gamma;

  double edf_total = 1.0 + static_cast<double>(D.cols());
  for (const auto& t : m.terms) edf_total += t.edf;
  m.residual_df = std::max(1.0, nd - edf_total);
  m.sigma2 = (y - m.fitted).squaredNorm() / m.residual_df;
  return m;
}

GamSignificance gam_term_significance(const GamModel& model, int grid_points) {
  GamSignificance out;
  const double sigma2 = std::max(model.sigma2, std::numeric_limits<double>::min());
  const double df2 = model.residual_df;
  for (const auto& t : model.terms) {
    SmoothTermReport rep;
    rep.name = t.name;
    rep.edf = t.edf;
    const auto dim = static_cast<int>(t.z.size());
    rep.rank = std::clamp(static_cast<int>(std::lround(t.edf)), 1, std::max(dim, 1));
    double stat = 0;
    // z_i^2 / (1 + lambda d_i): the shrunken coefficient against its
    // posterior variance
    for (int i = 0; i < std::min(rep.rank, dim); ++i) {
      const double shrink = t.d(i) <= 0 ? 1.0 : 1.0 + t.lambda * t.d(i);
      if (std::isfinite(shrink)) stat += t.z(i) * t.z(i) / shrink;
    }
    rep.statistic = stat / sigma2;
    if (dim > 0) {
      boost::math::fisher_f dist(rep.rank, df2);
      rep.p_value = boost::math::cdf(boost::math::complement(dist, rep.statistic / rep.rank));
    }

    const double lo = t.basis.lo(), hi = t.basis.hi();
    for (int g = 0; g < grid_points; ++g) {
      const double x = grid_points > 1 ? lo + (hi - lo) * g / (grid_points - 1) : lo;
      Eigen::RowVectorXd e = t.basis.row(x) * t.W;
      double var = 0;
      for (Eigen::Index i = 0; i < e.size(); ++i) var += e(i) * e(i) * shrink(t.lambda, t.d(i));
      const double fit = e.dot(t.w);
      const double se = std::sqrt(sigma2 * var);
      rep.grid.push_back({x, fit, fit - 2 * se, fit + 2 * se});
    }
    out.smooth.push_back(std::move(rep));
  }
  if (model.coding.size() > 0) {
    FactorTermReport f;
    f.levels = model.coding.levels;
    f.effects.assign(model.gamma.data(), model.gamma.data() + model.gamma.size());
    f.df1 = static_cast<int>(model.coding.size());
    f.df2 = df2;
    f.statistic = model.gamma.dot(model.group_gram * model.gamma) / (f.df1 * sigma2);
    boost::math::fisher_f dist(f.df1, df2);
    f.p_value = boost::math::cdf(boost::math::complement(dist, f.statistic));
    out.factor = f;
  }
  return out;
}

std::vector<std::string> rgam_select(const std::vector<std::map<std::string, double>>& fold_p_values,
                                     double level, double fold_fraction) {
  if (fold_p_values.size() < 2)
    throw Error(Errc::too_few_rows, "rGAM selection needs at least two folds");
  std::set<std::string> names;
  for (const auto& fold : fold_p_values)
    for (const auto& [name, p] : fold) names.insert(name);
  const double needed = fold_fraction * static_cast<double>(fold_p_values.size());
  std::vector<std::string> kept;
  for (const auto& name : names) {
    int hits = 0;
    for (const auto& fold : fold_p_values) {
      auto it = fold.find(name);
      if (it != fold.end() && it->second < level) ++hits;
    }
    if (static_cast<double>(hits) > needed) kept.push_back(name);
  }
  if (kept.empty())
    throw Error(Errc::empty_selection, "no predictor is significant in a majority of folds");
  return kept;
}

}  // namespace engage::models
