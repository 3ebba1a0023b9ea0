#include "engage/models/linear.hpp"

#include <algorithm>
#include <cmath>

#include "engage/error.hpp"

namespace engage::models {

GroupCoding GroupCoding::from(const std::vector<int>& group) {
  GroupCoding c;
  for (int level : {2, 3})
    if (std::find(group.begin(), group.end(), level) != group.end()) c.levels.push_back(level);
  return c;
}

Eigen::MatrixXd GroupCoding::dummies(const std::vector<int>& group) const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(group.size()),
                                            static_cast<Eigen::Index>(levels.size()));
  for (std::size_t i = 0; i < group.size(); ++i)
    for (std::size_t l = 0; l < levels.size(); ++l)
      if (group[i] == levels[l]) d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = 1.0;
  return d;
}

Eigen::VectorXd LinearModel::predict(const ModelFrame& f) const {
  Eigen::VectorXd out = (f.X * beta).array() + intercept;
  if (coding.size() > 0) out += coding.dummies(f.group) * gamma;
  return out;
}

namespace {

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

ElasticNetProblem::ElasticNetProblem(const ModelFrame& frame, const Eigen::VectorXd& y) {
  const Eigen::Index n = frame.rows();
  if (n < 2 || y.size() != n) throw Error(Errc::too_few_rows, "elastic net needs n >= 2 matching rows");
  p_ = frame.cols();
  coding_ = frame.has_group() ? GroupCoding::from(frame.group) : GroupCoding{};
  dim_ = p_ + static_cast<Eigen::Index>(coding_.size());

  Eigen::MatrixXd full(n, dim_);
  full.leftCols(p_) = frame.X;
  if (coding_.size() > 0) full.rightCols(dim_ - p_) = coding_.dummies(frame.group);
  mean_ = full.colwise().mean();
  full.rowwise() -= mean_.transpose();
  y_mean_ = y.mean();
  const double inv_n = 1.0 / static_cast<double>(n);
  gram_ = (full.transpose() * full) * inv_n;
  xty_ = (full.transpose() * (y.array() - y_mean_).matrix()) * inv_n;
  penalty_factor_ = Eigen::VectorXd::Zero(dim_);
  penalty_factor_.head(p_).setOnes();
}

double ElasticNetProblem::lambda_max(double alpha) const {
  if (p_ == 0 || alpha <= 0) return 0.0;
  // With unpenalized dummies the null model still fits them; take the
  // gradient at that partial solution.
  Eigen::VectorXd g = xty_;
  const Eigen::Index q = dim_ - p_;
  if (q > 0) {
    Eigen::MatrixXd gdd = gram_.bottomRightCorner(q, q);
    Eigen::VectorXd gamma = gdd.ldlt().solve(xty_.tail(q));
    g.head(p_) -= gram_.topRightCorner(p_, q) * gamma;
  }
  return g.head(p_).cwiseAbs().maxCoeff() / alpha;
}

LinearModel ElasticNetProblem::solve(double lambda, double alpha, const ElasticNetOptions& opt,
                                     const LinearModel* warm) const {
  if (!(lambda >= 0) || !(alpha >= 0 && alpha <= 1))
    throw Error(Errc::invalid_hyperparameter, "elastic net needs lambda >= 0 and alpha in [0, 1]");
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(dim_);
  if (warm && warm->beta.size() == p_ &&
      warm->gamma.size() == static_cast<Eigen::Index>(coding_.size())) {
    beta.head(p_) = warm->beta;
    beta.tail(dim_ - p_) = warm->gamma;
  }
  Eigen::VectorXd q = gram_ * beta;  // gradient bookkeeping: q = G beta

  const double l1 = lambda * alpha;
  const double l2 = lambda * (1.0 - alpha);
  std::vector<char> active(static_cast<std::size_t>(dim_), 0);

  auto update = [&](Eigen::Index j) -> double {
    const double gjj = gram_(j, j);
    if (gjj <= 0) return 0.0;
    const double pf = penalty_factor_(j);
    const double old = beta(j);
    const double z = xty_(j) - q(j) + gjj * old;
    const double next = soft_threshold(z, l1 * pf) / (gjj + l2 * pf);
    const double delta = next - old;
    if (delta != 0.0) {
      beta(j) = next;
      q.noalias() += gram_.col(j) * delta;
    }
    return std::abs(delta);
  };

  long sweeps = 0;
  bool converged = false;
  while (sweeps < opt.max_sweeps) {
    // Full sweep, refreshing the active set.
    double max_delta = 0;
    for (Eigen::Index j = 0; j < dim_; ++j) {
      max_delta = std::max(max_delta, update(j));
      active[static_cast<std::size_t>(j)] = beta(j) != 0.0;
    }
    ++sweeps;
    if (max_delta < opt.tol) {
      converged = true;
      break;
    }
    // Iterate on the active set until it settles.
    while (sweeps < opt.max_sweeps) {
      double d = 0;
      for (Eigen::Index j = 0; j < dim_; ++j)
        if (active[static_cast<std::size_t>(j)]) d = std::max(d, update(j));
      ++sweeps;
      if (d < opt.tol) break;
    }
  }

  LinearModel m;
  m.coding = coding_;
  m.beta = beta.head(p_);
  m.gamma = beta.tail(dim_ - p_);
  m.intercept = y_mean_ - mean_.dot(beta);
  m.converged = converged;
  m.sweeps = sweeps;
  return m;
}

std::vector<LinearModel> ElasticNetProblem::path(const std::vector<double>& lambdas, double alpha,
                                                 const ElasticNetOptions& opt) const {
  std::vector<LinearModel> out;
  out.reserve(lambdas.size());
  for (double lambda : lambdas) out.push_back(solve(lambda, alpha, opt, out.empty() ? nullptr : &out.back()));
  return out;
}

LinearModel fit_elastic_net(const ModelFrame& frame, const Eigen::VectorXd& y, double lambda,
                            double alpha, const ElasticNetOptions& opt) {
  return ElasticNetProblem(frame, y).solve(lambda, alpha, opt);
}

LinearModel fit_ols(const ModelFrame& frame, const Eigen::VectorXd& y) {
  const Eigen::Index n = frame.rows(), p = frame.cols();
  LinearModel m;
  m.coding = frame.has_group() ? GroupCoding::from(frame.group) : GroupCoding{};
  const auto q = static_cast<Eigen::Index>(m.coding.size());
  Eigen::MatrixXd A(n, 1 + p + q);
  A.col(0).setOnes();
  A.middleCols(1, p) = frame.X;
  if (q > 0) A.rightCols(q) = m.coding.dummies(frame.group);
  Eigen::VectorXd coef = A.colPivHouseholderQr().solve(y);
  m.intercept = coef(0);
  m.beta = coef.segment(1, p);
  m.gamma = coef.tail(q);
  return m;
}

}  // namespace engage::models
