#include "engage/models/pcr.hpp"

#include "engage/error.hpp"

namespace engage::models {

Eigen::VectorXd PcrModel::predict(const ModelFrame& f) const {
  Eigen::MatrixXd centred = f.X.rowwise() - center;
  Eigen::VectorXd out = ((centred * loadings) * score_coef).array() + intercept;
  if (coding.size() > 0) out += coding.dummies(f.group) * gamma;
  return out;
}

PcrProblem::PcrProblem(const ModelFrame& frame, const Eigen::VectorXd& y) : y_(y) {
  if (frame.rows() < 2 || y.size() != frame.rows())
    throw Error(Errc::too_few_rows, "PCR needs n >= 2 matching rows");
  center_ = frame.X.colwise().mean();
  Eigen::MatrixXd centred = frame.X.rowwise() - center_;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinU | Eigen::ComputeThinV);
  sv_ = svd.singularValues();
  V_ = svd.matrixV();
  const double tol = sv_.size() > 0 ? sv_(0) * 1e-10 * static_cast<double>(std::max(centred.rows(), centred.cols())) : 0.0;
  rank_ = 0;
  while (rank_ < sv_.size() && sv_(rank_) > tol) ++rank_;
  scores_ = centred * V_.leftCols(rank_);
  coding_ = frame.has_group() ? GroupCoding::from(frame.group) : GroupCoding{};
  if (coding_.size() > 0) dummies_ = coding_.dummies(frame.group);
}

PcrModel PcrProblem::fit(Eigen::Index m) const {
  if (m < 1 || m > rank_)
    throw Error(Errc::rank_deficient, "PCR with " + std::to_string(m) +
                                          " components on a rank-" + std::to_string(rank_) +
                                          " design");
  const Eigen::Index n = scores_.rows();
  const auto q = static_cast<Eigen::Index>(coding_.size());
  Eigen::MatrixXd A(n, 1 + m + q);
  A.col(0).setOnes();
  A.middleCols(1, m) = scores_.leftCols(m);
  if (q > 0) A.rightCols(q) = dummies_;
  Eigen::VectorXd coef = A.colPivHouseholderQr().solve(y_);

  PcrModel out;
  out.center = center_;
  out.loadings = V_.leftCols(m);
  out.singular_values = sv_.head(m);
  out.intercept = coef(0);
  out.score_coef = coef.segment(1, m);
  out.gamma = coef.tail(q);
  out.coding = coding_;
  return out;
}

PcrModel fit_pcr(const ModelFrame& frame, const Eigen::VectorXd& y, Eigen::Index n_components) {
  return PcrProblem(frame, y).fit(n_components);
}

}  // namespace engage::models
