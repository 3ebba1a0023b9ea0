#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace engage {

/// Model input: standardized continuous block plus the delivery-method
/// factor (codes 1..3). `group` is empty when the factor is not used.
struct ModelFrame {
  Eigen::MatrixXd X;
  std::vector<std::string> names;
  std::vector<int> group;

  Eigen::Index rows() const noexcept { return X.rows(); }
  Eigen::Index cols() const noexcept { return X.cols(); }
  bool has_group() const noexcept { return !group.empty(); }

  ModelFrame subset_rows(const std::vector<std::size_t>& rows) const {
    ModelFrame out;
    out.names = names;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
      if (has_group()) out.group.push_back(group[rows[i]]);
    }
    return out;
  }
};

}  // namespace engage
