#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "engage/frame.hpp"
#include "engage/models/forest.hpp"
#include "engage/models/gam.hpp"
#include "engage/models/linear.hpp"
#include "engage/models/pcr.hpp"

namespace engage::models {

enum class Family { pcr, ridge, lasso, elastic_net, random_forest, gam, rgam };

std::string_view to_string(Family f) noexcept;
std::optional<Family> family_from_string(std::string_view s) noexcept;

/// Codes of the forest's `mtry_rule` hyperparameter.
enum class MtryRule { third = 1, sqrt = 2, half = 3 };

/// Hyperparameters per family:
///   pcr: n_components; ridge, lasso: lambda; elastic_net: lambda, alpha;
///   random_forest: n_trees, min_leaf and either mtry or mtry_rule;
///   gam, rgam: basis_size and optionally a fixed smoothing `lambda`.
struct ModelSpec {
  Family family = Family::ridge;
  std::map<std::string, double> hyper;
  std::uint64_t seed = 0;

  double get(const std::string& key) const;
  std::optional<double> find(const std::string& key) const;
  /// Checks keys and ranges against a frame with `p` continuous columns
  /// (plus the delivery factor when `with_group`). Throws
  /// Errc::invalid_hyperparameter.
  void validate(Eigen::Index p, bool with_group) const;
  std::string label() const;

  bool operator==(const ModelSpec&) const = default;
};

/// Forest mtry for `p` continuous columns, clamped to the feature count.
int resolve_mtry(const ModelSpec& spec, Eigen::Index p, bool with_group);

/// Cartesian product of per-hyperparameter value lists, first axis outermost.
struct ModelGrid {
  Family family = Family::ridge;
  std::vector<std::pair<std::string, std::vector<double>>> axes;

  std::vector<ModelSpec> expand(std::uint64_t seed = 0) const;
  std::size_t size() const;
  /// Default grid of a family.
  static ModelGrid defaults(Family f);
};

struct TrainedModel {
  ModelSpec spec;
  std::vector<std::string> schema;
  bool uses_group = false;
  std::variant<LinearModel, PcrModel, ForestModel, GamModel> params;

  /// Throws Errc::schema_mismatch when the frame's columns or delivery
  /// factor differ from training.
  Eigen::VectorXd predict(const ModelFrame& f) const;
  double intercept() const;
  const GamModel* gam() const noexcept { return std::get_if<GamModel>(&params); }
  /// Delivery contrasts vs online as (level code, effect) pairs.
  std::vector<std::pair<int, double>> delivery_effects() const;
};

struct FitOptions {
  ElasticNetOptions elastic;
  GamOptions gam;
};

/// `rgam_terms` names the retained smooth terms of an rGAM; names missing
/// from the frame are skipped, and an empty list leaves intercept plus
/// delivery offsets.
TrainedModel fit_model(const ModelSpec& spec, const ModelFrame& frame, const Eigen::VectorXd& y,
                       const FitOptions& opt = {},
                       const std::vector<std::string>* rgam_terms = nullptr);

/// Fits every spec of one family on the same data, sharing the Gram matrix
/// (elastic family, warm-started along lambda) or the SVD (PCR). Specs that
/// are invalid for this frame, such as more components than its rank, yield
/// nullopt.
std::vector<std::optional<TrainedModel>> fit_grid(const std::vector<ModelSpec>& specs,
                                                  const ModelFrame& frame,
                                                  const Eigen::VectorXd& y,
                                                  const FitOptions& opt = {},
                                                  const std::vector<std::string>* rgam_terms = nullptr);

}  // namespace engage::models
