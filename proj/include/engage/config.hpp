#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "engage/ingest.hpp"
#include "engage/metric.hpp"
#include "engage/models/model.hpp"
#include "engage/sessionizer.hpp"
#include "engage/synth.hpp"

namespace engage {

struct CohortInput {
  CohortConfig cohort;
  std::filesystem::path log;
  std::filesystem::path eligible;
};

struct CvSettings {
  int folds = 10;
  int inner_folds = 10;
  std::uint64_t seed = 0;
  double rgam_level = 0.1;
  double rgam_fold_fraction = 0.5;
  int importance_repeats = 5;
  int gam_max_iter = 200;
  int smooth_grid_points = 100;
};

struct PipelineConfig {
  std::vector<CohortInput> cohorts;
  LogSchema schema;
  int chapters = 20;
  std::vector<ClassifierRule> rules;
  std::vector<double> chapter_weights;
  std::optional<int> threshold_override;
  ThresholdOptions threshold;
  double sparsity = 0.01;
  bool proportional_video = true;
  bool with_delivery = true;
  BoxCoxOptions boxcox;
  std::vector<models::ModelGrid> grids;
  CvSettings cv;
  std::filesystem::path output = "out";
  std::optional<synth::SynthConfig> synth;
  std::filesystem::path synth_output;

  /// Canonical JSON of the settings that shape results (no output paths).
  nlohmann::json canonical;

  /// Throws Errc::config_error naming the JSON location of the problem.
  /// Relative paths resolve against `base_dir`.
  static PipelineConfig parse(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);

  void set_seed(std::uint64_t seed);
  /// FNV-1a of the canonical JSON, 16 hex digits.
  std::string hash() const;
};

}  // namespace engage
