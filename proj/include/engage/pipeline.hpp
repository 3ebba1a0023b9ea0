#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "engage/config.hpp"
#include "engage/evaluation.hpp"

namespace engage::pipeline {

/// A loaded config plus the run's output directory. Every artifact written
/// under `out` carries the config hash and seed.
struct Context {
  PipelineConfig cfg;
  std::filesystem::path out;
  std::string hash;

  static Context make(PipelineConfig cfg, std::optional<std::filesystem::path> out = std::nullopt,
                      std::optional<std::uint64_t> seed = std::nullopt);
};

/// Stages. Each reads the previous stage's files from `ctx.out` and throws
/// Errc::missing_artifact when one is absent.
void run_synth(const Context& ctx);
void run_ingest(const Context& ctx);
void run_sessionize(const Context& ctx);
void run_score(const Context& ctx);
void run_features(const Context& ctx);
void run_cv(const Context& ctx);
void run_refit(const Context& ctx);
/// Bundles the reports; throws Errc::artifact_mismatch when any artifact was
/// produced under a different config hash or seed.
void run_report(const Context& ctx);
/// ingest through report; generates the synthetic data first when the config
/// has a synth section and a cohort log is missing.
void run_all(const Context& ctx);

/// Modelling data from features.csv and metric.csv.
Dataset load_dataset(const Context& ctx);

nlohmann::json cv_report_to_json(const CvReport& r);
CvReport cv_report_from_json(const nlohmann::json& j);

}  // namespace engage::pipeline
