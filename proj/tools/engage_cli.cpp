// Command-line driver: one subcommand per pipeline stage.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <omp.h>

#include "CLI11.hpp"

#include "engage/error.hpp"
#include "engage/pipeline.hpp"

namespace {

using engage::pipeline::Context;

int exit_code(const engage::Error& e) { return static_cast<int>(e.category()); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Student engagement pipeline over Moodle activity logs"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int threads = 0;
  app.add_option("--config", config_path, "Pipeline config (JSON)")->required();
  app.add_option("--seed", seed, "Overrides cv.seed");
  app.add_option("--out", out, "Output directory (overrides the config)");
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

  struct Stage {
    const char* name;
    const char* help;
    void (*run)(const Context&);
  };
  const Stage stages[] = {
      {"synth", "Generate synthetic cohorts from the config's synth section", engage::pipeline::run_synth},
      {"ingest", "Parse and classify logs -> records.csv, students.csv", engage::pipeline::run_ingest},
      {"sessionize", "Study sessions -> sessions.csv, universe.csv, threshold.csv", engage::pipeline::run_sessionize},
      {"score", "Engagement metric -> metric.csv, releases.csv", engage::pipeline::run_score},
      {"features", "Weekly predictors -> features.csv, feature_mask.csv", engage::pipeline::run_features},
      {"cv", "Nested cross-validation -> cv_report.json/.txt, segments.csv, oof_predictions.csv",
       engage::pipeline::run_cv},
      {"refit", "Full-data refit -> importance, significance, smooth grids, delivery effects",
       engage::pipeline::run_refit},
      {"report", "Check artifact provenance and bundle report.txt, report.json", engage::pipeline::run_report},
      {"all", "ingest through report", engage::pipeline::run_all},
  };
  for (const auto& s : stages) app.add_subcommand(s.name, s.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(engage::ErrorCategory::config);
  }

  try {
    if (threads > 0) omp_set_num_threads(threads);
    auto cfg = engage::PipelineConfig::load(config_path);
    const Context ctx = Context::make(std::move(cfg), out ? std::optional<std::filesystem::path>(*out) : std::nullopt, seed);
    for (const auto& s : stages)
      if (app.got_subcommand(s.name)) s.run(ctx);
    return 0;
  } catch (const engage::Error& e) {
    std::cerr << "error [" << engage::errc_name(e.code()) << "]: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [io_error]: " << e.what() << "\n";
    return static_cast<int>(engage::ErrorCategory::data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
