// Config builders for end-to-end runs on synthetic cohorts.
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>

#include "json.hpp"

#include "engage/csv.hpp"
#include "engage/pipeline.hpp"

namespace fixtures {

namespace fs = std::filesystem;

inline fs::path temp_dir(const std::string& name) {
  static std::random_device rd;
  fs::path p = fs::temp_directory_path() / ("engage_" + name + "_" + std::to_string(rd()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Three yearly cohorts of synthetic students; logs live under out/synth.
inline nlohmann::json synthetic_config(int n_students, std::uint64_t synth_seed, nlohmann::json models,
                                       int folds = 5, std::uint64_t cv_seed = 1) {
  using nlohmann::json;
  json cohorts = json::array(), synth_cohorts = json::array();
  const std::tuple<const char*, const char*, const char*, int> years[] = {
      {"2020", "online", "2020-10-05", 45}, {"2021", "hybrid", "2021-10-04", 28}, {"2022", "in_person", "2022-10-03", 28}};
  for (const auto& [label, delivery, start, videos] : years) {
    cohorts.push_back({{"label", label},
                       {"delivery", delivery},
                       {"term_start", start},
                       {"video_count", videos},
                       {"log", "out/synth/log.csv"},
                       {"eligible", std::string("out/synth/eligible_") + label + ".txt"}});
    synth_cohorts.push_back({{"label", label},
                             {"delivery", delivery},
                             {"term_start", start},
                             {"video_count", videos},
                             {"n_students", n_students}});
  }
  json rules = json::array();
  for (const char* kind : {"Lecture Notes", "Video", "Quiz", "Forum", "Exercises"}) {
    static const std::map<std::string, std::string> kinds{{"Lecture Notes", "lecture_note"}, {"Video", "video"},
                                                          {"Quiz", "quiz"},                   {"Forum", "forum"},
                                                          {"Exercises", "url"}};
    rules.push_back({{"field", "event_context"},
                     {"pattern", std::string("^Chapter (\\d+) ") + kind},
                     {"kind", kinds.at(kind)},
                     {"chapter_group", 1}});
  }
  rules.push_back({{"field", "component"}, {"pattern", "^Zoom$"}, {"kind", "zoom"}});
  json weights = json::array();
  for (int k = 1; k <= 20; ++k) weights.push_back(k <= 10 ? 0.6 : 0.4);
  return {{"output", "out"},
          {"synth", {{"seed", synth_seed}, {"output", "out/synth"}, {"cohorts", synth_cohorts}}},
          {"cohorts", cohorts},
          {"classifier", {{"chapters", 20}, {"rules", rules}}},
          {"chapter_weights", weights},
          {"models", models},
          {"cv", {{"folds", folds}, {"seed", cv_seed}}}};
}

/// Writes `j` as config.json in `dir` and loads it back.
inline engage::PipelineConfig materialize(const nlohmann::json& j, const fs::path& dir) {
  std::ofstream(dir / "config.json") << j.dump(2);
  return engage::PipelineConfig::load(dir / "config.json");
}

/// Planted level per (cohort label, user) from truth.csv.
inline std::map<std::pair<std::string, std::string>, double> planted_levels(const fs::path& synth_dir) {
  auto t = engage::csv::read_file(synth_dir / "truth.csv");
  std::map<std::pair<std::string, std::string>, double> out;
  for (const auto& r : t.rows) out[{r[1], r[0]}] = engage::csv::to_double(r[2]);
  return out;
}

/// Planted levels and full-data engagement metric y of every scored student.
inline std::pair<std::vector<double>, std::vector<double>> level_and_metric(const engage::pipeline::Context& ctx) {
  const auto levels = planted_levels(ctx.cfg.synth_output);
  const auto m = engage::csv::read_file(ctx.out / "metric.csv", ',', true);
  const auto cu = *m.column("user"), cc = *m.column("cohort"), cy = *m.column("y");
  std::vector<double> e, y;
  for (const auto& r : m.rows) {
    const auto& label = ctx.cfg.cohorts.at(static_cast<std::size_t>(engage::csv::to_int(r[cc]))).cohort.label;
    e.push_back(levels.at({label, r[cu]}));
    y.push_back(engage::csv::to_double(r[cy]));
  }
  return {e, y};
}

}  // namespace fixtures
