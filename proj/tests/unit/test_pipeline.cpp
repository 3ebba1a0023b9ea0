// Drives the engage executable; its path comes from ENGAGE_CLI.
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "doctest.h"
#include "pipeline_fixture.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string cli() {
  const char* p = std::getenv("ENGAGE_CLI");
  REQUIRE_MESSAGE(p, "ENGAGE_CLI is not set");
  return p;
}

int run(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + cli() + "' " + args + " >cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json small_models() {
  return json::parse(R"({
    "ridge": {"lambda": {"logspace": [-2, 1, 4]}},
    "random_forest": {"n_trees": [20], "mtry_rule": ["sqrt"], "min_leaf": [5]},
    "gam": {},
    "rgam": {}
  })");
}

fs::path prepared(const std::string& name, int n = 40) {
  const auto dir = fixtures::temp_dir(name);
  auto j = fixtures::synthetic_config(n, 7, small_models(), 3);
  j["cv"]["importance_repeats"] = 2;
  std::ofstream(dir / "config.json") << j.dump(2);
  return dir;
}

}  // namespace

TEST_CASE("all on synthetic cohorts produces the full artifact set") {
  const auto dir = prepared("cli_all");
  REQUIRE(run(dir, "--config config.json all") == 0);
  const auto out = dir / "out";
  for (const char* f : {"records.csv", "students.csv", "threshold.csv", "universe.csv", "sessions.csv", "releases.csv",
                        "metric.csv", "features.csv", "feature_mask.csv", "cv_report.json", "cv_report.txt",
                        "segments.csv", "oof_predictions.csv", "importance.csv", "significance.csv",
                        "smooth_index.csv", "delivery_effects.csv", "refit.json", "report.txt", "report.json"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  CHECK(fs::exists(out / "synth" / "log.csv"));
  CHECK(!fs::is_empty(out / "smooth"));

  // provenance lines lead every table
  const auto head = slurp(out / "metric.csv");
  CHECK(head.rfind("# config_hash=", 0) == 0);
  CHECK(head.find("# seed=1\n") != std::string::npos);
  const auto report = json::parse(slurp(out / "report.json"));
  CHECK(report.contains("config_hash"));

  // cv twice with the same seed: identical bytes
  const auto first = slurp(out / "cv_report.json");
  const auto oof = slurp(out / "oof_predictions.csv");
  REQUIRE(run(dir, "--config config.json --threads 2 cv") == 0);
  CHECK(slurp(out / "cv_report.json") == first);
  CHECK(slurp(out / "oof_predictions.csv") == oof);

  // a cv under another seed leaves the report refusing to mix artifacts
  REQUIRE(run(dir, "--config config.json --seed 5 cv") == 0);
  CHECK(run(dir, "--config config.json report") == 3);
  CHECK(slurp(dir / "cli.log").find("ArtifactMismatch") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("stage files are the contract between stages") {
  const auto dir = prepared("cli_stages");
  REQUIRE(run(dir, "--config config.json synth") == 0);
  REQUIRE(run(dir, "--config config.json ingest") == 0);
  CHECK(run(dir, "--config config.json score") == 3);
  CHECK(slurp(dir / "cli.log").find("MissingArtifact") != std::string::npos);
  REQUIRE(run(dir, "--config config.json sessionize") == 0);
  CHECK(run(dir, "--config config.json score") == 0);

  // --out writes elsewhere, and there the prerequisites are missing
  CHECK(run(dir, "--config config.json --out other features") == 3);
  fs::remove_all(dir);
}

TEST_CASE("exit codes by error category") {
  const auto dir = fixtures::temp_dir("cli_errors");
  CHECK(run(dir, "--config missing.json ingest") == 2);
  CHECK(run(dir, "ingest") == 2);
  CHECK(run(dir, "--config x.json") == 2);
  CHECK(run(dir, "--config x.json frobnicate") == 2);

  auto j = fixtures::synthetic_config(10, 1, small_models());
  j["cv"]["folds"] = 1;
  std::ofstream(dir / "bad.json") << j.dump();
  CHECK(run(dir, "--config bad.json ingest") == 2);
  CHECK(slurp(dir / "cli.log").find("/cv") != std::string::npos);

  // well-formed config whose logs do not exist
  auto k = fixtures::synthetic_config(10, 1, small_models());
  k.erase("synth");
  std::ofstream(dir / "nolog.json") << k.dump();
  CHECK(run(dir, "--config nolog.json ingest") == 3);
  CHECK(run(dir, "--config nolog.json all") == 3);

  // a log missing one of its columns
  fs::create_directories(dir / "out" / "synth");
  std::ofstream(dir / "out" / "synth" / "log.csv") << "Time,User,Component\n2020-10-05 10:00,a,b\n";
  for (const char* c : {"2020", "2021", "2022"}) std::ofstream(dir / "out" / "synth" / ("eligible_" + std::string(c) + ".txt")) << "a\n";
  CHECK(run(dir, "--config nolog.json ingest") == 3);
  CHECK(slurp(dir / "cli.log").find("MissingColumn") != std::string::npos);
  fs::remove_all(dir);
}
