#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "engage/ingest.hpp"

namespace engage::synth {

/// floor + slope * e for a planted engagement level e in [0, 1].
struct ResponseCurve {
  double floor = 0;
  double slope = 0;

  double at(double e) const noexcept { return floor + slope * e; }
};

struct SynthCohort {
  std::string label;
  DeliveryMethod delivery = DeliveryMethod::online;
  Days term_start{};
  int video_count = 40;
  int n_students = 300;
};

struct SynthConfig {
  std::vector<SynthCohort> cohorts;
  int chapters = 20;
  int week_lo = 5;
  int week_hi = 35;
  /// Planted levels, one per student of every cohort; drawn U(0, 1) when unset.
  std::optional<std::vector<double>> levels;
  ResponseCurve access{0.0, 1.0};        ///< P(student ever opens a chapter)
  ResponseCurve sessions{0.0, 4.0};      ///< Poisson mean of repeat sessions
  ResponseCurve lag{0.04, 0.6};          ///< geometric success prob of the first-access delay in days
  ResponseCurve breadth{0.15, 0.7};      ///< P(an activity is used in a session)
  ResponseCurve floor_clicks{0.5, 1.5};  ///< Poisson mean of home-page clicks per week
  int followup_days = 28;
  /// Extra non-eligible users per cohort, as a fraction of n_students.
  double ineligible_fraction = 0.05;
  std::uint64_t seed = 0;

  /// Throws Errc::config_error.
  void validate() const;
  /// Three cohorts: online, hybrid and in-person years.
  static SynthConfig defaults();
  /// Release week of chapter k (1-based).
  int release_week(int k) const noexcept;
};

struct Truth {
  std::string user_id;
  std::string cohort;
  double level = 0;
  bool eligible = true;
};

struct SynthOutput {
  std::vector<LogRecord> log;
  std::vector<std::vector<std::string>> eligible;  ///< per cohort
  std::vector<Truth> truth;
};

/// Deterministic in the seed. Cohort c draws from derive_seed(seed, {c});
/// cohorts are generated in parallel.
SynthOutput generate(const SynthConfig& cfg);

/// Writes log.csv, eligible_<label>.txt and truth.csv into `dir`.
void write_outputs(const SynthOutput& out, const SynthConfig& cfg, const std::filesystem::path& dir);

/// Classifier rules matching the generated event contexts.
std::vector<ClassifierRule> default_rules();

}  // namespace engage::synth
