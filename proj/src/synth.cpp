#include "engage/synth.hpp"

#include <algorithm>
#include <exception>
#include <random>
#include <sstream>

#include "engage/csv.hpp"
#include "engage/error.hpp"
#include "engage/seed.hpp"

namespace engage::synth {
namespace {

struct Activity {
  std::string context, component, event;
};

std::vector<std::vector<Activity>> chapter_activities(const SynthConfig& cfg, int video_count) {
  std::vector<std::vector<Activity>> out(static_cast<std::size_t>(cfg.chapters));
  const int base = video_count / cfg.chapters, extra = video_count % cfg.chapters;
  for (int k = 1; k <= cfg.chapters; ++k) {
    const std::string ch = "Chapter " + std::to_string(k);
    auto& a = out[static_cast<std::size_t>(k - 1)];
    a.push_back({ch + " Lecture Notes", "File", "Course module viewed"});
    const int videos = std::max(1, base + (k <= extra ? 1 : 0));
    for (int j = 1; j <= videos; ++j)
      a.push_back({ch + " Video " + std::to_string(j), "Video", "Course module viewed"});
    a.push_back({ch + " Quiz", "Quiz", "Quiz attempt submitted"});
    a.push_back({ch + " Forum", "Forum", "Discussion viewed"});
    a.push_back({ch + " Exercises", "URL", "Course module viewed"});
  }
  return out;
}

void check_prob(const ResponseCurve& c, const char* name, bool positive) {
  for (double e : {0.0, 1.0}) {
    const double v = c.at(e);
    if (!(v >= 0 && v <= 1) || (positive && v <= 0))
      throw Error(Errc::config_error, std::string("synth curve ") + name + " leaves the probability range");
  }
}

void check_rate(const ResponseCurve& c, const char* name) {
  if (!(c.at(0) >= 0 && c.at(1) >= 0))
    throw Error(Errc::config_error, std::string("synth curve ") + name + " gives a negative rate");
}

class CohortGenerator {
 public:
  CohortGenerator(const SynthConfig& cfg, std::size_t c)
      : cfg_(cfg),
        cohort_(cfg.cohorts[c]),
        rng_(derive_seed(cfg.seed, {c})),
        activities_(chapter_activities(cfg, cohort_.video_count)) {}

  void student(const std::string& user, double e, std::vector<LogRecord>& out) {
    const int end_day = (cfg_.week_hi - cfg_.week_lo + 1) * 7 - 1;
    std::uniform_int_distribution<int> weekday(0, 6);
    std::uniform_int_distribution<int> minute_of_day(8 * 60, 22 * 60);
    std::poisson_distribution<int> floor_clicks(cfg_.floor_clicks.at(e));
    const bool zoom = cohort_.delivery != DeliveryMethod::in_person;
    for (int w = 0; w <= cfg_.week_hi - cfg_.week_lo; ++w) {
      const int clicks = cfg_.floor_clicks.at(e) > 0 ? floor_clicks(rng_) : 0;
      for (int i = 0; i < clicks; ++i) {
        const bool z = zoom && std::bernoulli_distribution(0.3)(rng_);
        emit(out, user, w * 7 + weekday(rng_), minute_of_day(rng_),
             z ? Activity{"Zoom meeting", "Zoom", "Course module viewed"}
               : Activity{"Course: Statistics module", "System", "Course viewed"});
      }
    }

    std::bernoulli_distribution access(cfg_.access.at(e));
    std::geometric_distribution<int> lag(cfg_.lag.at(e));
    std::poisson_distribution<int> repeats(cfg_.sessions.at(e));
    std::bernoulli_distribution include(cfg_.breadth.at(e));
    std::uniform_int_distribution<int> gap(1, 20);
    std::uniform_int_distribution<int> clicks_per(1, 3);
    for (int k = 1; k <= cfg_.chapters; ++k) {
      if (!access(rng_)) continue;
      const int release = (cfg_.release_week(k) - cfg_.week_lo) * 7;
      const int first = std::min(end_day, release + lag(rng_));
      const int n_sessions = 1 + (cfg_.sessions.at(e) > 0 ? repeats(rng_) : 0);
      std::vector<int> days{first};
      std::uniform_int_distribution<int> later(first, std::min(end_day, first + cfg_.followup_days));
      for (int s = 1; s < n_sessions; ++s) days.push_back(later(rng_));
      std::sort(days.begin(), days.end());
      const auto& acts = activities_[static_cast<std::size_t>(k - 1)];
      for (int day : days) {
        std::vector<std::size_t> chosen;
        for (std::size_t a = 0; a < acts.size(); ++a)
          if (include(rng_)) chosen.push_back(a);
        if (chosen.empty())
          chosen.push_back(std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng_));
        std::shuffle(chosen.begin(), chosen.end(), rng_);
        int minute = minute_of_day(rng_);
        for (auto a : chosen) {
          const int n = clicks_per(rng_);
          for (int i = 0; i < n; ++i) {
            emit(out, user, day, minute, acts[a]);
            minute += gap(rng_);
          }
        }
      }
    }
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  void emit(std::vector<LogRecord>& out, const std::string& user, int day, int minute,
            const Activity& a) {
    LogRecord r;
    r.timestamp = Minutes(cohort_.term_start + std::chrono::days{day}) + std::chrono::minutes{minute};
    r.user_id = user;
    r.event_context = a.context;
    r.component = a.component;
    r.event_name = a.event;
    r.description = "The user with id '" + user + "' viewed '" + a.context + "'.";
    out.push_back(std::move(r));
  }

  const SynthConfig& cfg_;
  const SynthCohort& cohort_;
  std::mt19937_64 rng_;
  std::vector<std::vector<Activity>> activities_;
};

}  // namespace

void SynthConfig::validate() const {
  if (cohorts.empty()) throw Error(Errc::config_error, "synth needs at least one cohort");
  if (chapters < 1) throw Error(Errc::config_error, "synth needs chapters >= 1");
  if (week_hi - week_lo < 6) throw Error(Errc::config_error, "synth needs a week range of at least 7 weeks");
  for (const auto& c : cohorts) {
    if (c.n_students < 1) throw Error(Errc::config_error, "synth cohort " + c.label + " has no students");
    if (c.video_count < 1) throw Error(Errc::config_error, "synth cohort " + c.label + " needs videos");
    if (levels && levels->size() != static_cast<std::size_t>(c.n_students))
      throw Error(Errc::config_error, "planted levels must list one value per student");
  }
  if (levels)
    for (double e : *levels)
      if (!(e >= 0 && e <= 1)) throw Error(Errc::config_error, "planted levels must lie in [0, 1]");
  check_prob(access, "access", false);
  check_prob(lag, "lag", true);
  if (lag.at(0) >= 1 || lag.at(1) >= 1) throw Error(Errc::config_error, "synth curve lag must stay below 1");
  check_prob(breadth, "breadth", false);
  check_rate(sessions, "sessions");
  check_rate(floor_clicks, "floor_clicks");
  if (followup_days < 0) throw Error(Errc::config_error, "synth followup_days must be >= 0");
  if (!(ineligible_fraction >= 0 && ineligible_fraction <= 1))
    throw Error(Errc::config_error, "synth ineligible_fraction must lie in [0, 1]");
}

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.cohorts = {
      {"2020", DeliveryMethod::online, *parse_date("2020-10-05"), 45, 300},
      {"2021", DeliveryMethod::hybrid, *parse_date("2021-10-04"), 28, 300},
      {"2022", DeliveryMethod::in_person, *parse_date("2022-10-03"), 28, 300},
  };
  return c;
}

int SynthConfig::release_week(int k) const noexcept {
  // Spread over the range, leaving the last five weeks for revision.
  const int span = week_hi - week_lo - 5;
  return week_lo + (k - 1) * span / chapters;
}

SynthOutput generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t nc = cfg.cohorts.size();
  std::vector<std::vector<LogRecord>> logs(nc);
  std::vector<std::vector<Truth>> truth(nc);
  SynthOutput out;
  out.eligible.resize(nc);
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
  for (std::size_t c = 0; c < nc; ++c) {
    try {
      const auto& cohort = cfg.cohorts[c];
      CohortGenerator gen(cfg, c);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const int extra = static_cast<int>(cfg.ineligible_fraction * cohort.n_students);
      for (int i = 0; i < cohort.n_students + extra; ++i) {
        const bool eligible = i < cohort.n_students;
        std::ostringstream id;
        id << cohort.label << (eligible ? "_s" : "_x") << (eligible ? i + 1 : i - cohort.n_students + 1);
        const double e = eligible && cfg.levels ? (*cfg.levels)[static_cast<std::size_t>(i)] : unit(gen.rng());
        gen.student(id.str(), e, logs[c]);
        truth[c].push_back({id.str(), cohort.label, e, eligible});
        if (eligible) out.eligible[c].push_back(id.str());
      }
      std::stable_sort(logs[c].begin(), logs[c].end(), [](const LogRecord& a, const LogRecord& b) {
        return std::tie(a.timestamp, a.user_id) < std::tie(b.timestamp, b.user_id);
      });
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (std::size_t c = 0; c < nc; ++c) {
    out.log.insert(out.log.end(), logs[c].begin(), logs[c].end());
    out.truth.insert(out.truth.end(), truth[c].begin(), truth[c].end());
  }
  return out;
}

void write_outputs(const SynthOutput& out, const SynthConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream log;
  write_log(log, out.log);
  csv::write_file_atomic(dir / "log.csv", log.str());
  for (std::size_t c = 0; c < cfg.cohorts.size(); ++c) {
    std::string users;
    for (const auto& u : out.eligible[c]) users += u + "\n";
    csv::write_file_atomic(dir / ("eligible_" + cfg.cohorts[c].label + ".txt"), users);
  }
  std::ostringstream truth;
  const std::vector<std::string> header{"user", "cohort", "level", "eligible"};
  csv::write_row(truth, header);
  for (const auto& t : out.truth) {
    const std::vector<std::string> row{t.user_id, t.cohort, csv::fmt(t.level), t.eligible ? "1" : "0"};
    csv::write_row(truth, row);
  }
  csv::write_file_atomic(dir / "truth.csv", truth.str());
}

std::vector<ClassifierRule> default_rules() {
  return {
      {LogField::event_context, R"(^Chapter (\d+) Lecture Notes)", ResourceKind::lecture_note, 1},
      {LogField::event_context, R"(^Chapter (\d+) Video)", ResourceKind::video, 1},
      {LogField::event_context, R"(^Chapter (\d+) Quiz)", ResourceKind::quiz, 1},
      {LogField::event_context, R"(^Chapter (\d+) Forum)", ResourceKind::forum, 1},
      {LogField::event_context, R"(^Chapter (\d+) Exercises)", ResourceKind::url, 1},
      {LogField::component, R"(^Zoom$)", ResourceKind::zoom, 0},
  };
}

}  // namespace engage::synth
