// Serial reference vs OpenMP kernel, same inputs. Thread count follows
// OMP_NUM_THREADS.
#include <random>

#include <benchmark/benchmark.h>

#include "engage/features.hpp"
#include "engage/models/forest.hpp"
#include "engage/models/importance.hpp"
#include "engage/sessionizer.hpp"
#include "engage/synth.hpp"

namespace {

struct LogFixture {
  std::vector<engage::CohortConfig> cohorts;
  std::vector<engage::StudentStream> streams;
  engage::ActivityUniverse universe;

  LogFixture() {
    auto cfg = engage::synth::SynthConfig::defaults();
    for (auto& c : cfg.cohorts) c.n_students = 150;
    cfg.seed = 7;
    const auto out = engage::synth::generate(cfg);
    const engage::RuleSet rules(engage::synth::default_rules(), cfg.chapters);
    std::vector<engage::ClassifiedRecord> all;
    for (std::size_t c = 0; c < cfg.cohorts.size(); ++c) {
      engage::CohortConfig cc{cfg.cohorts[c].label, cfg.cohorts[c].delivery, cfg.cohorts[c].term_start,
                              cfg.week_lo, cfg.week_hi, cfg.cohorts[c].video_count};
      cohorts.push_back(cc);
      std::unordered_set<std::string> eligible(out.eligible[c].begin(), out.eligible[c].end());
      auto kept = engage::filter_cohort(out.log, cc, eligible);
      auto cl = engage::classify_all(kept, rules, cc, static_cast<int>(c));
      all.insert(all.end(), cl.begin(), cl.end());
    }
    streams = engage::group_by_student(std::move(all));
    universe = engage::ActivityUniverse::from_streams(streams, cfg.chapters);
  }
};

const LogFixture& logs() {
  static const LogFixture f;
  return f;
}

struct ModelFixture {
  engage::ModelFrame frame;
  Eigen::VectorXd y;

  ModelFixture() {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z;
    const int n = 600, p = 40;
    frame.X.resize(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) frame.X(i, j) = z(rng);
    for (int j = 0; j < p; ++j) frame.names.push_back("x" + std::to_string(j));
    y = frame.X.col(0) * 2 + frame.X.col(1).array().square().matrix();
    for (int i = 0; i < n; ++i) y(i) += z(rng);
  }
};

const ModelFixture& data() {
  static const ModelFixture f;
  return f;
}

void BM_Sessionize(benchmark::State& st) {
  const auto& f = logs();
  for (auto _ : st) benchmark::DoNotOptimize(engage::sessionize(f.streams, 30, f.universe));
}
void BM_SessionizeSerial(benchmark::State& st) {
  const auto& f = logs();
  for (auto _ : st) benchmark::DoNotOptimize(engage::sessionize_serial(f.streams, 30, f.universe));
}
void BM_WeeklyCounts(benchmark::State& st) {
  const auto& f = logs();
  for (auto _ : st) benchmark::DoNotOptimize(engage::weekly_counts(f.streams, f.cohorts, 5, 35));
}
void BM_WeeklyCountsSerial(benchmark::State& st) {
  const auto& f = logs();
  for (auto _ : st) benchmark::DoNotOptimize(engage::weekly_counts_serial(f.streams, f.cohorts, 5, 35));
}

engage::models::ForestOptions forest_opts() {
  engage::models::ForestOptions o;
  o.n_trees = 50;
  o.mtry = 13;
  o.min_leaf = 5;
  o.seed = 3;
  return o;
}

void BM_Forest(benchmark::State& st) {
  const auto& d = data();
  for (auto _ : st) benchmark::DoNotOptimize(engage::models::fit_random_forest(d.frame, d.y, forest_opts()));
}
void BM_ForestSerial(benchmark::State& st) {
  const auto& d = data();
  for (auto _ : st)
    benchmark::DoNotOptimize(engage::models::fit_random_forest_serial(d.frame, d.y, forest_opts()));
}

const engage::models::TrainedModel& ridge() {
  static const auto m = [] {
    engage::models::ModelSpec s{engage::models::Family::ridge, {{"lambda", 0.1}}, 0};
    return engage::models::fit_model(s, data().frame, data().y);
  }();
  return m;
}

void BM_Importance(benchmark::State& st) {
  const auto& d = data();
  for (auto _ : st)
    benchmark::DoNotOptimize(engage::models::permutation_importance(ridge(), d.frame, d.y, 5, 1));
}
void BM_ImportanceSerial(benchmark::State& st) {
  const auto& d = data();
  for (auto _ : st)
    benchmark::DoNotOptimize(engage::models::permutation_importance_serial(ridge(), d.frame, d.y, 5, 1));
}

}  // namespace

BENCHMARK(BM_Sessionize)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SessionizeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WeeklyCounts)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WeeklyCountsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forest)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForestSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Importance)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ImportanceSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
