#include "engage/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "engage/csv.hpp"
#include "engage/error.hpp"
#include "engage/features.hpp"
#include "engage/metric.hpp"
#include "engage/sessionizer.hpp"
#include "engage/synth.hpp"

namespace engage::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Row = std::vector<std::string>;

constexpr const char* kArtifacts[] = {
    "records.csv",  "students.csv",     "sessions.csv",     "universe.csv",
    "threshold.csv", "metric.csv",      "releases.csv",     "features.csv",
    "feature_mask.csv", "segments.csv", "oof_predictions.csv", "importance.csv",
    "significance.csv", "smooth_index.csv", "delivery_effects.csv"};
constexpr const char* kJsonArtifacts[] = {"cv_report.json", "refit.json"};

std::uint64_t seed_of(const Context& ctx) { return ctx.cfg.cv.seed; }

class TableWriter {
 public:
  TableWriter(const Context& ctx, const Row& header) {
    out_ << "# config_hash=" << ctx.hash << "\n# seed=" << seed_of(ctx) << "\n";
    csv::write_row(out_, header);
  }
  void row(const Row& r) { csv::write_row(out_, r); }
  void save(const fs::path& path) { csv::write_file_atomic(path, out_.str()); }

 private:
  std::ostringstream out_;
};

csv::Table read_artifact(const Context& ctx, const std::string& name) {
  const fs::path p = ctx.out / name;
  if (!fs::exists(p)) throw Error(Errc::missing_artifact, "missing artifact " + p.string() + "; run the earlier stage first");
  return csv::read_file(p, ',', true);
}

json read_json_artifact(const Context& ctx, const std::string& name) {
  const fs::path p = ctx.out / name;
  if (!fs::exists(p)) throw Error(Errc::missing_artifact, "missing artifact " + p.string() + "; run the earlier stage first");
  std::ifstream in(p);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::io_error, p.string() + ": " + e.what());
  }
}

void save_json(const Context& ctx, const std::string& name, json j) {
  j["config_hash"] = ctx.hash;
  j["seed"] = seed_of(ctx);
  csv::write_file_atomic(ctx.out / name, j.dump(2) + "\n");
}

std::size_t col(const csv::Table& t, std::string_view name, const std::string& file) {
  auto c = t.column(name);
  if (!c) throw Error(Errc::missing_column, file + " lacks column " + std::string(name));
  return *c;
}

std::string escape_key(const std::string& k) {
  std::string out;
  for (char ch : k) {
    if (ch == '\\' || ch == ';') out += '\\';
    out += ch;
  }
  return out;
}

std::vector<std::string> split_keys(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      cur += s[++i];
    } else if (s[i] == ';') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += s[i];
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<CohortConfig> cohort_configs(const Context& ctx) {
  std::vector<CohortConfig> out;
  for (const auto& c : ctx.cfg.cohorts) out.push_back(c.cohort);
  return out;
}

std::vector<ClassifiedRecord> read_records(const Context& ctx) {
  const auto t = read_artifact(ctx, "records.csv");
  const std::string f = "records.csv";
  const auto cu = col(t, "user", f), cc = col(t, "cohort", f), ct = col(t, "time", f),
             cx = col(t, "event_context", f), cm = col(t, "component", f), ce = col(t, "event_name", f),
             cd = col(t, "description", f), cw = col(t, "week", f), cdy = col(t, "day", f),
             ck = col(t, "kind", f), ch = col(t, "chapter", f);
  std::vector<ClassifiedRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    ClassifiedRecord rec;
    auto ts = parse_timestamp(r.at(ct));
    if (!ts) throw BadTimestamp(i + 1, r.at(ct));
    rec.base = {*ts, r.at(cu), r.at(cx), r.at(cm), r.at(ce), r.at(cd)};
    rec.cohort = static_cast<int>(csv::to_int(r.at(cc)));
    rec.week = static_cast<int>(csv::to_int(r.at(cw)));
    rec.day_index = csv::to_int(r.at(cdy));
    auto kind = resource_kind_from_string(r.at(ck));
    if (!kind) throw Error(Errc::io_error, "records.csv row " + std::to_string(i + 1) + ": bad kind");
    rec.kind = *kind;
    if (!r.at(ch).empty()) rec.chapter = static_cast<int>(csv::to_int(r.at(ch)));
    rec.activity_key = activity_key(rec.base);
    out.push_back(std::move(rec));
  }
  return out;
}

struct StudentRow {
  std::string user;
  int cohort = 0;
  DeliveryMethod delivery = DeliveryMethod::online;
};

std::vector<StudentRow> read_students(const Context& ctx) {
  const auto t = read_artifact(ctx, "students.csv");
  const auto cu = col(t, "user", "students.csv"), cc = col(t, "cohort", "students.csv"),
             cd = col(t, "delivery", "students.csv");
  std::vector<StudentRow> out;
  for (const auto& r : t.rows) {
    auto d = delivery_from_string(r.at(cd));
    if (!d) throw Error(Errc::io_error, "students.csv: bad delivery " + r.at(cd));
    out.push_back({r.at(cu), static_cast<int>(csv::to_int(r.at(cc))), *d});
  }
  return out;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

std::string score_col(char s, int k) { return std::string(1, s) + "_" + std::to_string(k); }

json spec_json(const models::ModelSpec& s) {
  json h = json::object();
  for (const auto& [k, v] : s.hyper) h[k] = v;
  return h;
}

models::ModelSpec spec_from_json(models::Family f, const json& h) {
  models::ModelSpec s;
  s.family = f;
  for (auto it = h.begin(); it != h.end(); ++it)
    s.hyper[it.key()] = it.value().is_null() ? std::numeric_limits<double>::infinity() : it.value().get<double>();
  return s;
}

json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"min", s.min}, {"max", s.max}, {"count", s.count}};
}

Summary summary_from_json(const json& j) {
  Summary s;
  s.mean = j.at("mean").get<double>();
  s.sd = j.at("sd").get<double>();
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
  s.count = j.at("count").get<std::size_t>();
  return s;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

std::string cv_text(const CvReport& r) {
  std::ostringstream o;
  o << "Nested " << r.k << "-fold cross-validation, seed " << r.seed << "\n\n";
  o << std::left << std::setw(16) << "model" << std::right << std::setw(10) << "RMSE" << std::setw(10)
    << "sd" << std::setw(10) << "min" << std::setw(10) << "max" << std::setw(10) << "R2" << std::setw(10)
    << "sd" << "\n";
  for (const auto& f : r.families)
    o << std::left << std::setw(16) << models::to_string(f.family) << std::right << std::setw(10)
      << fixed(f.rmse.mean) << std::setw(10) << fixed(f.rmse.sd) << std::setw(10) << fixed(f.rmse.min)
      << std::setw(10) << fixed(f.rmse.max) << std::setw(10) << fixed(f.r2.mean) << std::setw(10)
      << fixed(f.r2.sd) << "\n";
  o << "\nSegment analysis (pooled out-of-fold, mean residual = mean(pred - obs))\n";
  for (const auto& f : r.families) {
    o << models::to_string(f.family) << "\n";
    for (const auto& s : f.segments.segments)
      o << "  " << std::left << std::setw(10) << s.label << std::right << " n=" << std::setw(5) << s.count
        << "  mean residual " << std::setw(9) << fixed(s.mean_residual) << "  RMSE " << fixed(s.rmse) << "\n";
  }
  o << "\nChosen hyperparameters per fold\n";
  for (const auto& f : r.families) {
    o << models::to_string(f.family) << "\n";
    for (const auto& fold : f.folds) {
      o << "  fold " << fold.fold << ": " << fold.chosen.label();
      if (f.family == models::Family::rgam)
        o << "  terms=" << (fold.rgam_empty ? std::string("none") : std::to_string(fold.rgam_terms.size()));
      o << "\n";
    }
  }
  return o.str();
}

// Standardizer column of a frame column name.
std::optional<std::size_t> standardizer_index(const FinalRefit& fr, const std::string& name) {
  for (std::size_t i = 0; i < fr.columns.size(); ++i)
    if (fr.columns[i] == name) return i;
  return std::nullopt;
}

Row split_name(const std::string& name) {
  auto c = parse_column_name(name);
  if (!c) return {name, ""};
  return {std::string(to_string(c->resource)), std::to_string(c->week)};
}

}  // namespace

Context Context::make(PipelineConfig cfg, std::optional<fs::path> out, std::optional<std::uint64_t> seed) {
  Context ctx;
  if (seed) cfg.set_seed(*seed);
  ctx.out = out ? *out : cfg.output;
  ctx.hash = cfg.hash();
  ctx.cfg = std::move(cfg);
  return ctx;
}

void run_synth(const Context& ctx) {
  if (!ctx.cfg.synth) throw Error(Errc::config_error, "config has no synth section");
  synth::write_outputs(synth::generate(*ctx.cfg.synth), *ctx.cfg.synth, ctx.cfg.synth_output);
}

void run_ingest(const Context& ctx) {
  fs::create_directories(ctx.out);
  const RuleSet rules(ctx.cfg.rules, ctx.cfg.chapters);
  std::map<fs::path, std::vector<LogRecord>> logs;
  TableWriter rec(ctx, {"user", "cohort", "time", "event_context", "component", "event_name", "description",
                        "week", "day", "kind", "chapter"});
  TableWriter stu(ctx, {"user", "cohort", "cohort_label", "delivery"});
  for (std::size_t c = 0; c < ctx.cfg.cohorts.size(); ++c) {
    const auto& in = ctx.cfg.cohorts[c];
    if (!logs.contains(in.log)) {
      std::ifstream f(in.log);
      if (!f) throw Error(Errc::missing_artifact, "cannot open log " + in.log.string());
      logs[in.log] = parse_log(f, ctx.cfg.schema);
    }
    std::ifstream ef(in.eligible);
    if (!ef) throw Error(Errc::missing_artifact, "cannot open eligible-user list " + in.eligible.string());
    const auto eligible = read_user_list(ef);
    const auto kept = filter_cohort(logs[in.log], in.cohort, eligible);
    const auto classified = classify_all(kept, rules, in.cohort, static_cast<int>(c));
    for (const auto& r : classified)
      rec.row({r.base.user_id, std::to_string(c), format_timestamp(r.base.timestamp), r.base.event_context,
               r.base.component, r.base.event_name, r.base.description, std::to_string(r.week),
               std::to_string(r.day_index), std::string(to_string(r.kind)),
               r.chapter ? std::to_string(*r.chapter) : ""});
    std::vector<std::string> users(eligible.begin(), eligible.end());
    std::sort(users.begin(), users.end());
    for (const auto& u : users)
      stu.row({u, std::to_string(c), in.cohort.label, std::string(to_string(in.cohort.delivery))});
  }
  rec.save(ctx.out / "records.csv");
  stu.save(ctx.out / "students.csv");
}

void run_sessionize(const Context& ctx) {
  const auto streams = group_by_student(read_records(ctx));
  const auto gaps = consecutive_gaps(streams);
  const int threshold = ctx.cfg.threshold_override ? *ctx.cfg.threshold_override
                                                   : threshold_from_gaps(gaps, ctx.cfg.threshold);
  const auto universe = ActivityUniverse::from_streams(streams, ctx.cfg.chapters);
  const auto sessions = sessionize(streams, threshold, universe);

  TableWriter th(ctx, {"threshold_minutes", "source", "gap_count"});
  th.row({std::to_string(threshold), ctx.cfg.threshold_override ? "override" : "computed",
          std::to_string(gaps.size())});
  th.save(ctx.out / "threshold.csv");

  TableWriter uw(ctx, {"chapter", "index", "key"});
  for (int k = 1; k <= ctx.cfg.chapters; ++k)
    for (std::size_t i = 0; i < universe.size(k); ++i)
      uw.row({std::to_string(k), std::to_string(i), universe.keys(k)[i]});
  uw.save(ctx.out / "universe.csv");

  TableWriter sw(ctx, {"user", "cohort", "chapter", "l", "start", "end", "delta", "activities"});
  for (const auto& s : sessions) {
    std::string keys;
    for (std::size_t i = 0; i < s.activity.size(); ++i)
      if (s.activity[i]) {
        if (!keys.empty()) keys += ';';
        keys += escape_key(universe.keys(s.chapter)[i]);
      }
    sw.row({s.user_id, std::to_string(s.cohort), std::to_string(s.chapter), std::to_string(s.index),
            format_timestamp(s.start_time), format_timestamp(s.end_time), std::to_string(s.start_day), keys});
  }
  sw.save(ctx.out / "sessions.csv");
}

void run_score(const Context& ctx) {
  const auto students = read_students(ctx);
  const int K = ctx.cfg.chapters;

  ActivityUniverse universe(K);
  {
    const auto t = read_artifact(ctx, "universe.csv");
    const auto cch = col(t, "chapter", "universe.csv"), ck = col(t, "key", "universe.csv");
    for (const auto& r : t.rows) universe.add(static_cast<int>(csv::to_int(r.at(cch))), r.at(ck));
    universe.finalize();
  }

  // (cohort, user, chapter) -> sessions
  std::map<std::tuple<int, std::string, int>, std::vector<StudySession>> grouped;
  {
    const auto t = read_artifact(ctx, "sessions.csv");
    const std::string f = "sessions.csv";
    const auto cu = col(t, "user", f), cc = col(t, "cohort", f), cch = col(t, "chapter", f),
               cl = col(t, "l", f), cs = col(t, "start", f), ce = col(t, "end", f), cd = col(t, "delta", f),
               ca = col(t, "activities", f);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& r = t.rows[i];
      StudySession s;
      s.user_id = r.at(cu);
      s.cohort = static_cast<int>(csv::to_int(r.at(cc)));
      s.chapter = static_cast<int>(csv::to_int(r.at(cch)));
      if (s.chapter < 1 || s.chapter > K)
        throw Error(Errc::io_error, "sessions.csv row " + std::to_string(i + 1) + ": chapter out of range");
      s.index = static_cast<int>(csv::to_int(r.at(cl)));
      auto st = parse_timestamp(r.at(cs)), en = parse_timestamp(r.at(ce));
      if (!st) throw BadTimestamp(i + 1, r.at(cs));
      if (!en) throw BadTimestamp(i + 1, r.at(ce));
      s.start_time = *st;
      s.end_time = *en;
      s.start_day = csv::to_int(r.at(cd));
      s.activity.assign(universe.size(s.chapter), 0);
      for (const auto& key : split_keys(r.at(ca))) {
        auto idx = universe.index(s.chapter, key);
        if (!idx) throw Error(Errc::io_error, "sessions.csv row " + std::to_string(i + 1) + ": key not in universe");
        s.activity[*idx] = 1;
      }
      grouped[{s.cohort, s.user_id, s.chapter}].push_back(std::move(s));
    }
  }

  const auto cohorts = cohort_configs(ctx);
  std::vector<std::vector<ChapterAggregate>> by_cohort(cohorts.size());
  std::map<std::tuple<int, std::string, int>, ChapterAggregate> agg;
  for (const auto& [key, sessions] : grouped) {
    const auto& [cohort, user, chapter] = key;
    if (cohort < 0 || static_cast<std::size_t>(cohort) >= cohorts.size())
      throw Error(Errc::io_error, "sessions.csv: cohort index out of range");
    auto a = aggregate(user, chapter, sessions, universe.size(chapter));
    by_cohort[static_cast<std::size_t>(cohort)].push_back(a);
    agg.emplace(key, std::move(a));
  }
  std::vector<std::vector<std::int64_t>> release(cohorts.size());
  TableWriter rel(ctx, {"cohort", "chapter", "release_day", "release_date"});
  for (std::size_t c = 0; c < cohorts.size(); ++c) {
    try {
      release[c] = release_dates(by_cohort[c], K);
    } catch (const Error& e) {
      throw Error(e.code(), "cohort " + cohorts[c].label + ": " + e.what());
    }
    for (int k = 1; k <= K; ++k) {
      const auto d = release[c][static_cast<std::size_t>(k - 1)];
      rel.row({cohorts[c].label, std::to_string(k), std::to_string(d),
               format_date(cohorts[c].term_start + std::chrono::days{d})});
    }
  }
  rel.save(ctx.out / "releases.csv");

  ScoreTable table;
  const auto n = static_cast<Eigen::Index>(students.size());
  table.immediacy.resize(n, K);
  table.diversity.resize(n, K);
  table.frequency.resize(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = students[static_cast<std::size_t>(i)];
    table.users.push_back(s.user);
    table.cohort.push_back(s.cohort);
    const auto& co = cohorts.at(static_cast<std::size_t>(s.cohort));
    for (int k = 1; k <= K; ++k) {
      auto it = agg.find({s.cohort, s.user, k});
      ChapterAggregate empty{s.user, k, 0, std::nullopt, {}};
      const auto raw = raw_scores(it == agg.end() ? empty : it->second,
                                  release[static_cast<std::size_t>(s.cohort)][static_cast<std::size_t>(k - 1)],
                                  co.module_end_day());
      table.immediacy(i, k - 1) = raw.immediacy;
      table.diversity(i, k - 1) = raw.diversity;
      table.frequency(i, k - 1) = raw.frequency;
    }
  }

  const auto rows = iota_rows(students.size());
  const auto scaler = ChapterScaler::fit(table);
  const auto y = engagement_scores(table, rows, scaler, ctx.cfg.chapter_weights);
  const auto bc = boxcox_fit(y, ctx.cfg.boxcox);

  Row header{"user", "cohort"};
  for (char s : {'I', 'D', 'F'})
    for (int k = 1; k <= K; ++k) header.push_back(score_col(s, k));
  for (const char* s : {"sI", "sD", "sF", "IDF"})
    for (int k = 1; k <= K; ++k) header.push_back(std::string(s) + "_" + std::to_string(k));
  header.push_back("y");
  header.push_back("y_boxcox");
  TableWriter mw(ctx, header);
  for (std::size_t i = 0; i < students.size(); ++i) {
    Row r{table.users[i], std::to_string(table.cohort[i])};
    const auto ii = static_cast<Eigen::Index>(i);
    for (const auto* m : {&table.immediacy, &table.diversity, &table.frequency})
      for (int k = 0; k < K; ++k) r.push_back(csv::fmt((*m)(ii, k)));
    for (double v : scaled_row(table, i, scaler)) r.push_back(csv::fmt(v));
    r.push_back(csv::fmt(y[i]));
    r.push_back(csv::fmt(boxcox_apply(y[i], bc)));
    mw.row(r);
  }
  mw.save(ctx.out / "metric.csv");
}

void run_features(const Context& ctx) {
  const auto students = read_students(ctx);
  const auto streams = group_by_student(read_records(ctx));
  const auto cohorts = cohort_configs(ctx);
  const int lo = cohorts.front().week_lo, hi = cohorts.front().week_hi;
  auto counts = weekly_counts(streams, cohorts, lo, hi);

  std::map<std::pair<int, std::string>, std::size_t> row_of;
  for (std::size_t i = 0; i < counts.rows(); ++i) row_of[{counts.cohort[i], counts.users[i]}] = i;
  FeatureMatrix m;
  m.columns = counts.columns;
  m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(students.size()), counts.values.cols());
  for (std::size_t i = 0; i < students.size(); ++i) {
    m.users.push_back(students[i].user);
    m.cohort.push_back(students[i].cohort);
    m.delivery.push_back(students[i].delivery);
    auto it = row_of.find({students[i].cohort, students[i].user});
    if (it != row_of.end())
      m.values.row(static_cast<Eigen::Index>(i)) = counts.values.row(static_cast<Eigen::Index>(it->second));
  }
  if (ctx.cfg.proportional_video) proportional_video(m, cohorts);

  Row header{"user", "cohort", "delivery"};
  for (const auto& c : m.columns) header.push_back(c.name());
  TableWriter fw(ctx, header);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Row r{m.users[i], std::to_string(m.cohort[i]), std::to_string(static_cast<int>(m.delivery[i]))};
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) r.push_back(csv::fmt(m.values(static_cast<Eigen::Index>(i), j)));
    fw.row(r);
  }
  fw.save(ctx.out / "features.csv");

  // Full-data view of the filter; CV refits it inside every training fold.
  const auto rows = iota_rows(m.rows());
  std::vector<bool> keep(m.columns.size(), false);
  try {
    keep = sparsity_filter(m.values, rows, ctx.cfg.sparsity);
  } catch (const Error& e) {
    if (e.code() != Errc::all_columns_dropped) throw;
  }
  TableWriter kw(ctx, {"column", "nonzero_fraction", "kept"});
  for (std::size_t j = 0; j < m.columns.size(); ++j) {
    const auto nz = (m.values.col(static_cast<Eigen::Index>(j)).array() != 0).count();
    kw.row({m.columns[j].name(), csv::fmt(static_cast<double>(nz) / std::max<double>(1, static_cast<double>(m.rows()))),
            keep[j] ? "1" : "0"});
  }
  kw.save(ctx.out / "feature_mask.csv");
}

Dataset load_dataset(const Context& ctx) {
  Dataset d;
  const auto ft = read_artifact(ctx, "features.csv");
  const auto cu = col(ft, "user", "features.csv"), cc = col(ft, "cohort", "features.csv"),
             cd = col(ft, "delivery", "features.csv");
  std::vector<std::size_t> feat_cols;
  for (std::size_t j = 0; j < ft.header.size(); ++j) {
    if (j == cu || j == cc || j == cd) continue;
    auto c = parse_column_name(ft.header[j]);
    if (!c) throw Error(Errc::io_error, "features.csv: unexpected column " + ft.header[j]);
    d.features.columns.push_back(*c);
    feat_cols.push_back(j);
  }
  d.features.values.resize(static_cast<Eigen::Index>(ft.rows.size()), static_cast<Eigen::Index>(feat_cols.size()));
  for (std::size_t i = 0; i < ft.rows.size(); ++i) {
    const auto& r = ft.rows[i];
    d.features.users.push_back(r.at(cu));
    d.features.cohort.push_back(static_cast<int>(csv::to_int(r.at(cc))));
    const auto code = csv::to_int(r.at(cd));
    if (code < 1 || code > 3) throw Error(Errc::io_error, "features.csv: delivery code out of range");
    d.features.delivery.push_back(static_cast<DeliveryMethod>(code));
    for (std::size_t j = 0; j < feat_cols.size(); ++j)
      d.features.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = csv::to_double(r.at(feat_cols[j]));
  }

  const auto mt = read_artifact(ctx, "metric.csv");
  const int K = ctx.cfg.chapters;
  if (mt.rows.size() != ft.rows.size())
    throw Error(Errc::schema_mismatch, "metric.csv and features.csv have different students");
  ScoreTable s;
  const auto n = static_cast<Eigen::Index>(mt.rows.size());
  s.immediacy.resize(n, K);
  s.diversity.resize(n, K);
  s.frequency.resize(n, K);
  const auto mu = col(mt, "user", "metric.csv"), mc = col(mt, "cohort", "metric.csv");
  std::vector<std::array<std::size_t, 3>> idx;
  for (int k = 1; k <= K; ++k)
    idx.push_back({col(mt, score_col('I', k), "metric.csv"), col(mt, score_col('D', k), "metric.csv"),
                   col(mt, score_col('F', k), "metric.csv")});
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = mt.rows[static_cast<std::size_t>(i)];
    if (r.at(mu) != d.features.users[static_cast<std::size_t>(i)] ||
        csv::to_int(r.at(mc)) != d.features.cohort[static_cast<std::size_t>(i)])
      throw Error(Errc::schema_mismatch, "metric.csv and features.csv rows are not aligned");
    s.users.push_back(r.at(mu));
    s.cohort.push_back(static_cast<int>(csv::to_int(r.at(mc))));
    for (int k = 0; k < K; ++k) {
      s.immediacy(i, k) = csv::to_double(r.at(idx[static_cast<std::size_t>(k)][0]));
      s.diversity(i, k) = csv::to_double(r.at(idx[static_cast<std::size_t>(k)][1]));
      s.frequency(i, k) = csv::to_double(r.at(idx[static_cast<std::size_t>(k)][2]));
    }
  }
  d.scores = std::move(s);
  d.weights = ctx.cfg.chapter_weights;
  d.boxcox = ctx.cfg.boxcox;
  d.min_nonzero_fraction = ctx.cfg.sparsity;
  d.with_delivery = ctx.cfg.with_delivery;
  return d;
}

namespace {

CvOptions cv_options(const Context& ctx) {
  CvOptions o;
  o.folds = ctx.cfg.cv.folds;
  o.inner_folds = ctx.cfg.cv.inner_folds;
  o.seed = ctx.cfg.cv.seed;
  o.rgam_level = ctx.cfg.cv.rgam_level;
  o.rgam_fold_fraction = ctx.cfg.cv.rgam_fold_fraction;
  o.fit.gam.max_iter = ctx.cfg.cv.gam_max_iter;
  return o;
}

}  // namespace

json cv_report_to_json(const CvReport& r) {
  json j;
  j["k"] = r.k;
  j["cv_seed"] = r.seed;
  j["fold_of_row"] = r.fold_of_row;
  j["families"] = json::array();
  for (const auto& f : r.families) {
    json fj;
    fj["family"] = models::to_string(f.family);
    fj["folds"] = json::array();
    for (const auto& fold : f.folds) {
      json x{{"fold", fold.fold}, {"n_test", fold.n_test}, {"rmse", fold.rmse},
             {"chosen", spec_json(fold.chosen)}, {"label", fold.chosen.label()}};
      x["r2"] = fold.r2 ? json(*fold.r2) : json(nullptr);
      if (f.family == models::Family::rgam) {
        x["rgam_terms"] = fold.rgam_terms;
        x["rgam_empty"] = fold.rgam_empty;
      }
      fj["folds"].push_back(std::move(x));
    }
    fj["rmse"] = summary_json(f.rmse);
    fj["r2"] = summary_json(f.r2);
    fj["segments"] = json::array();
    for (const auto& s : f.segments.segments)
      fj["segments"].push_back({{"label", s.label}, {"count", s.count}, {"mean_residual", s.mean_residual},
                                {"rmse", s.rmse}, {"y_min", s.y_min}, {"y_max", s.y_max}});
    j["families"].push_back(std::move(fj));
  }
  j["gam_fold_p_values"] = r.gam_fold_p_values;
  return j;
}

CvReport cv_report_from_json(const json& j) {
  try {
    CvReport r;
    r.k = j.at("k").get<int>();
    r.seed = j.at("cv_seed").get<std::uint64_t>();
    r.fold_of_row = j.at("fold_of_row").get<std::vector<int>>();
    for (const auto& fj : j.at("families")) {
      FamilyReport f;
      auto fam = models::family_from_string(fj.at("family").get<std::string>());
      if (!fam) throw Error(Errc::io_error, "cv_report.json: unknown family");
      f.family = *fam;
      for (const auto& x : fj.at("folds")) {
        FoldResult fold;
        fold.fold = x.at("fold").get<int>();
        fold.n_test = x.at("n_test").get<std::size_t>();
        fold.rmse = x.at("rmse").get<double>();
        if (!x.at("r2").is_null()) fold.r2 = x.at("r2").get<double>();
        fold.chosen = spec_from_json(f.family, x.at("chosen"));
        if (x.contains("rgam_terms")) fold.rgam_terms = x.at("rgam_terms").get<std::vector<std::string>>();
        if (x.contains("rgam_empty")) fold.rgam_empty = x.at("rgam_empty").get<bool>();
        f.folds.push_back(std::move(fold));
      }
      f.rmse = summary_from_json(fj.at("rmse"));
      f.r2 = summary_from_json(fj.at("r2"));
      std::size_t i = 0;
      for (const auto& s : fj.at("segments")) {
        if (i >= 5) break;
        auto& seg = f.segments.segments[i++];
        seg.label = s.at("label").get<std::string>();
        seg.count = s.at("count").get<std::size_t>();
        seg.mean_residual = s.at("mean_residual").get<double>();
        seg.rmse = s.at("rmse").get<double>();
        seg.y_min = s.at("y_min").get<double>();
        seg.y_max = s.at("y_max").get<double>();
      }
      r.families.push_back(std::move(f));
    }
    r.gam_fold_p_values = j.at("gam_fold_p_values").get<std::vector<std::map<std::string, double>>>();
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::io_error, std::string("cv_report.json: ") + e.what());
  }
}

void run_cv(const Context& ctx) {
  const Dataset d = load_dataset(ctx);
  const CvReport rep = nested_cv(d, ctx.cfg.grids, cv_options(ctx));

  save_json(ctx, "cv_report.json", cv_report_to_json(rep));
  csv::write_file_atomic(ctx.out / "cv_report.txt",
                         "# config_hash=" + ctx.hash + "\n# seed=" + std::to_string(seed_of(ctx)) + "\n" + cv_text(rep));

  TableWriter sw(ctx, {"model", "segment", "count", "mean_residual", "rmse", "y_min", "y_max"});
  for (const auto& f : rep.families)
    for (const auto& s : f.segments.segments)
      sw.row({std::string(models::to_string(f.family)), s.label, std::to_string(s.count), csv::fmt(s.mean_residual),
              csv::fmt(s.rmse), csv::fmt(s.y_min), csv::fmt(s.y_max)});
  sw.save(ctx.out / "segments.csv");

  Row header{"user", "cohort", "fold", "observed"};
  for (const auto& f : rep.families) header.push_back(std::string(models::to_string(f.family)));
  TableWriter ow(ctx, header);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    Row r{d.features.users[i], std::to_string(d.features.cohort[i]), std::to_string(rep.fold_of_row[i]),
          csv::fmt(rep.families.front().oof_observed[i])};
    for (const auto& f : rep.families) r.push_back(csv::fmt(f.oof_predicted[i]));
    ow.row(r);
  }
  ow.save(ctx.out / "oof_predictions.csv");
}

void run_refit(const Context& ctx) {
  const Dataset d = load_dataset(ctx);
  const json cvj = read_json_artifact(ctx, "cv_report.json");
  if (cvj.value("config_hash", "") != ctx.hash)
    throw Error(Errc::artifact_mismatch, "cv_report.json was produced under a different config or seed");
  const CvReport cv = cv_report_from_json(cvj);

  RefitOptions opt;
  opt.importance_repeats = ctx.cfg.cv.importance_repeats;
  opt.seed = ctx.cfg.cv.seed;
  opt.rgam_level = ctx.cfg.cv.rgam_level;
  opt.rgam_fold_fraction = ctx.cfg.cv.rgam_fold_fraction;
  opt.smooth_grid_points = ctx.cfg.cv.smooth_grid_points;
  opt.fit.gam.max_iter = ctx.cfg.cv.gam_max_iter;
  const FinalRefit fr = final_refit(d, ctx.cfg.grids, cv, opt);
  const auto& stdz = fr.pipeline.standardizer;

  TableWriter iw(ctx, {"resource", "week", "model", "value"});
  TableWriter sw(ctx, {"resource", "week", "model", "p_value", "edf"});
  TableWriter xw(ctx, {"model", "term", "file", "edf", "p_value", "train_mean_std", "plus2sd_std",
                       "train_mean_raw", "plus2sd_raw"});
  TableWriter dw(ctx, {"model", "level", "delivery", "effect_vs_online"});
  fs::create_directories(ctx.out / "smooth");
  json refit;
  refit["columns"] = fr.columns;
  if (fr.pipeline.boxcox)
    refit["boxcox"] = {{"lambda", fr.pipeline.boxcox->lambda}, {"shift", fr.pipeline.boxcox->shift}};
  refit["families"] = json::array();

  for (const auto& f : fr.families) {
    const std::string model(models::to_string(f.model.spec.family));
    for (std::size_t j = 0; j < fr.columns.size(); ++j) {
      Row r = split_name(fr.columns[j]);
      r.push_back(model);
      r.push_back(csv::fmt(f.importance[j]));
      iw.row(r);
    }
    for (const auto& [level, effect] : f.model.delivery_effects())
      dw.row({model, std::to_string(level), std::string(to_string(static_cast<DeliveryMethod>(level))), csv::fmt(effect)});
    if (f.significance) {
      for (const auto& t : f.significance->smooth) {
        Row r = split_name(t.name);
        r.push_back(model);
        r.push_back(csv::fmt(t.p_value));
        r.push_back(csv::fmt(t.edf));
        sw.row(r);

        const auto si = standardizer_index(fr, t.name);
        const double mean = si ? stdz.mean()[*si] : 0.0, sd = si ? stdz.sd()[*si] : 1.0;
        const std::string file = "smooth/" + model + "_" + t.name + ".csv";
        TableWriter gw(ctx, {"x_std", "x_raw", "fit", "lower", "upper"});
        for (const auto& g : t.grid)
          gw.row({csv::fmt(g.x), csv::fmt(mean + sd * g.x), csv::fmt(g.fit), csv::fmt(g.lower), csv::fmt(g.upper)});
        gw.save(ctx.out / file);
        xw.row({model, t.name, file, csv::fmt(t.edf), csv::fmt(t.p_value), "0", "2", csv::fmt(mean),
                csv::fmt(mean + 2 * sd)});
      }
      if (f.significance->factor) {
        Row r{"delivery", "", model, csv::fmt(f.significance->factor->p_value), csv::fmt(f.significance->factor->df1)};
        sw.row(r);
      }
    }
    json fj{{"family", model}, {"label", f.model.spec.label()}, {"hyper", spec_json(f.model.spec)},
            {"intercept", f.model.intercept()}};
    if (f.model.spec.family == models::Family::rgam) {
      fj["rgam_terms"] = f.rgam_terms;
      fj["rgam_empty"] = f.rgam_empty;
    }
    refit["families"].push_back(std::move(fj));
  }
  iw.save(ctx.out / "importance.csv");
  sw.save(ctx.out / "significance.csv");
  xw.save(ctx.out / "smooth_index.csv");
  dw.save(ctx.out / "delivery_effects.csv");
  save_json(ctx, "refit.json", refit);
}

void run_report(const Context& ctx) {
  const std::string want_seed = std::to_string(seed_of(ctx));
  json manifest;
  manifest["artifacts"] = json::array();
  for (const char* name : kArtifacts) {
    const auto t = read_artifact(ctx, name);
    std::string hash, seed;
    for (const auto& c : t.comments) {
      if (c.rfind("config_hash=", 0) == 0) hash = c.substr(12);
      if (c.rfind("seed=", 0) == 0) seed = c.substr(5);
    }
    if (hash != ctx.hash || seed != want_seed)
      throw Error(Errc::artifact_mismatch, std::string(name) + " has config_hash=" + hash + " seed=" + seed +
                                               ", expected " + ctx.hash + " seed=" + want_seed);
    manifest["artifacts"].push_back(name);
  }
  for (const char* name : kJsonArtifacts) {
    const json j = read_json_artifact(ctx, name);
    if (j.value("config_hash", "") != ctx.hash || j.value("seed", std::uint64_t{0}) != seed_of(ctx))
      throw Error(Errc::artifact_mismatch, std::string(name) + " was produced under a different config or seed");
    manifest["artifacts"].push_back(name);
  }
  const CvReport cv = cv_report_from_json(read_json_artifact(ctx, "cv_report.json"));

  std::ostringstream o;
  o << "# config_hash=" << ctx.hash << "\n# seed=" << want_seed << "\n";
  o << cv_text(cv);

  const auto imp = read_artifact(ctx, "importance.csv");
  std::map<std::string, std::vector<std::pair<double, std::string>>> by_model;
  for (const auto& r : imp.rows)
    by_model[r.at(2)].emplace_back(csv::to_double(r.at(3)), r.at(1).empty() ? r.at(0) : r.at(0) + "_w" + r.at(1));
  o << "\nPermutation importance on the full-data refit (top 10, MSE increase)\n";
  for (auto& [model, v] : by_model) {
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    o << model << "\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(10, v.size()); ++i)
      o << "  " << std::left << std::setw(18) << v[i].second << std::right << fixed(v[i].first) << "\n";
  }

  const auto sig = read_artifact(ctx, "significance.csv");
  std::map<std::string, std::array<int, 3>> counts;
  for (const auto& r : sig.rows) {
    if (r.at(0) == "delivery") continue;
    const double p = csv::to_double(r.at(3));
    auto& c = counts[r.at(2)];
    ++c[0];
    if (p < 0.1) ++c[1];
    if (p < 0.05) ++c[2];
  }
  o << "\nSmooth-term significance\n";
  for (const auto& [model, c] : counts)
    o << "  " << model << ": " << c[0] << " terms, " << c[1] << " with p < 0.1, " << c[2] << " with p < 0.05\n";

  const auto eff = read_artifact(ctx, "delivery_effects.csv");
  o << "\nDelivery effects vs online\n";
  for (const auto& r : eff.rows)
    o << "  " << std::left << std::setw(14) << r.at(0) << std::setw(10) << r.at(2) << std::right
      << fixed(csv::to_double(r.at(3))) << "\n";

  csv::write_file_atomic(ctx.out / "report.txt", o.str());
  save_json(ctx, "report.json", manifest);
}

void run_all(const Context& ctx) {
  if (ctx.cfg.synth) {
    bool missing = false;
    for (const auto& c : ctx.cfg.cohorts) missing = missing || !fs::exists(c.log) || !fs::exists(c.eligible);
    if (missing) run_synth(ctx);
  }
  run_ingest(ctx);
  run_sessionize(ctx);
  run_score(ctx);
  run_features(ctx);
  run_cv(ctx);
  run_refit(ctx);
  run_report(ctx);
}

}  // namespace engage::pipeline
