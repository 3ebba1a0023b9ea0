#include "engage/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "engage/error.hpp"

namespace engage {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw Error(Errc::config_error, (where.empty() ? "/" : where) + ": " + msg);
}

// Object view that records which keys were read, so leftovers can be
// reported as unknown.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  const json& at(const std::string& key) {
    if (!has(key)) fail(where(key), "required key missing");
    return j_.at(key);
  }
  std::string where(const std::string& key) const { return path_ + "/" + key; }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return value<T>(j_.at(key), where(key));
  }
  template <class T>
  T need(const std::string& key) {
    return value<T>(at(key), where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) fail(where(it.key()), "unknown key");
  }

  template <class T>
  static T value(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(where, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(where, "expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(where, "expected a number");
      return v.get<T>();
    } else {
      if (!v.is_string()) fail(where, "expected a string");
      return v.get<std::string>();
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Days date_at(Obj& o, const std::string& key) {
  auto d = parse_date(o.need<std::string>(key));
  if (!d) fail(o.where(key), "expected a YYYY-MM-DD date");
  return *d;
}

DeliveryMethod delivery_at(Obj& o, const std::string& key) {
  auto d = delivery_from_string(o.need<std::string>(key));
  if (!d) fail(o.where(key), "expected online, hybrid or in_person");
  return *d;
}

std::vector<double> axis_values(const json& v, const std::string& where, const std::string& key) {
  std::vector<double> out;
  if (v.is_object()) {
    Obj o(v, where);
    const json& ls = o.at("logspace");
    o.finish();
    if (!ls.is_array() || ls.size() != 3) fail(where + "/logspace", "expected [lo_exp, hi_exp, count]");
    const double lo = Obj::value<double>(ls[0], where + "/logspace/0");
    const double hi = Obj::value<double>(ls[1], where + "/logspace/1");
    const int n = Obj::value<int>(ls[2], where + "/logspace/2");
    if (n < 1) fail(where + "/logspace/2", "count must be >= 1");
    for (int i = 0; i < n; ++i) out.push_back(std::pow(10.0, n == 1 ? lo : lo + (hi - lo) * i / (n - 1)));
    return out;
  }
  if (!v.is_array() || v.empty()) fail(where, "expected a non-empty list or {\"logspace\": [...]}");
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string w = where + "/" + std::to_string(i);
    if (key == "mtry_rule" && v[i].is_string()) {
      const auto s = v[i].get<std::string>();
      if (s == "p/3") out.push_back(1);
      else if (s == "sqrt") out.push_back(2);
      else if (s == "p/2") out.push_back(3);
      else fail(w, "expected p/3, sqrt or p/2");
    } else if (key == "lambda" && v[i].is_string() && v[i].get<std::string>() == "inf") {
      out.push_back(std::numeric_limits<double>::infinity());
    } else {
      out.push_back(Obj::value<double>(v[i], w));
    }
  }
  return out;
}

models::ModelGrid parse_grid(models::Family f, const json& v, const std::string& where) {
  auto grid = models::ModelGrid::defaults(f);
  Obj o(v, where);
  std::set<std::string> allowed;
  for (const auto& [k, vals] : grid.axes) allowed.insert(k);
  if (f == models::Family::random_forest) allowed.insert("mtry");
  if (f == models::Family::gam || f == models::Family::rgam) allowed.insert("lambda");
  for (auto it = v.begin(); it != v.end(); ++it) {
    const std::string key = it.key();
    if (!allowed.contains(key)) fail(o.where(key), "unknown hyperparameter");
    auto vals = axis_values(o.at(key), o.where(key), key);
    if (key == "mtry") {
      std::erase_if(grid.axes, [](const auto& a) { return a.first == "mtry_rule"; });
    }
    bool replaced = false;
    for (auto& [k, existing] : grid.axes)
      if (k == key) existing = vals, replaced = true;
    if (!replaced) grid.axes.emplace_back(key, vals);
  }
  o.finish();
  return grid;
}

synth::ResponseCurve curve_at(Obj& o, const std::string& key, synth::ResponseCurve fallback) {
  if (!o.has(key)) return fallback;
  const json& v = o.at(key);
  if (!v.is_array() || v.size() != 2) fail(o.where(key), "expected [floor, slope]");
  return {Obj::value<double>(v[0], o.where(key) + "/0"), Obj::value<double>(v[1], o.where(key) + "/1")};
}

synth::SynthConfig parse_synth(const json& v, const std::string& where) {
  auto cfg = synth::SynthConfig::defaults();
  Obj o(v, where);
  if (o.has("cohorts")) {
    const json& arr = o.at("cohorts");
    if (!arr.is_array() || arr.empty()) fail(o.where("cohorts"), "expected a non-empty list");
    cfg.cohorts.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Obj c(arr[i], o.where("cohorts") + "/" + std::to_string(i));
      synth::SynthCohort sc;
      sc.label = c.need<std::string>("label");
      sc.delivery = delivery_at(c, "delivery");
      sc.term_start = date_at(c, "term_start");
      sc.video_count = c.get<int>("video_count", sc.video_count);
      sc.n_students = c.get<int>("n_students", sc.n_students);
      c.finish();
      cfg.cohorts.push_back(sc);
    }
  }
  cfg.chapters = o.get<int>("chapters", cfg.chapters);
  cfg.week_lo = o.get<int>("week_lo", cfg.week_lo);
  cfg.week_hi = o.get<int>("week_hi", cfg.week_hi);
  if (o.has("levels")) {
    const json& l = o.at("levels");
    if (!l.is_array()) fail(o.where("levels"), "expected a list");
    std::vector<double> levels;
    for (std::size_t i = 0; i < l.size(); ++i)
      levels.push_back(Obj::value<double>(l[i], o.where("levels") + "/" + std::to_string(i)));
    cfg.levels = levels;
  }
  cfg.access = curve_at(o, "access", cfg.access);
  cfg.sessions = curve_at(o, "sessions", cfg.sessions);
  cfg.lag = curve_at(o, "lag", cfg.lag);
  cfg.breadth = curve_at(o, "breadth", cfg.breadth);
  cfg.floor_clicks = curve_at(o, "floor_clicks", cfg.floor_clicks);
  cfg.followup_days = o.get<int>("followup_days", cfg.followup_days);
  cfg.ineligible_fraction = o.get<double>("ineligible_fraction", cfg.ineligible_fraction);
  cfg.seed = o.get<std::uint64_t>("seed", cfg.seed);
  o.has("output");  // path, handled by the caller
  o.finish();
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(where, e.what());
  }
  return cfg;
}

}  // namespace

PipelineConfig PipelineConfig::parse(const json& j, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  Obj root(j, "");

  c.output = resolve(base_dir, root.get<std::string>("output", "out"));

  if (root.has("synth")) {
    c.synth = parse_synth(root.at("synth"), "/synth");
    c.synth_output = resolve(base_dir, root.at("synth").value("output", (c.output / "synth").string()));
  }

  const json& cohorts = root.at("cohorts");
  if (!cohorts.is_array() || cohorts.empty()) fail("/cohorts", "expected a non-empty list");
  for (std::size_t i = 0; i < cohorts.size(); ++i) {
    const std::string w = "/cohorts/" + std::to_string(i);
    Obj o(cohorts[i], w);
    CohortInput in;
    in.cohort.label = o.need<std::string>("label");
    in.cohort.delivery = delivery_at(o, "delivery");
    in.cohort.term_start = date_at(o, "term_start");
    in.cohort.week_lo = o.get<int>("week_lo", 5);
    in.cohort.week_hi = o.get<int>("week_hi", 35);
    in.cohort.video_count = o.get<int>("video_count", 1);
    in.log = resolve(base_dir, o.need<std::string>("log"));
    in.eligible = resolve(base_dir, o.need<std::string>("eligible"));
    o.finish();
    try {
      in.cohort.validate();
    } catch (const Error& e) {
      fail(w, e.what());
    }
    if (i > 0 && (in.cohort.week_lo != c.cohorts[0].cohort.week_lo ||
                  in.cohort.week_hi != c.cohorts[0].cohort.week_hi))
      fail(w, "all cohorts must share one week range");
    for (const auto& prev : c.cohorts)
      if (prev.cohort.label == in.cohort.label) fail(w + "/label", "duplicate cohort label");
    c.cohorts.push_back(std::move(in));
  }

  if (root.has("log_schema")) {
    Obj o(root.at("log_schema"), "/log_schema");
    c.schema.time = o.get<std::string>("time", c.schema.time);
    c.schema.user = o.get<std::string>("user", c.schema.user);
    c.schema.event_context = o.get<std::string>("event_context", c.schema.event_context);
    c.schema.component = o.get<std::string>("component", c.schema.component);
    c.schema.event_name = o.get<std::string>("event_name", c.schema.event_name);
    c.schema.description = o.get<std::string>("description", c.schema.description);
    const auto delim = o.get<std::string>("delimiter", ",");
    if (delim.size() != 1) fail("/log_schema/delimiter", "expected a single character");
    c.schema.delimiter = delim[0];
    o.finish();
  }

  {
    Obj o(root.at("classifier"), "/classifier");
    c.chapters = o.need<int>("chapters");
    if (c.chapters < 1) fail("/classifier/chapters", "must be >= 1");
    const json& rules = o.at("rules");
    if (!rules.is_array()) fail("/classifier/rules", "expected a list");
    for (std::size_t i = 0; i < rules.size(); ++i) {
      const std::string w = "/classifier/rules/" + std::to_string(i);
      Obj r(rules[i], w);
      ClassifierRule rule;
      auto field = log_field_from_string(r.need<std::string>("field"));
      if (!field) fail(w + "/field", "expected event_context, component, event_name or description");
      rule.field = *field;
      rule.pattern = r.need<std::string>("pattern");
      auto kind = resource_kind_from_string(r.need<std::string>("kind"));
      if (!kind) fail(w + "/kind", "unknown resource kind");
      rule.kind = *kind;
      rule.chapter_group = r.get<int>("chapter_group", 0);
      r.finish();
      c.rules.push_back(rule);
    }
    o.finish();
    try {
      RuleSet check(c.rules, c.chapters);
    } catch (const Error& e) {
      fail("/classifier/rules", e.what());
    }
  }

  if (root.has("chapter_weights")) {
    const json& w = root.at("chapter_weights");
    if (!w.is_array()) fail("/chapter_weights", "expected a list");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double v = Obj::value<double>(w[i], "/chapter_weights/" + std::to_string(i));
      if (!(v >= 0)) fail("/chapter_weights/" + std::to_string(i), "weights must be >= 0");
      c.chapter_weights.push_back(v);
    }
    if (c.chapter_weights.size() != static_cast<std::size_t>(c.chapters))
      fail("/chapter_weights", "expected one weight per chapter");
  } else {
    c.chapter_weights.assign(static_cast<std::size_t>(c.chapters), 1.0);
  }

  if (root.has("threshold")) {
    Obj o(root.at("threshold"), "/threshold");
    if (o.has("override")) {
      c.threshold_override = o.need<int>("override");
      if (*c.threshold_override < 0) fail("/threshold/override", "must be >= 0");
    }
    c.threshold.cap_minutes = o.get<int>("cap_minutes", c.threshold.cap_minutes);
    c.threshold.rounding_minutes = o.get<int>("rounding_minutes", c.threshold.rounding_minutes);
    c.threshold.percentile = o.get<double>("percentile", c.threshold.percentile);
    o.finish();
    if (c.threshold.cap_minutes < 1 || c.threshold.rounding_minutes < 1 ||
        !(c.threshold.percentile > 0 && c.threshold.percentile <= 1))
      fail("/threshold", "needs cap >= 1, rounding >= 1 and percentile in (0, 1]");
  }

  c.sparsity = root.get<double>("sparsity", c.sparsity);
  if (!(c.sparsity >= 0 && c.sparsity <= 1)) fail("/sparsity", "must lie in [0, 1]");
  c.proportional_video = root.get<bool>("proportional_video", c.proportional_video);
  c.with_delivery = root.get<bool>("with_delivery", c.with_delivery);

  if (root.has("boxcox")) {
    Obj o(root.at("boxcox"), "/boxcox");
    c.boxcox.lambda_lo = o.get<double>("lambda_lo", c.boxcox.lambda_lo);
    c.boxcox.lambda_hi = o.get<double>("lambda_hi", c.boxcox.lambda_hi);
    c.boxcox.lambda_step = o.get<double>("lambda_step", c.boxcox.lambda_step);
    c.boxcox.epsilon = o.get<double>("epsilon", c.boxcox.epsilon);
    o.finish();
    if (!(c.boxcox.lambda_step > 0) || c.boxcox.lambda_hi < c.boxcox.lambda_lo)
      fail("/boxcox", "needs lambda_step > 0 and lambda_lo <= lambda_hi");
    if (!(c.boxcox.epsilon > 0)) fail("/boxcox/epsilon", "must be > 0");
  }

  {
    Obj o(root.at("models"), "/models");
    const json& m = root.at("models");
    for (auto it = m.begin(); it != m.end(); ++it)
      if (!models::family_from_string(it.key())) fail("/models/" + it.key(), "unknown model family");
    for (auto f : {models::Family::pcr, models::Family::ridge, models::Family::lasso,
                   models::Family::elastic_net, models::Family::random_forest, models::Family::gam,
                   models::Family::rgam}) {
      const std::string key(models::to_string(f));
      if (o.has(key)) c.grids.push_back(parse_grid(f, o.at(key), "/models/" + key));
    }
    o.finish();
    if (c.grids.empty()) fail("/models", "name at least one model family");
  }

  if (root.has("cv")) {
    Obj o(root.at("cv"), "/cv");
    c.cv.folds = o.get<int>("folds", c.cv.folds);
    c.cv.inner_folds = o.get<int>("inner_folds", c.cv.folds);
    c.cv.seed = o.get<std::uint64_t>("seed", c.cv.seed);
    c.cv.rgam_level = o.get<double>("rgam_level", c.cv.rgam_level);
    c.cv.rgam_fold_fraction = o.get<double>("rgam_fold_fraction", c.cv.rgam_fold_fraction);
    c.cv.importance_repeats = o.get<int>("importance_repeats", c.cv.importance_repeats);
    c.cv.gam_max_iter = o.get<int>("gam_max_iter", c.cv.gam_max_iter);
    c.cv.smooth_grid_points = o.get<int>("smooth_grid_points", c.cv.smooth_grid_points);
    o.finish();
    if (c.cv.folds < 2 || c.cv.inner_folds < 2) fail("/cv", "folds and inner_folds must be >= 2");
    if (c.cv.importance_repeats < 1) fail("/cv/importance_repeats", "must be >= 1");
    if (c.cv.gam_max_iter < 1) fail("/cv/gam_max_iter", "must be >= 1");
    if (c.cv.smooth_grid_points < 2) fail("/cv/smooth_grid_points", "must be >= 2");
  }
  root.finish();

  c.canonical = j;
  c.canonical.erase("output");
  if (c.canonical.contains("synth")) c.canonical["synth"].erase("output");
  c.canonical["cv"]["seed"] = c.cv.seed;
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::config_error, path.string() + ": " + e.what());
  }
  return parse(j, path.parent_path());
}

void PipelineConfig::set_seed(std::uint64_t seed) {
  cv.seed = seed;
  canonical["cv"]["seed"] = seed;
}

std::string PipelineConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : canonical.dump()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace engage
