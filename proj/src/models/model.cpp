#include "engage/models/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "engage/csv.hpp"
#include "engage/error.hpp"

namespace engage::models {
namespace {

constexpr std::pair<Family, std::string_view> kFamilies[] = {
    {Family::pcr, "pcr"},
    {Family::ridge, "ridge"},
    {Family::lasso, "lasso"},
    {Family::elastic_net, "elastic_net"},
    {Family::random_forest, "random_forest"},
    {Family::gam, "gam"},
    {Family::rgam, "rgam"},
};

std::set<std::string> allowed_keys(Family f) {
  switch (f) {
    case Family::pcr: return {"n_components"};
    case Family::ridge:
    case Family::lasso: return {"lambda"};
    case Family::elastic_net: return {"lambda", "alpha"};
    case Family::random_forest: return {"n_trees", "mtry", "mtry_rule", "min_leaf"};
    case Family::gam:
    case Family::rgam: return {"basis_size", "lambda"};
  }
  return {};
}

[[noreturn]] void bad(const ModelSpec& s, const std::string& msg) {
  throw Error(Errc::invalid_hyperparameter, std::string(to_string(s.family)) + ": " + msg);
}

bool is_integer(double v) { return std::isfinite(v) && std::floor(v) == v; }

double elastic_alpha(const ModelSpec& s) {
  switch (s.family) {
    case Family::ridge: return 0.0;
    case Family::lasso: return 1.0;
    default: return s.get("alpha");
  }
}

bool is_elastic(Family f) {
  return f == Family::ridge || f == Family::lasso || f == Family::elastic_net;
}

GamOptions gam_options(const ModelSpec& s, const FitOptions& opt) {
  GamOptions g = opt.gam;
  if (auto b = s.find("basis_size")) g.basis_size = static_cast<int>(*b);
  if (auto l = s.find("lambda")) g.fixed_lambda = *l;
  return g;
}

}  // namespace

std::string_view to_string(Family f) noexcept {
  for (auto [k, v] : kFamilies)
    if (k == f) return v;
  return "?";
}

std::optional<Family> family_from_string(std::string_view s) noexcept {
  for (auto [k, v] : kFamilies)
    if (v == s) return k;
  return std::nullopt;
}

double ModelSpec::get(const std::string& key) const {
  auto it = hyper.find(key);
  if (it == hyper.end()) bad(*this, "missing hyperparameter " + key);
  return it->second;
}

std::optional<double> ModelSpec::find(const std::string& key) const {
  auto it = hyper.find(key);
  if (it == hyper.end()) return std::nullopt;
  return it->second;
}

void ModelSpec::validate(Eigen::Index p, bool with_group) const {
  const auto keys = allowed_keys(family);
  for (const auto& [k, v] : hyper) {
    if (!keys.contains(k)) bad(*this, "unknown hyperparameter " + k);
    if (!std::isfinite(v) && !(k == "lambda" && (family == Family::gam || family == Family::rgam) && v > 0))
      bad(*this, k + " must be finite");
  }
  switch (family) {
    case Family::pcr: {
      const double m = get("n_components");
      if (!is_integer(m) || m < 1 || m > static_cast<double>(p))
        bad(*this, "n_components must be an integer in [1, p]");
      break;
    }
    case Family::ridge:
    case Family::lasso:
    case Family::elastic_net:
      if (!(get("lambda") >= 0)) bad(*this, "lambda must be >= 0");
      if (family == Family::elastic_net) {
        const double a = get("alpha");
        if (!(a >= 0 && a <= 1)) bad(*this, "alpha must lie in [0, 1]");
      }
      break;
    case Family::random_forest: {
      const double t = get("n_trees");
      if (!is_integer(t) || t < 1) bad(*this, "n_trees must be an integer >= 1");
      const double leaf = get("min_leaf");
      if (!is_integer(leaf) || leaf < 1) bad(*this, "min_leaf must be an integer >= 1");
      const bool has_mtry = hyper.contains("mtry"), has_rule = hyper.contains("mtry_rule");
      if (has_mtry == has_rule) bad(*this, "give exactly one of mtry, mtry_rule");
      if (has_mtry) {
        const double m = get("mtry");
        const double features = static_cast<double>(p + (with_group ? 1 : 0));
        if (!is_integer(m) || m < 1 || m > features) bad(*this, "mtry must be an integer in [1, p]");
      } else {
        const double r = get("mtry_rule");
        if (r != 1 && r != 2 && r != 3) bad(*this, "mtry_rule must be 1 (p/3), 2 (sqrt p) or 3 (p/2)");
      }
      break;
    }
    case Family::gam:
    case Family::rgam: {
      const double b = find("basis_size").value_or(10);
      if (!is_integer(b) || b < 4) bad(*this, "basis_size must be an integer >= 4");
      if (auto l = find("lambda"); l && !(*l >= 0)) bad(*this, "lambda must be >= 0");
      break;
    }
  }
}

std::string ModelSpec::label() const {
  std::string out(to_string(family));
  const char* sep = "(";
  for (const auto& [k, v] : hyper) {
    out += sep;
    if (k == "mtry_rule") {
      out += "mtry=";
      out += v == 1 ? "p/3" : v == 2 ? "sqrt(p)" : "p/2";
    } else {
      out += k + "=" + csv::fmt(v);
    }
    sep = ", ";
  }
  if (!hyper.empty()) out += ")";
  return out;
}

int resolve_mtry(const ModelSpec& spec, Eigen::Index p, bool with_group) {
  const int features = static_cast<int>(p) + (with_group ? 1 : 0);
  if (auto m = spec.find("mtry")) return static_cast<int>(*m);
  const double pd = static_cast<double>(p);
  double m = 0;
  switch (static_cast<int>(spec.get("mtry_rule"))) {
    case 1: m = std::floor(pd / 3.0); break;
    case 2: m = std::floor(std::sqrt(pd)); break;
    default: m = std::floor(pd / 2.0); break;
  }
  return std::clamp(static_cast<int>(m), 1, std::max(features, 1));
}

std::size_t ModelGrid::size() const {
  std::size_t n = 1;
  for (const auto& [k, v] : axes) n *= v.size();
  return n;
}

std::vector<ModelSpec> ModelGrid::expand(std::uint64_t seed) const {
  std::vector<ModelSpec> out{ModelSpec{family, {}, seed}};
  for (const auto& [key, values] : axes) {
    std::vector<ModelSpec> next;
    for (const auto& s : out)
      for (double v : values) {
        ModelSpec c = s;
        c.hyper[key] = v;
        next.push_back(std::move(c));
      }
    out = std::move(next);
  }
  return out;
}

ModelGrid ModelGrid::defaults(Family f) {
  // lambda log-spaced over [1e-4, 10], 20 points
  std::vector<double> lambdas;
  for (int i = 0; i < 20; ++i) lambdas.push_back(std::pow(10.0, -4.0 + 5.0 * i / 19.0));
  ModelGrid g{f, {}};
  switch (f) {
    case Family::pcr: {
      std::vector<double> m;
      for (int i = 1; i <= 40; ++i) m.push_back(i);
      g.axes = {{"n_components", m}};
      break;
    }
    case Family::ridge:
    case Family::lasso: g.axes = {{"lambda", lambdas}}; break;
    case Family::elastic_net:
      g.axes = {{"alpha", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}}, {"lambda", lambdas}};
      break;
    case Family::random_forest:
      g.axes = {{"n_trees", {500}}, {"mtry_rule", {1, 2, 3}}, {"min_leaf", {1, 5, 10}}};
      break;
    case Family::gam:
    case Family::rgam: g.axes = {{"basis_size", {10}}}; break;
  }
  return g;
}

Eigen::VectorXd TrainedModel::predict(const ModelFrame& f) const {
  if (f.names != schema)
    throw Error(Errc::schema_mismatch, std::string(to_string(spec.family)) +
                                           ": frame columns differ from the training schema");
  if (f.has_group() != uses_group)
    throw Error(Errc::schema_mismatch, "delivery factor presence differs from training");
  return std::visit([&](const auto& m) -> Eigen::VectorXd { return m.predict(f); }, params);
}

double TrainedModel::intercept() const {
  if (auto* l = std::get_if<LinearModel>(&params)) return l->intercept;
  if (auto* p = std::get_if<PcrModel>(&params)) return p->intercept;
  if (auto* g = std::get_if<GamModel>(&params)) return g->intercept;
  return 0.0;
}

std::vector<std::pair<int, double>> TrainedModel::delivery_effects() const {
  const GroupCoding* coding = nullptr;
  const Eigen::VectorXd* gamma = nullptr;
  if (auto* l = std::get_if<LinearModel>(&params)) coding = &l->coding, gamma = &l->gamma;
  if (auto* p = std::get_if<PcrModel>(&params)) coding = &p->coding, gamma = &p->gamma;
  if (auto* g = std::get_if<GamModel>(&params)) coding = &g->coding, gamma = &g->gamma;
  std::vector<std::pair<int, double>> out;
  if (!coding) return out;
  for (std::size_t i = 0; i < coding->size(); ++i)
    out.emplace_back(coding->levels[i], (*gamma)(static_cast<Eigen::Index>(i)));
  return out;
}

TrainedModel fit_model(const ModelSpec& spec, const ModelFrame& frame, const Eigen::VectorXd& y,
                       const FitOptions& opt, const std::vector<std::string>* rgam_terms) {
  spec.validate(frame.cols(), frame.has_group());
  TrainedModel out;
  out.spec = spec;
  out.schema = frame.names;
  out.uses_group = frame.has_group();
  switch (spec.family) {
    case Family::pcr:
      out.params = fit_pcr(frame, y, static_cast<Eigen::Index>(spec.get("n_components")));
      break;
    case Family::ridge:
    case Family::lasso:
    case Family::elastic_net:
      out.params = fit_elastic_net(frame, y, spec.get("lambda"), elastic_alpha(spec), opt.elastic);
      break;
    case Family::random_forest: {
      ForestOptions fo;
      fo.n_trees = static_cast<int>(spec.get("n_trees"));
      fo.min_leaf = static_cast<int>(spec.get("min_leaf"));
      fo.mtry = resolve_mtry(spec, frame.cols(), frame.has_group());
      fo.seed = spec.seed;
      out.params = fit_random_forest(frame, y, fo);
      break;
    }
    case Family::gam:
      out.params = fit_gam(frame, y, gam_options(spec, opt));
      break;
    case Family::rgam: {
      if (!rgam_terms) throw Error(Errc::config_error, "rgam fit needs a retained term list");
      std::vector<std::size_t> cols;
      for (Eigen::Index j = 0; j < frame.cols(); ++j)
        if (std::find(rgam_terms->begin(), rgam_terms->end(), frame.names[static_cast<std::size_t>(j)]) !=
            rgam_terms->end())
          cols.push_back(static_cast<std::size_t>(j));
      out.params = fit_gam(frame, y, gam_options(spec, opt), &cols);
      break;
    }
  }
  return out;
}

std::vector<std::optional<TrainedModel>> fit_grid(const std::vector<ModelSpec>& specs,
                                                  const ModelFrame& frame,
                                                  const Eigen::VectorXd& y, const FitOptions& opt,
                                                  const std::vector<std::string>* rgam_terms) {
  std::vector<std::optional<TrainedModel>> out(specs.size());
  if (specs.empty()) return out;
  auto shell = [&](const ModelSpec& s) {
    TrainedModel m;
    m.spec = s;
    m.schema = frame.names;
    m.uses_group = frame.has_group();
    return m;
  };
  auto valid = [&](const ModelSpec& s) {
    try {
      s.validate(frame.cols(), frame.has_group());
      return true;
    } catch (const Error&) {
      return false;
    }
  };
  const Family fam = specs.front().family;
  if (is_elastic(fam)) {
    ElasticNetProblem problem(frame, y);
    // Group by alpha; within a group solve from the largest lambda down.
    std::map<double, std::vector<std::size_t>> by_alpha;
    for (std::size_t i = 0; i < specs.size(); ++i)
      if (valid(specs[i])) by_alpha[elastic_alpha(specs[i])].push_back(i);
    for (auto& [alpha, idx] : by_alpha) {
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
        return specs[a].get("lambda") > specs[b].get("lambda");
      });
      std::optional<LinearModel> warm;
      for (auto i : idx) {
        auto m = shell(specs[i]);
        LinearModel lm = problem.solve(specs[i].get("lambda"), alpha, opt.elastic, warm ? &*warm : nullptr);
        warm = lm;
        m.params = std::move(lm);
        out[i] = std::move(m);
      }
    }
    return out;
  }
  if (fam == Family::pcr) {
    PcrProblem problem(frame, y);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (!valid(specs[i])) continue;
      const auto m = static_cast<Eigen::Index>(specs[i].get("n_components"));
      if (m > problem.rank()) continue;
      auto t = shell(specs[i]);
      t.params = problem.fit(m);
      out[i] = std::move(t);
    }
    return out;
  }
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (valid(specs[i])) out[i] = fit_model(specs[i], frame, y, opt, rgam_terms);
  return out;
}

}  // namespace engage::models
