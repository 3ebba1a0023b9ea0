#include "engage/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>

#include "engage/error.hpp"
#include "engage/seed.hpp"
#include "engage/stats.hpp"

namespace engage {
namespace {

using models::Family;
using models::ModelSpec;
using models::TrainedModel;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd take(const Eigen::VectorXd& v, std::span<const std::size_t> rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(rows[i]));
  return out;
}

void split_folds(const std::vector<int>& fold_of_row, int f, std::vector<std::size_t>& train,
                 std::vector<std::size_t>& test) {
  train.clear();
  test.clear();
  for (std::size_t i = 0; i < fold_of_row.size(); ++i) (fold_of_row[i] == f ? test : train).push_back(i);
}

double rmse_of(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

std::map<std::string, double> p_value_map(const models::GamModel& g) {
  std::map<std::string, double> out;
  for (const auto& t : models::gam_term_significance(g, 0).smooth) out[t.name] = t.p_value;
  return out;
}

// Selection for an rGAM from GAM fits on each inner training portion.
struct Selection {
  std::vector<std::string> terms;
  bool empty = false;
};

Selection select_terms(const std::vector<std::map<std::string, double>>& p, const CvOptions& opt) {
  Selection s;
  try {
    s.terms = models::rgam_select(p, opt.rgam_level, opt.rgam_fold_fraction);
  } catch (const Error& e) {
    if (e.code() != Errc::empty_selection) throw;
    s.empty = true;
  }
  return s;
}

struct InnerData {
  std::vector<std::vector<std::size_t>> train, test;
  std::vector<ModelFrame> train_frame, test_frame;
  std::vector<Eigen::VectorXd> train_y, test_y;
};

InnerData make_inner(const ModelFrame& frame, const Eigen::VectorXd& y, int k, std::uint64_t seed) {
  InnerData in;
  const auto folds = make_folds(static_cast<std::size_t>(frame.rows()), k, seed);
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> tr, te;
    split_folds(folds, f, tr, te);
    in.train_frame.push_back(frame.subset_rows(tr));
    in.test_frame.push_back(frame.subset_rows(te));
    in.train_y.push_back(take(y, tr));
    in.test_y.push_back(take(y, te));
    in.train.push_back(std::move(tr));
    in.test.push_back(std::move(te));
  }
  return in;
}

std::size_t argmin_first(const std::vector<double>& score) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < score.size(); ++i)
    if (score[i] < score[best]) best = i;
  if (!(score[best] < kInf))
    throw Error(Errc::invalid_hyperparameter, "no grid point is valid for this training portion");
  return best;
}

}  // namespace

void Dataset::validate() const {
  if (y.has_value() == scores.has_value())
    throw Error(Errc::config_error, "dataset needs exactly one of a direct response or chapter scores");
  if (static_cast<std::size_t>(features.values.rows()) != rows() ||
      static_cast<std::size_t>(features.values.cols()) != features.columns.size())
    throw Error(Errc::config_error, "feature matrix shape disagrees with its labels");
  if (y && static_cast<std::size_t>(y->size()) != rows())
    throw Error(Errc::config_error, "response length differs from the feature rows");
  if (scores) {
    if (scores->rows() != rows())
      throw Error(Errc::config_error, "score table rows differ from the feature rows");
    if (weights.size() != static_cast<std::size_t>(scores->chapters()))
      throw Error(Errc::weight_mismatch, "chapter weights differ from the chapter count");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out = *this;
  auto& f = out.features;
  f.users.clear();
  f.cohort.clear();
  f.delivery.clear();
  f.values.resize(static_cast<Eigen::Index>(rows.size()), features.values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    f.users.push_back(features.users[rows[i]]);
    f.cohort.push_back(features.cohort[rows[i]]);
    f.delivery.push_back(features.delivery[rows[i]]);
    f.values.row(static_cast<Eigen::Index>(i)) = features.values.row(static_cast<Eigen::Index>(rows[i]));
  }
  if (y) out.y = take(*y, rows);
  if (scores) out.scores = scores->subset(rows);
  return out;
}

FoldPipeline FoldPipeline::fit(const Dataset& d, std::span<const std::size_t> train_rows) {
  FoldPipeline p;
  if (d.scores) {
    p.scaler = ChapterScaler::fit(*d.scores, train_rows);
    const auto raw = engagement_scores(*d.scores, train_rows, *p.scaler, d.weights);
    p.boxcox = boxcox_fit(raw, d.boxcox);
  }
  p.mask = sparsity_filter(d.features.values, train_rows, d.min_nonzero_fraction);
  p.standardizer = Standardizer::fit(d.features.values, train_rows, p.mask);
  return p;
}

ModelFrame FoldPipeline::frame(const Dataset& d, std::span<const std::size_t> rows) const {
  return make_frame(d.features, rows, standardizer, d.with_delivery);
}

Eigen::VectorXd FoldPipeline::response(const Dataset& d, std::span<const std::size_t> rows) const {
  if (d.y) return take(*d.y, rows);
  if (!scaler || !boxcox) throw Error(Errc::not_fitted, "pipeline has no fitted response transform");
  const auto raw = engagement_scores(*d.scores, rows, *scaler, d.weights);
  Eigen::VectorXd out(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t i = 0; i < raw.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = boxcox_apply(raw[i], *boxcox);
  return out;
}

Metrics metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.size() < 2)
    throw Error(Errc::too_few_rows, "metrics need two or more paired values");
  const double n = static_cast<double>(y.size());
  const double ybar = stats::mean(y);
  double sse = 0, sst = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    sst += (y[i] - ybar) * (y[i] - ybar);
  }
  Metrics m;
  m.rmse = std::sqrt(sse / n);
  if (sst > 0) m.r2 = 1.0 - sse / sst;
  return m;
}

double r_squared(std::span<const double> y, std::span<const double> yhat) {
  const auto m = metrics(y, yhat);
  if (!m.r2) throw Error(Errc::zero_variance_target, "R^2 is undefined for a constant target");
  return *m.r2;
}

std::vector<int> make_folds(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::config_error, "cross-validation needs k >= 2");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

SegmentReport segment_analysis(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw Error(Errc::too_few_rows, "segment analysis needs paired values");
  static const char* labels[] = {"very low", "low", "medium", "high", "very high"};
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return y[a] < y[b]; });
  SegmentReport rep;
  const std::size_t n = y.size();
  for (std::size_t g = 0; g < 5; ++g) {
    Segment& s = rep.segments[g];
    s.label = labels[g];
    const std::size_t lo = g * n / 5, hi = (g + 1) * n / 5;
    s.count = hi - lo;
    if (s.count == 0) continue;
    double sum = 0, sq = 0;
    s.y_min = y[order[lo]];
    s.y_max = y[order[hi - 1]];
    for (std::size_t i = lo; i < hi; ++i) {
      const double r = yhat[order[i]] - y[order[i]];
      sum += r;
      sq += r * r;
    }
    s.mean_residual = sum / static_cast<double>(s.count);
    s.rmse = std::sqrt(sq / static_cast<double>(s.count));
  }
  return rep;
}

Summary summarize(std::span<const double> v) {
  Summary s;
  s.count = v.size();
  if (v.empty()) return s;
  s.mean = stats::mean(v);
  s.sd = stats::sample_sd(v);
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

const FamilyReport* CvReport::find(Family f) const {
  for (const auto& r : families)
    if (r.family == f) return &r;
  return nullptr;
}

OuterFoldFit fit_outer_fold(const Dataset& d, std::span<const std::size_t> train_rows,
                            const std::vector<models::ModelGrid>& grids, const CvOptions& opt,
                            std::uint64_t fold_seed) {
  OuterFoldFit out;
  out.pipeline = FoldPipeline::fit(d, train_rows);
  const ModelFrame frame = out.pipeline.frame(d, train_rows);
  const Eigen::VectorXd y = out.pipeline.response(d, train_rows);

  std::optional<InnerData> inner;
  auto inner_data = [&]() -> const InnerData& {
    if (!inner) inner = make_inner(frame, y, opt.inner_folds, derive_seed(fold_seed, {0}));
    return *inner;
  };

  const models::GamModel* outer_gam = nullptr;
  std::optional<models::TrainedModel> gam_for_p;
  out.rgam_terms.resize(grids.size());
  out.rgam_empty.assign(grids.size(), false);

  for (std::size_t gi = 0; gi < grids.size(); ++gi) {
    const auto& grid = grids[gi];
    const auto specs = grid.expand(derive_seed(fold_seed, {1, gi}));
    if (specs.empty()) throw Error(Errc::config_error, "empty hyperparameter grid");

    if (grid.family != Family::rgam) {
      std::size_t chosen = 0;
      if (specs.size() > 1) {
        const auto& in = inner_data();
        std::vector<double> score(specs.size(), 0.0);
        for (std::size_t f = 0; f < in.train.size(); ++f) {
          const auto fits = models::fit_grid(specs, in.train_frame[f], in.train_y[f], opt.fit);
          for (std::size_t s = 0; s < specs.size(); ++s)
            score[s] += fits[s] ? rmse_of(in.test_y[f], fits[s]->predict(in.test_frame[f])) : kInf;
        }
        chosen = argmin_first(score);
      }
      out.models.push_back(models::fit_model(specs[chosen], frame, y, opt.fit));
      continue;
    }

    // rGAM: per grid point, select terms from inner-fold GAM significance.
    const auto& in = inner_data();
    std::vector<Selection> selection;
    std::vector<double> score(specs.size(), 0.0);
    for (const auto& spec : specs) {
      ModelSpec gam_spec = spec;
      gam_spec.family = Family::gam;
      std::vector<std::map<std::string, double>> p;
      for (std::size_t f = 0; f < in.train.size(); ++f)
        p.push_back(p_value_map(*models::fit_model(gam_spec, in.train_frame[f], in.train_y[f], opt.fit).gam()));
      selection.push_back(select_terms(p, opt));
    }
    std::size_t chosen = 0;
    if (specs.size() > 1) {
      for (std::size_t s = 0; s < specs.size(); ++s)
        for (std::size_t f = 0; f < in.train.size(); ++f) {
          const auto m = models::fit_model(specs[s], in.train_frame[f], in.train_y[f], opt.fit,
                                           &selection[s].terms);
          score[s] += rmse_of(in.test_y[f], m.predict(in.test_frame[f]));
        }
      chosen = argmin_first(score);
    }
    out.rgam_terms[gi] = selection[chosen].terms;
    out.rgam_empty[gi] = selection[chosen].empty;
    out.models.push_back(models::fit_model(specs[chosen], frame, y, opt.fit, &out.rgam_terms[gi]));
  }

  // Outer-fold GAM significance, used to select the final rGAM terms.
  for (const auto& m : out.models)
    if (m.spec.family == Family::gam && !outer_gam) outer_gam = m.gam();
  if (!outer_gam) {
    for (std::size_t gi = 0; gi < grids.size(); ++gi)
      if (grids[gi].family == Family::rgam) {
        ModelSpec s = out.models[gi].spec;
        s.family = Family::gam;
        gam_for_p = models::fit_model(s, frame, y, opt.fit);
        outer_gam = gam_for_p->gam();
        break;
      }
  }
  if (outer_gam) out.gam_p_values = p_value_map(*outer_gam);
  return out;
}

CvReport nested_cv(const Dataset& d, const std::vector<models::ModelGrid>& grids,
                   const CvOptions& opt) {
  d.validate();
  const std::size_t n = d.rows();
  if (opt.folds < 2 || opt.inner_folds < 2)
    throw Error(Errc::config_error, "cross-validation needs at least two folds");
  if (n < 2 * static_cast<std::size_t>(opt.folds))
    throw Error(Errc::too_few_rows, "nested CV needs at least 2K rows (" + std::to_string(n) + " < " +
                                        std::to_string(2 * opt.folds) + ")");

  CvReport rep;
  rep.seed = opt.seed;
  rep.k = opt.folds;
  rep.fold_of_row = make_folds(n, opt.folds, derive_seed(opt.seed, {0}));

  struct FoldOutput {
    std::vector<std::size_t> test;
    Eigen::VectorXd y;
    std::vector<Eigen::VectorXd> pred;
    OuterFoldFit fit;
  };
  std::vector<FoldOutput> outputs(static_cast<std::size_t>(opt.folds));
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < opt.folds; ++f) {
    try {
      auto& o = outputs[static_cast<std::size_t>(f)];
      std::vector<std::size_t> train;
      split_folds(rep.fold_of_row, f, train, o.test);
      o.fit = fit_outer_fold(d, train, grids, opt, derive_seed(opt.seed, {1, static_cast<std::uint64_t>(f)}));
      const ModelFrame test_frame = o.fit.pipeline.frame(d, o.test);
      o.y = o.fit.pipeline.response(d, o.test);
      for (const auto& m : o.fit.models) o.pred.push_back(m.predict(test_frame));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t gi = 0; gi < grids.size(); ++gi) {
    FamilyReport fr;
    fr.family = grids[gi].family;
    fr.oof_observed.assign(n, 0.0);
    fr.oof_predicted.assign(n, 0.0);
    std::vector<double> rmse, r2;
    for (int f = 0; f < opt.folds; ++f) {
      const auto& o = outputs[static_cast<std::size_t>(f)];
      const auto yv = to_vec(o.y), pv = to_vec(o.pred[gi]);
      const Metrics m = metrics(yv, pv);
      FoldResult res;
      res.fold = f;
      res.n_test = o.test.size();
      res.rmse = m.rmse;
      res.r2 = m.r2;
      res.chosen = o.fit.models[gi].spec;
      res.rgam_terms = o.fit.rgam_terms[gi];
      res.rgam_empty = o.fit.rgam_empty[gi];
      rmse.push_back(m.rmse);
      if (m.r2) r2.push_back(*m.r2);
      for (std::size_t i = 0; i < o.test.size(); ++i) {
        fr.oof_observed[o.test[i]] = yv[i];
        fr.oof_predicted[o.test[i]] = pv[i];
      }
      fr.folds.push_back(std::move(res));
    }
    fr.rmse = summarize(rmse);
    fr.r2 = summarize(r2);
    fr.segments = segment_analysis(fr.oof_observed, fr.oof_predicted);
    rep.families.push_back(std::move(fr));
  }
  for (const auto& o : outputs) rep.gam_fold_p_values.push_back(o.fit.gam_p_values);
  return rep;
}

ModelSpec modal_spec(const FamilyReport& r, const models::ModelGrid& grid) {
  const auto specs = grid.expand();
  std::vector<int> count(specs.size(), 0);
  for (const auto& f : r.folds)
    for (std::size_t s = 0; s < specs.size(); ++s)
      if (specs[s].hyper == f.chosen.hyper) {
        ++count[s];
        break;
      }
  const auto best = std::max_element(count.begin(), count.end()) - count.begin();
  if (count[static_cast<std::size_t>(best)] == 0)
    throw Error(Errc::artifact_mismatch, "CV choices of " + std::string(models::to_string(r.family)) +
                                             " are not in its grid");
  return specs[static_cast<std::size_t>(best)];
}

FinalRefit final_refit(const Dataset& d, const std::vector<models::ModelGrid>& grids,
                       const CvReport& cv, const RefitOptions& opt) {
  d.validate();
  std::vector<std::size_t> all(d.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  FinalRefit out;
  out.pipeline = FoldPipeline::fit(d, all);
  const ModelFrame frame = out.pipeline.frame(d, all);
  const Eigen::VectorXd y = out.pipeline.response(d, all);
  out.columns = frame.names;

  for (std::size_t gi = 0; gi < grids.size(); ++gi) {
    const FamilyReport* fr = cv.find(grids[gi].family);
    if (!fr) throw Error(Errc::artifact_mismatch, "CV report lacks family " +
                                                      std::string(models::to_string(grids[gi].family)));
    ModelSpec spec = modal_spec(*fr, grids[gi]);
    spec.seed = derive_seed(opt.seed, {2, gi});
    RefitFamily rf;
    if (grids[gi].family == Family::rgam) {
      CvOptions sel;
      sel.rgam_level = opt.rgam_level;
      sel.rgam_fold_fraction = opt.rgam_fold_fraction;
      auto s = select_terms(cv.gam_fold_p_values, sel);
      rf.rgam_terms = s.terms;
      rf.rgam_empty = s.empty;
    }
    rf.model = models::fit_model(spec, frame, y, opt.fit, &rf.rgam_terms);
    rf.importance = models::permutation_importance(rf.model, frame, y, opt.importance_repeats,
                                                   derive_seed(opt.seed, {3, gi}));
    if (const auto* g = rf.model.gam()) rf.significance = models::gam_term_significance(*g, opt.smooth_grid_points);
    out.families.push_back(std::move(rf));
  }
  return out;
}

}  // namespace engage
