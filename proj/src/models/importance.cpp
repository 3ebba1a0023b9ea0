#include "engage/models/importance.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <random>

#include "engage/error.hpp"
#include "engage/seed.hpp"

namespace engage::models {
namespace {

double mse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  return (y - yhat).squaredNorm() / static_cast<double>(y.size());
}

// Error increase of one (column, repeat) task.
double permuted_loss(const TrainedModel& model, const ModelFrame& frame, const Eigen::VectorXd& y,
                     double baseline, Eigen::Index j, int r, std::uint64_t seed) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(frame.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(r)}));
  std::shuffle(perm.begin(), perm.end(), rng);
  ModelFrame shuffled = frame;
  for (Eigen::Index i = 0; i < frame.rows(); ++i)
    shuffled.X(i, j) = frame.X(perm[static_cast<std::size_t>(i)], j);
  return mse(y, model.predict(shuffled)) - baseline;
}

void check(const ModelFrame& frame, const Eigen::VectorXd& y, int n_repeats) {
  if (n_repeats < 1) throw Error(Errc::invalid_hyperparameter, "importance needs n_repeats >= 1");
  if (y.size() != frame.rows()) throw Error(Errc::too_few_rows, "importance needs matching rows");
}

}  // namespace

std::vector<double> permutation_importance(const TrainedModel& model, const ModelFrame& frame,
                                           const Eigen::VectorXd& y, int n_repeats,
                                           std::uint64_t seed) {
  check(frame, y, n_repeats);
  const double baseline = mse(y, model.predict(frame));
  const auto p = frame.cols();
  const long tasks = static_cast<long>(p) * n_repeats;
  std::vector<double> loss(static_cast<std::size_t>(tasks));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (long t = 0; t < tasks; ++t) {
    try {
      loss[static_cast<std::size_t>(t)] =
          permuted_loss(model, frame, y, baseline, t / n_repeats, static_cast<int>(t % n_repeats), seed);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<double> out(static_cast<std::size_t>(p), 0.0);
  for (Eigen::Index j = 0; j < p; ++j) {
    double s = 0;
    for (int r = 0; r < n_repeats; ++r) s += loss[static_cast<std::size_t>(j * n_repeats + r)];
    out[static_cast<std::size_t>(j)] = s / n_repeats;
  }
  return out;
}

std::vector<double> permutation_importance_serial(const TrainedModel& model,
                                                  const ModelFrame& frame,
                                                  const Eigen::VectorXd& y, int n_repeats,
                                                  std::uint64_t seed) {
  check(frame, y, n_repeats);
  const double baseline = mse(y, model.predict(frame));
  std::vector<double> out(static_cast<std::size_t>(frame.cols()), 0.0);
  for (Eigen::Index j = 0; j < frame.cols(); ++j) {
    double s = 0;
    for (int r = 0; r < n_repeats; ++r) s += permuted_loss(model, frame, y, baseline, j, r, seed);
    out[static_cast<std::size_t>(j)] = s / n_repeats;
  }
  return out;
}

}  // namespace engage::models
