#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "vbcv/core.hpp"
#include "vbcv/estimators.hpp"
#include "vbcv/gaussian.hpp"
#include "vbcv/quadrature.hpp"
#include "vbcv/rng.hpp"
#include "vbcv/targets.hpp"

namespace vbcv {

/// How a 2-vector gradient error is reduced to a scalar squared error.
enum class MseMetric {
  // gradient measured in (mu/sigma2, 1/sigma2) coordinates: weights (1, 1/4) on eta errors
  precision,
  // plain sum over the eta components
  eta,
  // single eta component
  eta1,
  eta2,
};

inline constexpr std::string_view to_string(MseMetric m) {
  switch (m) {
    case MseMetric::precision: return "precision";
    case MseMetric::eta: return "eta";
    case MseMetric::eta1: return "eta1";
    case MseMetric::eta2: return "eta2";
  }
  return "?";
}

inline std::optional<MseMetric> parse_metric(std::string_view s) {
  for (auto m : {MseMetric::precision, MseMetric::eta, MseMetric::eta1, MseMetric::eta2})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

inline Vec2 metric_weights(MseMetric m) {
  switch (m) {
    case MseMetric::precision: return {1.0, 0.25};
    case MseMetric::eta: return {1.0, 1.0};
    case MseMetric::eta1: return {1.0, 0.0};
    case MseMetric::eta2: return {0.0, 1.0};
  }
  return {1.0, 1.0};
}

inline std::vector<Setting> default_settings() { return {{0, 2}, {-2, 2}, {2, 2}, {0, 4}}; }

struct BenchmarkSpec {
  std::vector<Setting> settings = default_settings();
  std::vector<EstimatorId> estimators{kAllEstimators.begin(), kAllEstimators.end()};
  std::size_t replications = 100000;
  std::size_t samples = 50;
  double cv_split = 0.5;
  std::uint64_t base_seed = 0;
  std::string target = "logistic";
  MseMetric metric = MseMetric::precision;
  // share draws across estimators within a replication
  bool paired = false;
  unsigned threads = 0;  // 0: hardware concurrency
  EstimatorConfig estimator_options{};

  EstimatorConfig estimator_config() const {
    EstimatorConfig c = estimator_options;
    c.total_samples = samples;
    c.cv_split = cv_split;
    return c;
  }

  void validate() const {
    if (replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (settings.empty()) throw std::invalid_argument("at least one (mu, sigma2) setting is required");
    for (const auto& s : settings) GaussianQ::from_moments(s.mu, s.sigma2);
    const auto cfg = estimator_config();
    for (auto id : estimators) cfg.validate(id);
    parse_target(target);
  }
};

struct MseRow {
  EstimatorId estimator{};
  Setting setting;
  // empty when the estimator could not run on this target ("n/a" cell)
  std::optional<std::string> unavailable;
  double mse = 0.0;
  double mse_stderr = 0.0;
  Vec2 mean_bias = Vec2::Zero();
  Vec2 ground_truth = Vec2::Zero();
  // standard error of the mean estimate, per eta component
  Vec2 estimate_stderr = Vec2::Zero();
  std::size_t replications = 0;
  Vec2 weights = Vec2::Ones();
};

struct MseTable {
  std::vector<MseRow> rows;
  std::vector<Setting> settings;
  std::vector<EstimatorId> estimators;

  const MseRow* find(EstimatorId id, const Setting& s) const {
    for (const auto& r : rows)
      if (r.estimator == id && r.setting == s) return &r;
    return nullptr;
  }
};

/// Seed for one replication's draws. With pairing the estimator id is left
/// out, so every estimator in replication r sees the same draws.
inline std::uint64_t replication_seed(std::uint64_t base_seed, std::size_t estimator,
                                      std::size_t setting, std::size_t replication, bool paired) {
  if (paired) return derive_key({base_seed, 0x9a12edULL, setting, replication});
  return derive_key({base_seed, estimator, setting, replication});
}

namespace detail {

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Runs every (estimator, setting) cell for spec.replications replications and
/// scores each against the quadrature reference gradient. Per-replication
/// estimates are stored by index and reduced in index order, so the output
/// does not depend on the thread count. `target` overrides spec.target.
inline MseTable run_benchmark(const BenchmarkSpec& spec, const Target& target) {
  spec.validate();
  const auto cfg = spec.estimator_config();
  const Vec2 w = metric_weights(spec.metric);
  const std::size_t reps = spec.replications;

  MseTable table;
  table.settings = spec.settings;
  table.estimators = spec.estimators;

  std::vector<Vec2> estimates(reps);
  for (std::size_t si = 0; si < spec.settings.size(); ++si) {
    const auto& setting = spec.settings[si];
    const auto q = GaussianQ::from_moments(setting.mu, setting.sigma2);
    const Vec2 truth = ground_truth_gradient(q, target);
    for (auto id : spec.estimators) {
      MseRow row;
      row.estimator = id;
      row.setting = setting;
      row.ground_truth = truth;
      row.weights = w;
      if ((needs_grad(id) && !target.has_grad()) || (needs_hess(id) && !target.has_hess())) {
        row.unavailable = "target '" + target.name + "' lacks derivatives required by " +
                          std::string(to_string(id));
        table.rows.push_back(std::move(row));
        continue;
      }
      detail::parallel_for(reps, spec.threads, [&](std::size_t r) {
        const auto seed = replication_seed(spec.base_seed, index_of(id), si, r, spec.paired);
        estimates[r] = estimate(id, q, target, cfg, seed).value;
      });

      Vec2 sum = Vec2::Zero();
      for (const auto& e : estimates) sum += e;
      const Vec2 mean = sum / static_cast<double>(reps);
      double se_sum = 0.0;
      for (const auto& e : estimates) se_sum += (e - truth).cwiseAbs2().dot(w);
      const double mse = se_sum / static_cast<double>(reps);
      double se_var = 0.0;
      Vec2 est_var = Vec2::Zero();
      for (const auto& e : estimates) {
        const double d = (e - truth).cwiseAbs2().dot(w) - mse;
        se_var += d * d;
        est_var += (e - mean).cwiseAbs2();
      }
      row.mse = mse;
      row.replications = reps;
      row.mean_bias = mean - truth;
      if (reps > 1) {
        const double rr = static_cast<double>(reps);
        row.mse_stderr = std::sqrt(se_var / (rr - 1.0)) / std::sqrt(rr);
        row.estimate_stderr = (est_var / (rr - 1.0)).cwiseSqrt() / std::sqrt(rr);
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

inline MseTable run_benchmark(const BenchmarkSpec& spec) {
  return run_benchmark(spec, parse_target(spec.target));
}

struct BiasSplit {
  double squared_bias = 0.0;
  double variance = 0.0;
};

/// Splits a row's MSE into weighted squared bias and the remaining variance
/// (floored at zero).
inline BiasSplit bias_decomposition(const MseRow& row) {
  BiasSplit b;
  b.squared_bias = row.mean_bias.cwiseAbs2().dot(row.weights);
  b.variance = std::max(0.0, row.mse - b.squared_bias);
  return b;
}

inline std::vector<BiasSplit> bias_decomposition(const std::vector<MseRow>& rows) {
  std::vector<BiasSplit> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(bias_decomposition(r));
  return out;
}

}  // namespace vbcv
