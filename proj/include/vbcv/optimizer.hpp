#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbcv/core.hpp"
#include "vbcv/estimators.hpp"
#include "vbcv/gaussian.hpp"
#include "vbcv/quadrature.hpp"
#include "vbcv/rng.hpp"
#include "vbcv/targets.hpp"

namespace vbcv {

/// Robbins-Monro step sizes a_t = step0 / (1 + t)^decay.
struct SgdSchedule {
  double step0 = 0.005;
  // decay in (0.5, 1] gives sum a_t = inf and sum a_t^2 < inf
  double decay = 0.6;
  std::size_t iterations = 2000;
  std::size_t samples_per_step = 50;
  std::size_t record_every = 10;
  double cv_split = 0.5;
  // precondition the estimate with C^-1, giving natural-gradient steps
  bool natural_gradient = false;

  double step(std::size_t t) const {
    return step0 / std::pow(1.0 + static_cast<double>(t), decay);
  }

  void validate() const {
    if (!(step0 >= 0.0) || !std::isfinite(step0)) throw std::invalid_argument("step0 must be >= 0");
    if (!(decay > 0.5 && decay <= 1.0)) throw std::invalid_argument("decay must lie in (0.5, 1]");
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (record_every < 1) throw std::invalid_argument("record_every must be >= 1");
  }
};

struct TrajectoryPoint {
  std::size_t iteration = 0;
  double mu = 0.0;
  double sigma2 = 0.0;
  double kl = 0.0;
  double step = 0.0;
};

struct FitResult {
  std::vector<TrajectoryPoint> trajectory;
  GaussianQ final_q = GaussianQ::from_moments(0.0, 1.0);
};

/// Upper bound on eta2 so that sigma2 stays positive.
inline constexpr double kMaxEta2 = -1e-8;

inline Vec2 project_eta(Vec2 eta) {
  if (!(eta(1) <= kMaxEta2)) eta(1) = kMaxEta2;
  return eta;
}

/**
 * Stochastic gradient descent on KL(q || p) in natural parameters:
 * eta <- project(eta - a_t * g_t), with g_t drawn fresh from `estimator`
 * each step. Biased estimators are rejected, since their error does not
 * average out over iterations.
 */
inline FitResult fit(const GaussianQ& q0, const Target& t, EstimatorId estimator,
                     const SgdSchedule& schedule, std::uint64_t seed) {
  schedule.validate();
  if (!is_unbiased(estimator))
    throw std::invalid_argument(std::string(to_string(estimator)) +
                                " is biased; plain stochastic gradient descent needs an unbiased "
                                "gradient estimator");
  EstimatorConfig cfg;
  cfg.total_samples = schedule.samples_per_step;
  cfg.cv_split = schedule.cv_split;
  cfg.validate(estimator);

  static const GhRule kl_rule = GhRule::make(64);
  FitResult out;
  GaussianQ q = q0;
  auto record = [&](std::size_t it, double step) {
    out.trajectory.push_back({it, q.mu(), q.sigma2(), kl_divergence(q, t, kl_rule), step});
  };
  record(0, schedule.step(0));
  for (std::size_t it = 0; it < schedule.iterations; ++it) {
    const double a = schedule.step(it);
    Vec2 g = estimate(estimator, q, t, cfg, derive_key({seed, it})).value;
    if (schedule.natural_gradient) g = solve2(q.exact_suffstat_cov(), g).x;
    q = GaussianQ::from_natural(project_eta(q.eta() - a * g));
    if ((it + 1) % schedule.record_every == 0 || it + 1 == schedule.iterations)
      record(it + 1, schedule.step(it + 1));
  }
  out.final_q = q;
  return out;
}

}  // namespace vbcv
