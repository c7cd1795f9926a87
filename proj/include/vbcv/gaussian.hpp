#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbcv/core.hpp"
#include "vbcv/rng.hpp"

namespace vbcv {

/**
 * Univariate Gaussian approximation q(x) = N(mu, sigma2), viewed as an
 * exponential family with sufficient statistics T(x) = (x, x^2) and natural
 * parameters eta = (mu / sigma2, -1 / (2 sigma2)).
 *
 * All gradients in this library are taken with respect to eta.
 */
class GaussianQ {
 public:
  static GaussianQ from_moments(double mu, double sigma2) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2) || !std::isfinite(mu))
      throw std::domain_error("GaussianQ: variance must be finite and > 0, got " +
                              std::to_string(sigma2));
    return GaussianQ(mu, sigma2);
  }

  static GaussianQ from_natural(const Vec2& eta) {
    if (!(eta(1) < 0.0))
      throw std::domain_error("GaussianQ: natural parameter eta2 must be < 0, got " +
                              std::to_string(eta(1)));
    const double sigma2 = -0.5 / eta(1);
    return from_moments(eta(0) * sigma2, sigma2);
  }

  double mu() const noexcept { return mu_; }
  double sigma2() const noexcept { return sigma2_; }
  double sigma() const noexcept { return sigma_; }

  Vec2 eta() const { return {mu_ / sigma2_, -0.5 / sigma2_}; }

  /// Z(eta), evaluated in moment form: mu^2 / (2 sigma2) + log(2 pi sigma2) / 2.
  double log_normalizer() const {
    return 0.5 * mu_ * mu_ / sigma2_ + 0.5 * std::log(2.0 * std::numbers::pi * sigma2_);
  }

  /// E_q[T(x)] = (mu, mu^2 + sigma2).
  Vec2 mean_suffstat() const { return {mu_, mu_ * mu_ + sigma2_}; }

  double log_density(double x) const {
    const double d = x - mu_;
    return -0.5 * d * d / sigma2_ - 0.5 * std::log(2.0 * std::numbers::pi * sigma2_);
  }

  /// Same density written as T(x) . eta - Z(eta).
  double log_density_natural(double x) const { return suffstat(x).dot(eta()) - log_normalizer(); }

  /// grad_eta log q(x) = T(x) - E_q[T(x)].
  Vec2 score_eta(double x) const { return {x - mu_, x * x - (mu_ * mu_ + sigma2_)}; }

  /// d/dx log q(x).
  double score_x(double x) const { return -(x - mu_) / sigma2_; }

  /// Cov_q[T, T] in closed form.
  Mat2 exact_suffstat_cov() const {
    Mat2 c;
    const double off = 2.0 * mu_ * sigma2_;
    c << sigma2_, off, off, 2.0 * sigma2_ * sigma2_ + 4.0 * mu_ * mu_ * sigma2_;
    return c;
  }

  /// Reparameterised draw x = mu + sigma * eps.
  double transform(double eps) const { return mu_ + sigma_ * eps; }

  /// dx/deta for x = mu(eta) + sigma(eta) * eps:
  /// dmu/deta = (sigma2, 2 mu sigma2) and dsigma/deta = (0, sigma^3).
  Vec2 path_jacobian(double eps) const {
    return {sigma2_, 2.0 * mu_ * sigma2_ + sigma2_ * sigma_ * eps};
  }

  static Vec2 suffstat(double x) { return {x, x * x}; }
  /// dT/dx.
  static Vec2 suffstat_dx(double x) { return {1.0, 2.0 * x}; }

  friend bool operator==(const GaussianQ&, const GaussianQ&) = default;

 private:
  GaussianQ(double mu, double sigma2) : mu_(mu), sigma2_(sigma2), sigma_(std::sqrt(sigma2)) {}

  double mu_;
  double sigma2_;
  double sigma_;
};

/// A (mu, sigma2) pair naming an approximation.
struct Setting {
  double mu = 0.0;
  double sigma2 = 1.0;

  friend bool operator==(const Setting&, const Setting&) = default;
};

/// S draws from q together with their standard-normal noise.
struct DrawBatch {
  std::vector<double> draws;
  std::vector<double> noise;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return draws.size(); }
};

/// Builds a batch from given noise values.
inline DrawBatch make_batch(const GaussianQ& q, std::span<const double> noise,
                            std::uint64_t seed = 0) {
  DrawBatch b;
  b.seed = seed;
  b.noise.assign(noise.begin(), noise.end());
  b.draws.reserve(noise.size());
  for (double e : noise) b.draws.push_back(q.transform(e));
  return b;
}

/// Draws S values from q. Same (q, seed, S) always gives the same batch.
inline DrawBatch sample(const GaussianQ& q, std::uint64_t seed, std::size_t count) {
  if (count < 1) throw std::invalid_argument("sample: need at least one draw");
  NormalStream normals(seed);
  std::vector<double> eps(count);
  for (auto& e : eps) e = normals();
  return make_batch(q, eps, seed);
}

/// Splits a batch into its first `head` draws and the remainder.
inline std::pair<DrawBatch, DrawBatch> split_batch(const DrawBatch& b, std::size_t head) {
  if (head > b.size()) throw std::invalid_argument("split_batch: head exceeds batch size");
  DrawBatch first, second;
  first.seed = second.seed = b.seed;
  first.draws.assign(b.draws.begin(), b.draws.begin() + static_cast<std::ptrdiff_t>(head));
  first.noise.assign(b.noise.begin(), b.noise.begin() + static_cast<std::ptrdiff_t>(head));
  second.draws.assign(b.draws.begin() + static_cast<std::ptrdiff_t>(head), b.draws.end());
  second.noise.assign(b.noise.begin() + static_cast<std::ptrdiff_t>(head), b.noise.end());
  return {std::move(first), std::move(second)};
}

}  // namespace vbcv
