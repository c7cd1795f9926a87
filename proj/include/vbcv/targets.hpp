#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "vbcv/core.hpp"
#include "vbcv/gaussian.hpp"

namespace vbcv {

using ScalarFn = std::function<double(double)>;

/// Unnormalised log posterior log p(x, y), with the data folded in.
/// Derivatives are optional. Black-box estimators only call log_p.
struct Target {
  std::string name;
  ScalarFn log_p;
  std::optional<ScalarFn> grad_x;
  std::optional<ScalarFn> hess_x;

  bool has_grad() const noexcept { return grad_x.has_value(); }
  bool has_hess() const noexcept { return hess_x.has_value(); }

  const ScalarFn& require_grad(std::string_view who) const {
    if (!grad_x)
      throw capability_error(std::string(who) + " needs the x-gradient of target '" + name + "'");
    return *grad_x;
  }
  const ScalarFn& require_hess(std::string_view who) const {
    if (!hess_x)
      throw capability_error(std::string(who) + " needs the x-hessian of target '" + name + "'");
    return *hess_x;
  }
};

/// A target in q's own exponential family: log p(x) = T(x) . eta_tilde + c.
struct ExpFamTarget {
  Vec2 eta_tilde;
  double c = 0.0;

  double log_p(double x) const { return GaussianQ::suffstat(x).dot(eta_tilde) + c; }

  Target to_target(std::string name = "gaussian") const {
    const Vec2 et = eta_tilde;
    const double cc = c;
    return Target{std::move(name),
                  [et, cc](double x) { return x * et(0) + x * x * et(1) + cc; },
                  [et](double x) { return et(0) + 2.0 * x * et(1); },
                  [et](double) { return 2.0 * et(1); }};
  }
};

namespace detail {
// log(1 + exp(x)) without overflow
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace detail

/// log p(x) = x - log(1 + exp(x)) = log sigmoid(x): a single logistic-regression
/// likelihood term, improper as a density in x.
inline Target logistic_target() {
  return Target{"logistic",
                [](double x) { return x - detail::softplus(x); },
                [](double x) { return detail::logistic(-x); },
                [](double x) {
                  const double s = detail::logistic(x);
                  return -s * (1.0 - s);
                }};
}

/// Gaussian target N(mu, sigma2) with c chosen so log_p equals the normalised log-density.
inline ExpFamTarget gaussian_target(double mu, double sigma2) {
  const auto p = GaussianQ::from_moments(mu, sigma2);
  return ExpFamTarget{p.eta(), -p.log_normalizer()};
}

/// Parses "logistic" or "gaussian:MU:SIGMA2".
inline Target parse_target(std::string_view spec) {
  if (spec == "logistic") return logistic_target();
  constexpr std::string_view prefix = "gaussian:";
  if (spec.substr(0, prefix.size()) == prefix) {
    const std::string rest(spec.substr(prefix.size()));
    const auto colon = rest.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("target '" + std::string(spec) + "': expected gaussian:MU:SIGMA2");
    std::size_t used_mu = 0, used_s2 = 0;
    double mu = 0, s2 = 0;
    try {
      mu = std::stod(rest.substr(0, colon), &used_mu);
      s2 = std::stod(rest.substr(colon + 1), &used_s2);
    } catch (const std::exception&) {
      throw std::invalid_argument("target '" + std::string(spec) + "': malformed number");
    }
    if (used_mu != colon || used_s2 != rest.size() - colon - 1)
      throw std::invalid_argument("target '" + std::string(spec) + "': malformed number");
    return gaussian_target(mu, s2).to_target(std::string(spec));
  }
  throw std::invalid_argument("unknown target '" + std::string(spec) + "'");
}

}  // namespace vbcv
