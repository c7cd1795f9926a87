#pragma once

// Test-only reference integrals, independent of the library's quadrature.

#include <cmath>
#include <functional>
#include <array>
#include <numbers>

namespace oracle {

// E[f(x)], x ~ N(mu, s2), by the trapezoid rule on mu +- 16 sigma.
inline double normal_expect(double mu, double s2, const std::function<double(double)>& f,
                            int n = 40000) {
  const double sd = std::sqrt(s2), lo = mu - 16 * sd, h = 32 * sd / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double z = (x - mu) / sd;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    acc += w * std::exp(-0.5 * z * z) * f(x);
  }
  return acc * h / (sd * std::sqrt(2 * std::numbers::pi));
}

inline double log_sigmoid(double x) { return x > 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

inline double log_normal(double x, double mu, double s2) {
  return -0.5 * (x - mu) * (x - mu) / s2 - 0.5 * std::log(2 * std::numbers::pi * s2);
}

// Gradient of KL(q || sigmoid) in (mu/s2, -1/(2 s2)) as Cov[(x, x^2), log q - log p].
inline std::array<double, 2> logistic_kl_gradient(double mu, double s2) {
  auto h = [&](double x) { return log_normal(x, mu, s2) - log_sigmoid(x); };
  const double eh = normal_expect(mu, s2, h);
  return {normal_expect(mu, s2, [&](double x) { return (x - mu) * (h(x) - eh); }),
          normal_expect(mu, s2, [&](double x) { return (x * x - mu * mu - s2) * (h(x) - eh); })};
}

}  // namespace oracle
