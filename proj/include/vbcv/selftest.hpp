#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "vbcv/core.hpp"
#include "vbcv/estimators.hpp"
#include "vbcv/gaussian.hpp"
#include "vbcv/quadrature.hpp"
#include "vbcv/rng.hpp"
#include "vbcv/targets.hpp"

namespace vbcv {

struct SuiteResult {
  std::string name;
  bool passed = true;
  double worst = 0.0;  // largest observed error, in the suite's own units
};

namespace selftest {

inline double rel_err(double got, double want, double floor = 1.0) {
  return std::abs(got - want) / std::max(floor, std::abs(want));
}

inline GaussianQ shifted(const GaussianQ& q, int j, double delta) {
  Vec2 eta = q.eta();
  eta(j) += delta;
  return GaussianQ::from_natural(eta);
}

/// Central difference in eta_j of a functional of q.
inline double d_eta(const GaussianQ& q, int j, double step,
                    const std::function<double(const GaussianQ&)>& fn) {
  return (fn(shifted(q, j, step)) - fn(shifted(q, j, -step))) / (2.0 * step);
}

/// With a target in q's family, cv-regression and greg-samplecov return
/// C (eta - eta_tilde) on every draw set, and cv-regression's coefficient is
/// eta - eta_tilde.
inline SuiteResult exactness(std::size_t replications = 1000, double tol = 1e-10) {
  SuiteResult res{"zero-variance exactness"};
  const std::vector<std::pair<Setting, Setting>> pairs = {
      {{0, 2}, {0, 1}}, {{-2, 2}, {1, 3}}, {{2, 2}, {0.5, 0.5}}, {{0, 4}, {-1, 2}}, {{1, 0.5}, {3, 5}}};
  EstimatorConfig cfg;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto q = GaussianQ::from_moments(pairs[p].first.mu, pairs[p].first.sigma2);
    const auto tg = gaussian_target(pairs[p].second.mu, pairs[p].second.sigma2);
    const Target t = tg.to_target();
    const Vec2 diff = q.eta() - tg.eta_tilde;
    const Vec2 exact = q.exact_suffstat_cov() * diff;
    const double scale = std::max(1.0, exact.cwiseAbs().maxCoeff());
    const double ascale = std::max(1.0, diff.cwiseAbs().maxCoeff());
    for (std::size_t r = 0; r < replications; ++r) {
      const auto batch = sample(q, derive_key({0xe4ac7ULL, p, r}), cfg.total_samples);
      for (auto id : {EstimatorId::cv_regression, EstimatorId::greg_samplecov}) {
        const auto e = estimate(id, q, t, batch, cfg);
        res.worst = std::max(res.worst, (e.value - exact).cwiseAbs().maxCoeff() / scale);
        if (id == EstimatorId::cv_regression)
          res.worst = std::max(res.worst, (*e.aux.g_nat - diff).cwiseAbs().maxCoeff() / ascale);
      }
    }
  }
  res.passed = res.worst <= tol;
  return res;
}

/// Quadrature Cov[grad_eta log q, h] against finite differences of quadrature
/// E_q[h] in eta, for h = x, x^2 and the logistic log-likelihood.
inline SuiteResult covariance_identity(double tol = 1e-6) {
  SuiteResult res{"covariance identity"};
  const Target logistic = logistic_target();
  const std::vector<std::function<double(double)>> hs = {
      [](double x) { return x; }, [](double x) { return x * x; }, logistic.log_p};
  for (const auto& s : std::vector<Setting>{{0, 2}, {-2, 2}, {2, 2}, {0, 4}}) {
    const auto q = GaussianQ::from_moments(s.mu, s.sigma2);
    for (const auto& h : hs) {
      const Eigen::MatrixXd c = cov(
          q, [&](double x) -> Eigen::VectorXd { return q.score_eta(x); },
          [&](double x) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(1, h(x)); });
      for (int j = 0; j < 2; ++j) {
        const double fd = d_eta(q, j, 1e-5, [&](const GaussianQ& qq) { return expect(qq, h); });
        res.worst = std::max(res.worst, rel_err(c(j, 0), fd));
      }
    }
  }
  res.passed = res.worst <= tol;
  return res;
}

/// grad_eta log q(x) against central differences of log q in eta, with the
/// log normaliser moving as well.
inline SuiteResult score_finite_difference(double tol = 1e-6) {
  SuiteResult res{"score finite differences"};
  for (const auto& s : std::vector<Setting>{{0, 1}, {0, 2}, {-2, 2}, {2, 2}, {0, 4}, {1.5, 0.3}}) {
    const auto q = GaussianQ::from_moments(s.mu, s.sigma2);
    for (double x : {-5.0, -2.0, 0.0, 0.7, 2.0, 5.0}) {
      const Vec2 sc = q.score_eta(x);
      for (int j = 0; j < 2; ++j) {
        const double fd = d_eta(q, j, 1e-6, [&](const GaussianQ& qq) { return qq.log_density(x); });
        res.worst = std::max(res.worst, rel_err(sc(j), fd));
      }
    }
  }
  res.passed = res.worst <= tol;
  return res;
}

/// Sampler-derivative estimators against finite differences of their own
/// fixed-noise Monte Carlo sums, with h = log q_eta0 - log p held fixed.
inline SuiteResult path_gradient_finite_difference(double tol = 1e-6) {
  SuiteResult res{"path-gradient finite differences"};
  const Target t = logistic_target();
  constexpr double step = 1e-6;
  for (const auto& s : std::vector<Setting>{{0, 2}, {-2, 2}, {2, 2}, {0, 4}}) {
    const auto q = GaussianQ::from_moments(s.mu, s.sigma2);
    const auto batch = sample(q, derive_key({0xfdULL, static_cast<std::uint64_t>(s.mu + 10)}), 50);
    auto h = [&](double x) { return q.log_density(x) - t.log_p(x); };
    auto mc_mean = [&](const GaussianQ& qq, const std::function<double(double)>& fn) {
      double acc = 0.0;
      for (double e : batch.noise) acc += fn(qq.transform(e));
      return acc / static_cast<double>(batch.size());
    };
    Vec2 v_fd;
    Mat2 m_fd;
    for (int k = 0; k < 2; ++k) {
      v_fd(k) = d_eta(q, k, step, [&](const GaussianQ& qq) { return mc_mean(qq, h); });
      m_fd(k, 0) = d_eta(q, k, step, [&](const GaussianQ& qq) { return mc_mean(qq, [](double x) { return x; }); });
      m_fd(k, 1) =
          d_eta(q, k, step, [&](const GaussianQ& qq) { return mc_mean(qq, [](double x) { return x * x; }); });
    }
    const Vec2 kingma = est_kingma_reparam(q, t, batch).value;
    for (int k = 0; k < 2; ++k) res.worst = std::max(res.worst, rel_err(kingma(k), v_fd(k)));

    const Vec2 greg = est_greg_pathgrad(q, t, batch).value;
    const Vec2 greg_fd = q.exact_suffstat_cov() * solve2(m_fd, v_fd).x;
    for (int k = 0; k < 2; ++k) res.worst = std::max(res.worst, rel_err(greg(k), greg_fd(k)));

    // per-draw terms of cv-ideal-grad
    const auto ev = detail::evaluate(q, t, batch);
    const Mat2 c = q.exact_suffstat_cov();
    for (int i = 0; i < 2; ++i) {
      const auto terms = detail::path_terms(q, *t.grad_x, ev, c, i);
      for (std::size_t j = 0; j < batch.size(); ++j) {
        const double e = batch.noise[j];
        const double f_fd = d_eta(q, i, step, [&](const GaussianQ& qq) { return h(qq.transform(e)); });
        res.worst = std::max(res.worst, rel_err(terms.f[j], f_fd));
        for (int m = 0; m < 2; ++m) {
          const double t_fd = d_eta(q, i, step, [&](const GaussianQ& qq) {
            return GaussianQ::suffstat(qq.transform(e))(m);
          });
          res.worst = std::max(res.worst, rel_err(terms.h[j](m) + c(i, m), t_fd));
        }
      }
    }
  }
  res.passed = res.worst <= tol;
  return res;
}

inline std::vector<SuiteResult> run_all() {
  return {exactness(), covariance_identity(), score_finite_difference(),
          path_gradient_finite_difference()};
}

}  // namespace selftest
}  // namespace vbcv
