#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "vbcv/core.hpp"
#include "vbcv/gaussian.hpp"
#include "vbcv/targets.hpp"

namespace vbcv {

/// Gauss-Hermite rule for the standard normal measure: sum_k w_k f(z_k) ~ E[f(Z)].
struct GhRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t order() const noexcept { return nodes.size(); }

  /// Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix of the
  /// probabilists' Hermite recurrence (zero diagonal, off-diagonal sqrt(k)),
  /// weights are the squared first components of the normalised eigenvectors.
  static GhRule make(int order) {
    if (order < 1) throw std::invalid_argument("GhRule: order must be >= 1");
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
    Eigen::VectorXd sub(std::max(order - 1, 0));
    for (int k = 1; k < order; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw std::runtime_error("GhRule: eigen solve failed");
    GhRule r;
    r.nodes.resize(order);
    r.weights.resize(order);
    for (int k = 0; k < order; ++k) {
      r.nodes[k] = es.eigenvalues()(k);
      const double v0 = es.eigenvectors()(0, k);
      r.weights[k] = v0 * v0;
    }
    // symmetrise: the recurrence is even, small asymmetries are rounding noise
    for (int k = 0; k < order / 2; ++k) {
      const int j = order - 1 - k;
      const double z = 0.5 * (r.nodes[j] - r.nodes[k]);
      const double w = 0.5 * (r.weights[j] + r.weights[k]);
      r.nodes[k] = -z;
      r.nodes[j] = z;
      r.weights[k] = r.weights[j] = w;
    }
    if (order % 2 == 1) r.nodes[order / 2] = 0.0;
    return r;
  }
};

inline const GhRule& default_rule() {
  static const GhRule rule = GhRule::make(128);
  return rule;
}

/// E_q[f(x)].
inline double expect(const GaussianQ& q, const std::function<double(double)>& f,
                     const GhRule& rule = default_rule()) {
  double acc = 0.0;
  for (std::size_t k = 0; k < rule.order(); ++k) {
    const double x = q.transform(rule.nodes[k]);
    const double v = f(x);
    if (!std::isfinite(v)) throw evaluation_error("expect: non-finite integrand at quadrature node", x);
    acc += rule.weights[k] * v;
  }
  return acc;
}

/// Cov_q[f, g] = E[f g^T] - E[f] E[g]^T for vector-valued f, g.
inline Eigen::MatrixXd cov(const GaussianQ& q, const std::function<Eigen::VectorXd(double)>& f,
                           const std::function<Eigen::VectorXd(double)>& g,
                           const GhRule& rule = default_rule()) {
  Eigen::VectorXd ef, eg;
  Eigen::MatrixXd efg;
  for (std::size_t k = 0; k < rule.order(); ++k) {
    const double x = q.transform(rule.nodes[k]);
    const Eigen::VectorXd fv = f(x);
    const Eigen::VectorXd gv = g(x);
    if (!fv.allFinite() || !gv.allFinite())
      throw evaluation_error("cov: non-finite integrand at quadrature node", x);
    if (k == 0) {
      ef = Eigen::VectorXd::Zero(fv.size());
      eg = Eigen::VectorXd::Zero(gv.size());
      efg = Eigen::MatrixXd::Zero(fv.size(), gv.size());
    }
    const double w = rule.weights[k];
    ef += w * fv;
    eg += w * gv;
    efg += w * fv * gv.transpose();
  }
  return efg - ef * eg.transpose();
}

/// KL(q || p) up to the (unknown) log normaliser of p: E_q[log q - log p].
inline double kl_divergence(const GaussianQ& q, const Target& t, const GhRule& rule = default_rule()) {
  return expect(q, [&](double x) { return q.log_density(x) - t.log_p(x); }, rule);
}

/// Reference gradient grad_eta KL(q || p) = Cov_q[T(x), log q(x) - log p(x)].
/// The score T - E[T] is exactly centred, so this is E_q[score * (log q - log p)].
inline Vec2 ground_truth_gradient(const GaussianQ& q, const Target& t,
                                  const GhRule& rule = default_rule()) {
  Vec2 acc = Vec2::Zero();
  double mean_f = 0.0;
  Vec2 mean_s = Vec2::Zero();
  for (std::size_t k = 0; k < rule.order(); ++k) {
    const double x = q.transform(rule.nodes[k]);
    const double f = q.log_density(x) - t.log_p(x);
    if (!std::isfinite(f)) throw evaluation_error("ground_truth_gradient: non-finite log p", x);
    const Vec2 s = q.score_eta(x);
    acc += rule.weights[k] * f * s;
    mean_f += rule.weights[k] * f;
    mean_s += rule.weights[k] * s;
  }
  // remove the quadrature's residual score mean
  return acc - mean_s * mean_f;
}

}  // namespace vbcv
