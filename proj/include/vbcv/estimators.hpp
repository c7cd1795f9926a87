#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vbcv/core.hpp"
#include "vbcv/gaussian.hpp"
#include "vbcv/targets.hpp"

namespace vbcv {

/**
 * Stochastic estimators of grad_eta KL(q || p).
 *
 * Notation used below: s(x) = T(x) - E_q[T] is the score in eta,
 * f(x) = log q(x) - log p(x) is the KL integrand, C = Cov_q[T, T] is the
 * exact sufficient-statistic covariance, and J(eps) = dx/deta is the
 * Jacobian of the sampler x = mu + sigma * eps.
 */
enum class EstimatorId {
  simple,
  cov,
  cv_ideal,
  cv_regression,
  cv_ideal_grad,
  ranganath_cv,
  delta_method,
  kingma_reparam,
  greg_samplecov,
  greg_pathgrad,
};

inline constexpr std::array<EstimatorId, 10> kAllEstimators = {
    EstimatorId::simple,         EstimatorId::cov,           EstimatorId::cv_ideal,
    EstimatorId::cv_regression,  EstimatorId::cv_ideal_grad, EstimatorId::ranganath_cv,
    EstimatorId::delta_method,   EstimatorId::kingma_reparam, EstimatorId::greg_samplecov,
    EstimatorId::greg_pathgrad,
};

inline constexpr std::string_view to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::simple: return "simple";
    case EstimatorId::cov: return "cov";
    case EstimatorId::cv_ideal: return "cv-ideal";
    case EstimatorId::cv_regression: return "cv-regression";
    case EstimatorId::cv_ideal_grad: return "cv-ideal-grad";
    case EstimatorId::ranganath_cv: return "ranganath-cv";
    case EstimatorId::delta_method: return "delta-method";
    case EstimatorId::kingma_reparam: return "kingma-reparam";
    case EstimatorId::greg_samplecov: return "greg-samplecov";
    case EstimatorId::greg_pathgrad: return "greg-pathgrad";
  }
  return "?";
}

inline std::optional<EstimatorId> parse_estimator(std::string_view name) {
  for (auto id : kAllEstimators)
    if (to_string(id) == name) return id;
  return std::nullopt;
}

inline constexpr std::size_t index_of(EstimatorId id) { return static_cast<std::size_t>(id); }

/// Only the greg-* regression estimators are biased.
inline constexpr bool is_unbiased(EstimatorId id) {
  return id != EstimatorId::greg_samplecov && id != EstimatorId::greg_pathgrad;
}

inline constexpr bool needs_grad(EstimatorId id) {
  return id == EstimatorId::cv_ideal_grad || id == EstimatorId::delta_method ||
         id == EstimatorId::kingma_reparam || id == EstimatorId::greg_pathgrad;
}

inline constexpr bool needs_hess(EstimatorId id) { return id == EstimatorId::delta_method; }

struct EstimatorConfig {
  std::size_t total_samples = 50;
  // fraction of the draws used to fit control-variate coefficients
  double cv_split = 0.5;
  // ridge for near-singular 2x2 solves; 0 selects the pseudo-inverse instead
  double jitter = 0.0;
  // kingma-reparam: differentiate log q through its explicit eta-dependence too
  bool kingma_total_derivative = false;
  // delta-method: subtract the Taylor control variate with coefficient 1 on one
  // undivided batch instead of fitting the coefficient on the coefficient batch
  bool delta_unit_coefficient = false;

  bool uses_split(EstimatorId id) const {
    switch (id) {
      case EstimatorId::cv_ideal:
      case EstimatorId::cv_regression:
      case EstimatorId::cv_ideal_grad:
      case EstimatorId::ranganath_cv: return true;
      case EstimatorId::delta_method: return !delta_unit_coefficient;
      default: return false;
    }
  }

  std::size_t coef_samples() const {
    return static_cast<std::size_t>(std::lround(cv_split * static_cast<double>(total_samples)));
  }

  /// Throws std::invalid_argument if the budget can't serve `id`.
  void validate(EstimatorId id) const {
    if (total_samples < 2) throw std::invalid_argument("samples must be >= 2");
    if (!(jitter >= 0.0)) throw std::invalid_argument("jitter must be >= 0");
    if (id == EstimatorId::greg_samplecov && total_samples < 3)
      throw std::invalid_argument("greg-samplecov needs samples >= 3");
    if (uses_split(id)) {
      if (!(cv_split > 0.0 && cv_split < 1.0))
        throw std::invalid_argument("split must lie strictly between 0 and 1");
      const std::size_t head = coef_samples();
      if (head < 2 || total_samples - head < 2)
        throw std::invalid_argument(std::string(to_string(id)) +
                                    ": both split halves need >= 2 samples (samples=" +
                                    std::to_string(total_samples) + ")");
    }
  }
};

struct EstimateAux {
  std::optional<Vec2> g_nat;
  // row i holds the control-variate coefficients used for gradient component i
  std::optional<Mat2> alpha;
  bool regularized = false;
};

struct GradEstimate {
  Vec2 value = Vec2::Zero();
  EstimatorId id = EstimatorId::simple;
  std::size_t samples_used = 0;
  EstimateAux aux;
};

namespace detail {

// Per-draw quantities shared by all estimators.
struct Evaluated {
  std::vector<double> x, eps, f;
  std::vector<Vec2> score;

  std::size_t size() const noexcept { return x.size(); }
};

inline Evaluated evaluate(const GaussianQ& q, const Target& t, const DrawBatch& b) {
  Evaluated e;
  const std::size_t n = b.size();
  e.x = b.draws;
  e.eps = b.noise;
  e.f.resize(n);
  e.score.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double lp = t.log_p(b.draws[j]);
    if (!std::isfinite(lp)) throw evaluation_error("non-finite log p at a draw", b.draws[j]);
    e.f[j] = q.log_density(b.draws[j]) - lp;
    e.score[j] = q.score_eta(b.draws[j]);
  }
  return e;
}

inline Vec2 mean(std::span<const Vec2> v) {
  Vec2 m = Vec2::Zero();
  for (const auto& x : v) m += x;
  return m / static_cast<double>(v.size());
}

inline double mean(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  return m / static_cast<double>(v.size());
}

// 1/(n-1) sample covariances of the score with itself and with f.
struct SampleCov {
  Mat2 ss = Mat2::Zero();
  Vec2 sf = Vec2::Zero();
};

inline SampleCov sample_cov(const Evaluated& e) {
  const std::size_t n = e.size();
  const Vec2 ms = mean(e.score);
  const double mf = mean(e.f);
  SampleCov c;
  for (std::size_t j = 0; j < n; ++j) {
    const Vec2 d = e.score[j] - ms;
    c.ss += d * d.transpose();
    c.sf += d * (e.f[j] - mf);
  }
  const double norm = 1.0 / static_cast<double>(n - 1);
  c.ss *= norm;
  c.sf *= norm;
  return c;
}

// Intercept regression of y on the two columns of h: returns the slope vector
// V^-1 c with V, c the 1/(n-1) sample (co)variances.
inline Solve2Result regress(std::span<const Vec2> h, std::span<const double> y, double jitter) {
  const std::size_t n = h.size();
  const Vec2 mh = mean(h);
  const double my = mean(y);
  Mat2 v = Mat2::Zero();
  Vec2 c = Vec2::Zero();
  for (std::size_t j = 0; j < n; ++j) {
    const Vec2 d = h[j] - mh;
    v += d * d.transpose();
    c += d * (y[j] - my);
  }
  const double norm = 1.0 / static_cast<double>(n - 1);
  return solve2(v * norm, c * norm, jitter);
}

// Per-draw control-variate terms for one gradient component: the integrand
// contribution f_j and the zero-mean control vector h_j.
struct CvTerms {
  std::vector<double> f;
  std::vector<Vec2> h;
};

// Sample-covariance form: f_j, h_j are the draws' contributions to
// Cov^[s_i, f] and Cov^[s_i, s] - C_i, so their means reproduce the sample
// covariances exactly.
inline CvTerms cov_terms(const Evaluated& e, const Mat2& exact, int i) {
  const std::size_t n = e.size();
  const double k = static_cast<double>(n) / static_cast<double>(n - 1);
  const Vec2 ms = mean(e.score);
  const double mf = mean(e.f);
  CvTerms out;
  out.f.resize(n);
  out.h.resize(n);
  const Vec2 ci = exact.row(i).transpose();
  for (std::size_t j = 0; j < n; ++j) {
    const Vec2 d = e.score[j] - ms;
    out.f[j] = k * d(i) * (e.f[j] - mf);
    out.h[j] = k * d(i) * d - ci;
  }
  return out;
}

// Sampler-derivative form: f_j = J_i(eps_j) * d/dx[log q - log p](x_j) with
// log q's eta frozen, and h_j = J_i(eps_j) * dT/dx(x_j) - C_i.
inline CvTerms path_terms(const GaussianQ& q, const ScalarFn& grad, const Evaluated& e,
                          const Mat2& exact, int i) {
  const std::size_t n = e.size();
  CvTerms out;
  out.f.resize(n);
  out.h.resize(n);
  const Vec2 ci = exact.row(i).transpose();
  for (std::size_t j = 0; j < n; ++j) {
    const double ji = q.path_jacobian(e.eps[j])(i);
    out.f[j] = ji * (q.score_x(e.x[j]) - grad(e.x[j]));
    out.h[j] = ji * GaussianQ::suffstat_dx(e.x[j]) - ci;
  }
  return out;
}

inline double apply_cv(const CvTerms& t, const Vec2& alpha) {
  double acc = 0.0;
  for (std::size_t j = 0; j < t.f.size(); ++j) acc += t.f[j] - t.h[j].dot(alpha);
  return acc / static_cast<double>(t.f.size());
}

inline void require_size(const DrawBatch& b, std::size_t n, std::string_view who) {
  if (b.size() < n)
    throw std::invalid_argument(std::string(who) + ": batch needs at least " + std::to_string(n) +
                                " draws");
}

inline GradEstimate finish(EstimatorId id, Vec2 value, std::size_t used, EstimateAux aux = {}) {
  if (!all_finite(value))
    throw evaluation_error(std::string(to_string(id)) + ": non-finite estimate", value(0));
  return GradEstimate{value, id, used, std::move(aux)};
}

}  // namespace detail

/// Plain score-function estimator: mean_j s(x_j) f(x_j).
inline GradEstimate est_simple(const GaussianQ& q, const Target& t, const DrawBatch& batch) {
  detail::require_size(batch, 1, "simple");
  const auto e = detail::evaluate(q, t, batch);
  Vec2 acc = Vec2::Zero();
  for (std::size_t j = 0; j < e.size(); ++j) acc += e.score[j] * e.f[j];
  return detail::finish(EstimatorId::simple, acc / static_cast<double>(e.size()), e.size());
}

/// Sample covariance 1/(S-1) sum_j (s_j - m^) f_j, with m^ the sample mean score.
inline GradEstimate est_cov(const GaussianQ& q, const Target& t, const DrawBatch& batch) {
  detail::require_size(batch, 2, "cov");
  const auto e = detail::evaluate(q, t, batch);
  const Vec2 m = detail::mean(e.score);
  Vec2 acc = Vec2::Zero();
  for (std::size_t j = 0; j < e.size(); ++j) acc += (e.score[j] - m) * e.f[j];
  return detail::finish(EstimatorId::cov, acc / static_cast<double>(e.size() - 1), e.size());
}

/**
 * Covariance estimator with the sample-minus-exact score covariance as control
 * variates. For component i the controls are h^i = Cov^[s_i, s] - C_i and the
 * coefficients alpha^i = Var^[h^i]^-1 Cov^[h^i, f^i] are fitted per draw on
 * `coef`. The corrected estimate f^i - h^i alpha^i is evaluated on `eval`.
 * Independent batches keep it unbiased.
 */
inline GradEstimate est_cv_ideal(const GaussianQ& q, const Target& t, const DrawBatch& coef,
                                 const DrawBatch& eval, double jitter = 0.0) {
  detail::require_size(coef, 2, "cv-ideal");
  detail::require_size(eval, 2, "cv-ideal");
  const auto ec = detail::evaluate(q, t, coef);
  const auto ee = detail::evaluate(q, t, eval);
  const Mat2 c = q.exact_suffstat_cov();
  EstimateAux aux;
  Mat2 alpha;
  Vec2 value;
  for (int i = 0; i < 2; ++i) {
    const auto fit_terms = detail::cov_terms(ec, c, i);
    const auto fit = detail::regress(fit_terms.h, fit_terms.f, jitter);
    aux.regularized |= fit.regularized;
    alpha.row(i) = fit.x.transpose();
    value(i) = detail::apply_cv(detail::cov_terms(ee, c, i), fit.x);
  }
  aux.alpha = alpha;
  return detail::finish(EstimatorId::cv_ideal, value, ec.size() + ee.size(), aux);
}

/**
 * Same control variates, but every component shares the regression
 * coefficient alpha = Cov^[T,T]^-1 Cov^[T, f] fitted on `coef` (a natural
 * gradient estimate). The estimate on `eval` is
 * Cov^[T, f] - (Cov^[T, T] - C) alpha. It has zero variance whenever log p is
 * linear in T.
 */
inline GradEstimate est_cv_regression(const GaussianQ& q, const Target& t, const DrawBatch& coef,
                                      const DrawBatch& eval, double jitter = 0.0) {
  detail::require_size(coef, 2, "cv-regression");
  detail::require_size(eval, 2, "cv-regression");
  const auto cc = detail::sample_cov(detail::evaluate(q, t, coef));
  const auto ce = detail::sample_cov(detail::evaluate(q, t, eval));
  const auto fit = solve2(cc.ss, cc.sf, jitter);
  const Mat2 c = q.exact_suffstat_cov();
  const Vec2 value = ce.sf - (ce.ss - c) * fit.x;
  EstimateAux aux;
  aux.g_nat = fit.x;
  Mat2 alpha;
  alpha.row(0) = alpha.row(1) = fit.x.transpose();
  aux.alpha = alpha;
  aux.regularized = fit.regularized;
  return detail::finish(EstimatorId::cv_regression, value, coef.size() + eval.size(), aux);
}

/**
 * cv-ideal with every covariance replaced by its sampler-derivative estimate
 * Cov^[s, h] = grad_eta (1/S) sum_j h(x(eta, eps_j)), where h is held fixed and
 * only the draw path is differentiated.
 */
inline GradEstimate est_cv_ideal_pathgrad(const GaussianQ& q, const Target& t,
                                          const DrawBatch& coef, const DrawBatch& eval,
                                          double jitter = 0.0) {
  const auto& grad = t.require_grad("cv-ideal-grad");
  detail::require_size(coef, 2, "cv-ideal-grad");
  detail::require_size(eval, 1, "cv-ideal-grad");
  const auto ec = detail::evaluate(q, t, coef);
  const auto ee = detail::evaluate(q, t, eval);
  const Mat2 c = q.exact_suffstat_cov();
  EstimateAux aux;
  Mat2 alpha;
  Vec2 value;
  for (int i = 0; i < 2; ++i) {
    const auto fit_terms = detail::path_terms(q, grad, ec, c, i);
    // for i = 0 the first control is identically zero (dx/deta1 = sigma2 is
    // constant), so this fit always takes the pseudo-inverse branch
    const auto fit = detail::regress(fit_terms.h, fit_terms.f, jitter);
    if (i == 1) aux.regularized |= fit.regularized;
    alpha.row(i) = fit.x.transpose();
    value(i) = detail::apply_cv(detail::path_terms(q, grad, ee, c, i), fit.x);
  }
  aux.alpha = alpha;
  return detail::finish(EstimatorId::cv_ideal_grad, value, ec.size() + ee.size(), aux);
}

/// Generic score control variate: per component, h_i = s_i and the scalar
/// coefficient Cov^(s_i f, s_i) / Var^(s_i) is fitted on `coef`.
inline GradEstimate est_ranganath_cv(const GaussianQ& q, const Target& t, const DrawBatch& coef,
                                     const DrawBatch& eval) {
  detail::require_size(coef, 2, "ranganath-cv");
  detail::require_size(eval, 1, "ranganath-cv");
  const auto ec = detail::evaluate(q, t, coef);
  const auto ee = detail::evaluate(q, t, eval);
  EstimateAux aux;
  Mat2 alpha = Mat2::Zero();
  Vec2 value;
  for (int i = 0; i < 2; ++i) {
    const std::size_t n = ec.size();
    double mf = 0, mh = 0;
    for (std::size_t j = 0; j < n; ++j) {
      mf += ec.score[j](i) * ec.f[j];
      mh += ec.score[j](i);
    }
    mf /= static_cast<double>(n);
    mh /= static_cast<double>(n);
    double cfh = 0, vh = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dh = ec.score[j](i) - mh;
      cfh += (ec.score[j](i) * ec.f[j] - mf) * dh;
      vh += dh * dh;
    }
    double a = 0.0;
    if (vh > 0.0)
      a = cfh / vh;
    else
      aux.regularized = true;
    alpha(i, i) = a;
    double acc = 0.0;
    for (std::size_t j = 0; j < ee.size(); ++j) acc += ee.score[j](i) * (ee.f[j] - a);
    value(i) = acc / static_cast<double>(ee.size());
  }
  aux.alpha = alpha;
  return detail::finish(EstimatorId::ranganath_cv, value, ec.size() + ee.size(), aux);
}

namespace detail {

// Second-order Taylor expansion of log p about mu, and grad_eta E_q of it
// (expansion point held fixed).
struct Taylor2 {
  double p0, p1, p2, mu;

  double operator()(double x) const {
    const double d = x - mu;
    return p0 + p1 * d + 0.5 * p2 * d * d;
  }
};

inline Taylor2 taylor_at_mean(const GaussianQ& q, const Target& t) {
  const auto& g = t.require_grad("delta-method");
  const auto& h = t.require_hess("delta-method");
  return Taylor2{t.log_p(q.mu()), g(q.mu()), h(q.mu()), q.mu()};
}

inline Vec2 grad_expected_taylor(const GaussianQ& q, const Taylor2& tay) {
  // d E[t]/d mu = p1, d E[t]/d sigma2 = p2 / 2, chained through
  // dmu/deta = (sigma2, 2 mu sigma2) and dsigma2/deta = (0, 2 sigma2^2)
  const double s2 = q.sigma2();
  return tay.p1 * Vec2(s2, 2.0 * q.mu() * s2) + tay.p2 * Vec2(0.0, s2 * s2);
}

// grad_eta E_q[log q] = grad_eta(-log(2 pi e sigma2) / 2)
inline Vec2 grad_neg_entropy(const GaussianQ& q) { return {0.0, -q.sigma2()}; }

}  // namespace detail

/**
 * Delta-method baseline. grad E_q[log q] is analytic. grad E_q[log p] is the
 * score-function estimate of E[s log p] with control variate s t(x), where t
 * is the second-order Taylor expansion of log p about mu and E[s t] is known
 * in closed form. The per-component coefficient is fitted on `coef` and
 * applied on `eval`.
 */
inline GradEstimate est_delta_method(const GaussianQ& q, const Target& t, const DrawBatch& coef,
                                     const DrawBatch& eval) {
  const auto tay = detail::taylor_at_mean(q, t);
  detail::require_size(coef, 2, "delta-method");
  detail::require_size(eval, 1, "delta-method");
  const Vec2 egrad = detail::grad_expected_taylor(q, tay);
  EstimateAux aux;
  Mat2 alpha = Mat2::Zero();
  Vec2 lp_grad;
  for (int k = 0; k < 2; ++k) {
    const std::size_t n = coef.size();
    std::vector<double> fv(n), gv(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double x = coef.draws[j];
      const double s = q.score_eta(x)(k);
      const double lp = t.log_p(x);
      if (!std::isfinite(lp)) throw evaluation_error("non-finite log p at a draw", x);
      fv[j] = s * lp;
      gv[j] = s * tay(x);
    }
    const double mf = detail::mean(fv), mg = detail::mean(gv);
    double cfg = 0, vg = 0;
    for (std::size_t j = 0; j < n; ++j) {
      cfg += (fv[j] - mf) * (gv[j] - mg);
      vg += (gv[j] - mg) * (gv[j] - mg);
    }
    double a = 0.0;
    if (vg > 0.0)
      a = cfg / vg;
    else
      aux.regularized = true;
    alpha(k, k) = a;
    double acc = 0.0;
    for (std::size_t j = 0; j < eval.size(); ++j) {
      const double x = eval.draws[j];
      const double s = q.score_eta(x)(k);
      const double lp = t.log_p(x);
      if (!std::isfinite(lp)) throw evaluation_error("non-finite log p at a draw", x);
      acc += s * lp - a * (s * tay(x) - egrad(k));
    }
    lp_grad(k) = acc / static_cast<double>(eval.size());
  }
  aux.alpha = alpha;
  return detail::finish(EstimatorId::delta_method, detail::grad_neg_entropy(q) - lp_grad,
                        coef.size() + eval.size(), aux);
}

/// Delta method with the Taylor control variate subtracted at coefficient 1
/// on a single batch: grad E[log p] ~ mean_j s_j (log p - t)(x_j) + grad E[t].
inline GradEstimate est_delta_method_unit(const GaussianQ& q, const Target& t,
                                          const DrawBatch& batch) {
  const auto tay = detail::taylor_at_mean(q, t);
  detail::require_size(batch, 1, "delta-method");
  Vec2 acc = Vec2::Zero();
  for (double x : batch.draws) {
    const double lp = t.log_p(x);
    if (!std::isfinite(lp)) throw evaluation_error("non-finite log p at a draw", x);
    acc += q.score_eta(x) * (lp - tay(x));
  }
  const Vec2 lp_grad = acc / static_cast<double>(batch.size()) + detail::grad_expected_taylor(q, tay);
  return detail::finish(EstimatorId::delta_method, detail::grad_neg_entropy(q) - lp_grad,
                        batch.size());
}

/**
 * Reparameterisation estimator: grad_eta of (1/S) sum_j [log q - log p](x(eta, eps_j)).
 * By default log q's explicit eta-dependence is held fixed (path derivative
 * only), which is the sampler-derivative form of Cov[s, log q - log p].
 * With `total_derivative` the explicit term s(x_j) is added as well.
 */
inline GradEstimate est_kingma_reparam(const GaussianQ& q, const Target& t, const DrawBatch& batch,
                                       bool total_derivative = false) {
  const auto& grad = t.require_grad("kingma-reparam");
  detail::require_size(batch, 1, "kingma-reparam");
  Vec2 acc = Vec2::Zero();
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const double x = batch.draws[j];
    const double gp = grad(x);
    if (!std::isfinite(gp)) throw evaluation_error("non-finite target gradient at a draw", x);
    acc += q.path_jacobian(batch.noise[j]) * (q.score_x(x) - gp);
    if (total_derivative) acc += q.score_eta(x);
  }
  return detail::finish(EstimatorId::kingma_reparam, acc / static_cast<double>(batch.size()),
                        batch.size());
}

/// Regression estimator C g^nat with g^nat = Cov^[T,T]^-1 Cov^[T, f], both sample
/// covariances from the same draws. Biased, low variance.
inline GradEstimate est_greg_samplecov(const GaussianQ& q, const Target& t, const DrawBatch& batch,
                                       double jitter = 0.0) {
  detail::require_size(batch, 3, "greg-samplecov");
  const auto c = detail::sample_cov(detail::evaluate(q, t, batch));
  const auto fit = solve2(c.ss, c.sf, jitter);
  EstimateAux aux;
  aux.g_nat = fit.x;
  aux.regularized = fit.regularized;
  return detail::finish(EstimatorId::greg_samplecov, q.exact_suffstat_cov() * fit.x, batch.size(),
                        aux);
}

/// Regression estimator with both covariances from sampler derivatives:
/// M = mean_j J_j dT/dx(x_j)^T, v = mean_j J_j d/dx[log q - log p](x_j),
/// g^nat = M^-1 v, value C g^nat.
inline GradEstimate est_greg_pathgrad(const GaussianQ& q, const Target& t, const DrawBatch& batch,
                                      double jitter = 0.0) {
  const auto& grad = t.require_grad("greg-pathgrad");
  detail::require_size(batch, 1, "greg-pathgrad");
  Mat2 m = Mat2::Zero();
  Vec2 v = Vec2::Zero();
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const double x = batch.draws[j];
    const double gp = grad(x);
    if (!std::isfinite(gp)) throw evaluation_error("non-finite target gradient at a draw", x);
    const Vec2 jac = q.path_jacobian(batch.noise[j]);
    m += jac * GaussianQ::suffstat_dx(x).transpose();
    v += jac * (q.score_x(x) - gp);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  const auto fit = solve2(m * inv, v * inv, jitter);
  EstimateAux aux;
  aux.g_nat = fit.x;
  aux.regularized = fit.regularized;
  return detail::finish(EstimatorId::greg_pathgrad, q.exact_suffstat_cov() * fit.x, batch.size(),
                        aux);
}

/// Runs `id` on a batch of cfg.total_samples draws. Split methods take the
/// first coef_samples() draws for coefficients and the rest for evaluation.
inline GradEstimate estimate(EstimatorId id, const GaussianQ& q, const Target& t,
                             const DrawBatch& batch, const EstimatorConfig& cfg) {
  cfg.validate(id);
  if (batch.size() != cfg.total_samples)
    throw std::invalid_argument("estimate: batch size " + std::to_string(batch.size()) +
                                " != configured samples " + std::to_string(cfg.total_samples));
  if (needs_grad(id)) t.require_grad(to_string(id));
  if (needs_hess(id)) t.require_hess(to_string(id));
  if (cfg.uses_split(id)) {
    const auto [coef, eval] = split_batch(batch, cfg.coef_samples());
    switch (id) {
      case EstimatorId::cv_ideal: return est_cv_ideal(q, t, coef, eval, cfg.jitter);
      case EstimatorId::cv_regression: return est_cv_regression(q, t, coef, eval, cfg.jitter);
      case EstimatorId::cv_ideal_grad: return est_cv_ideal_pathgrad(q, t, coef, eval, cfg.jitter);
      case EstimatorId::ranganath_cv: return est_ranganath_cv(q, t, coef, eval);
      case EstimatorId::delta_method: return est_delta_method(q, t, coef, eval);
      default: break;
    }
  }
  switch (id) {
    case EstimatorId::simple: return est_simple(q, t, batch);
    case EstimatorId::cov: return est_cov(q, t, batch);
    case EstimatorId::delta_method: return est_delta_method_unit(q, t, batch);
    case EstimatorId::kingma_reparam:
      return est_kingma_reparam(q, t, batch, cfg.kingma_total_derivative);
    case EstimatorId::greg_samplecov: return est_greg_samplecov(q, t, batch, cfg.jitter);
    case EstimatorId::greg_pathgrad: return est_greg_pathgrad(q, t, batch, cfg.jitter);
    default: break;
  }
  throw std::logic_error("estimate: unhandled estimator");
}

/// Draws cfg.total_samples from q with `seed`, then runs `id`.
inline GradEstimate estimate(EstimatorId id, const GaussianQ& q, const Target& t,
                             const EstimatorConfig& cfg, std::uint64_t seed) {
  cfg.validate(id);
  return estimate(id, q, t, sample(q, seed, cfg.total_samples), cfg);
}

}  // namespace vbcv
