#include <gtest/gtest.h>

#include <cmath>

#include "oracle.hpp"
#include "vbcv/quadrature.hpp"

using namespace vbcv;

namespace {

struct Frozen {
  double mu, s2, g1, g2, kl;
};

// 50-digit reference integrals (mpmath), logistic target.
constexpr Frozen kFrozen[] = {
    {0, 2, -1.0, -1.2736763079367389, -0.86285021576461847},
    {-2, 2, -1.6321205588285577, 4.9970415637113041, 0.47566236651623615},
    {2, 2, -0.36787944117144232, -3.0029584362886959, -1.5243376334837639},
    {0, 4, -2.0, -1.5771779615913647, -1.0443713257132348},
};

double double_factorial(int n) {
  double r = 1;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

}  // namespace

TEST(GhRule, WeightsSumToOneAndRuleIsSymmetric) {
  for (int n : {8, 32, 64, 128}) {
    const auto r = GhRule::make(n);
    ASSERT_EQ(r.order(), static_cast<std::size_t>(n));
    double s = 0;
    for (double w : r.weights) {
      EXPECT_GT(w, 0.0);
      s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-13);
    for (int i = 0; i < n; ++i) {
      EXPECT_EQ(r.nodes[i], -r.nodes[n - 1 - i]);
      EXPECT_EQ(r.weights[i], r.weights[n - 1 - i]);
    }
  }
  EXPECT_THROW(GhRule::make(0), std::invalid_argument);
}

TEST(GhRule, IntegratesStandardNormalMomentsExactly) {
  const auto r = GhRule::make(32);
  for (int k = 0; k <= 30; ++k) {
    double m = 0, mag = 0;
    for (std::size_t i = 0; i < r.order(); ++i) {
      m += r.weights[i] * std::pow(r.nodes[i], k);
      mag += r.weights[i] * std::pow(std::abs(r.nodes[i]), k);
    }
    const double want = k % 2 ? 0.0 : double_factorial(k - 1);
    EXPECT_NEAR(m, want, 1e-10 * mag) << "moment " << k;
  }
}

TEST(Quadrature, MatchesFrozenReferenceValues) {
  const Target t = logistic_target();
  for (const auto& f : kFrozen) {
    const auto q = GaussianQ::from_moments(f.mu, f.s2);
    const Vec2 g = ground_truth_gradient(q, t);
    EXPECT_NEAR(g(0), f.g1, 1e-12);
    EXPECT_NEAR(g(1), f.g2, 1e-12);
    EXPECT_NEAR(kl_divergence(q, t), f.kl, 1e-12);
  }
}

TEST(Quadrature, MatchesTrapezoidOracle) {
  const Target t = logistic_target();
  for (auto [mu, s2] : {std::pair{0.5, 1.0}, {-3.0, 0.3}, {1.0, 6.0}}) {
    const auto g = ground_truth_gradient(GaussianQ::from_moments(mu, s2), t);
    const auto o = oracle::logistic_kl_gradient(mu, s2);
    EXPECT_NEAR(g(0), o[0], 1e-8);
    EXPECT_NEAR(g(1), o[1], 1e-8);
  }
}

TEST(Quadrature, Order64And128Agree) {
  const Target t = logistic_target();
  const auto r64 = GhRule::make(64);
  for (const auto& f : kFrozen) {
    const auto q = GaussianQ::from_moments(f.mu, f.s2);
    EXPECT_LT((ground_truth_gradient(q, t, r64) - ground_truth_gradient(q, t)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Quadrature, GradientIsFiniteDifferenceOfKl) {
  const Target t = logistic_target();
  const auto q = GaussianQ::from_moments(0, 2);
  const Vec2 g = ground_truth_gradient(q, t);
  const double h = 1e-5;
  for (int j = 0; j < 2; ++j) {
    Vec2 ep = q.eta(), em = q.eta();
    ep(j) += h;
    em(j) -= h;
    const double fd =
        (kl_divergence(GaussianQ::from_natural(ep), t) - kl_divergence(GaussianQ::from_natural(em), t)) / (2 * h);
    EXPECT_NEAR(g(j), fd, 1e-6);
  }
}

TEST(Quadrature, GaussianTargetGradientIsCovarianceTimesEtaGap) {
  const auto q = GaussianQ::from_moments(-1, 2);
  const auto tg = gaussian_target(0.5, 0.7);
  const Vec2 want = q.exact_suffstat_cov() * (q.eta() - tg.eta_tilde);
  EXPECT_LT((ground_truth_gradient(q, tg.to_target()) - want).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(Quadrature, CovOfSufficientStatisticsMatchesClosedForm) {
  const auto rule = GhRule::make(32);
  const auto q = GaussianQ::from_moments(2, 2);
  auto T = [](double x) -> Eigen::VectorXd { return GaussianQ::suffstat(x); };
  const Eigen::MatrixXd c = cov(q, T, T, rule);
  EXPECT_LT((c - Eigen::MatrixXd(q.exact_suffstat_cov())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Quadrature, NonFiniteIntegrandReportsThePoint) {
  const auto q = GaussianQ::from_moments(0, 1);
  Target bad{"bad", [](double x) { return x > 3 ? NAN : 0.0; }, std::nullopt, std::nullopt};
  try {
    ground_truth_gradient(q, bad);
    FAIL() << "expected evaluation_error";
  } catch (const evaluation_error& e) {
    EXPECT_GT(e.point(), 3.0);
  }
  EXPECT_THROW(expect(q, [](double x) { return 1.0 / (x - x); }), evaluation_error);
}
