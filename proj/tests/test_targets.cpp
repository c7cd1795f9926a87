#include <gtest/gtest.h>

#include <cmath>

#include "oracle.hpp"
#include "vbcv/targets.hpp"

using namespace vbcv;

TEST(Logistic, LogDensityIsStableForLargeArguments) {
  const Target t = logistic_target();
  EXPECT_NEAR(t.log_p(-800.0), -800.0, 1e-12);
  EXPECT_NEAR(t.log_p(800.0), 0.0, 1e-300);
  EXPECT_NEAR(t.log_p(0.0), -std::log(2.0), 1e-15);
  for (double x : {-30.0, -3.0, -0.2, 0.0, 1.0, 25.0}) EXPECT_NEAR(t.log_p(x), oracle::log_sigmoid(x), 1e-14);
}

TEST(Logistic, GradientInUnitIntervalAndMatchesFiniteDifference) {
  const Target t = logistic_target();
  ASSERT_TRUE(t.has_grad() && t.has_hess());
  const double h = 1e-5;
  for (double x : {-20.0, -2.0, -0.5, 0.0, 0.5, 2.0, 20.0}) {
    const double g = (*t.grad_x)(x);
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, 1.0);
    EXPECT_NEAR(g, (t.log_p(x + h) - t.log_p(x - h)) / (2 * h), 1e-8);
    EXPECT_NEAR((*t.hess_x)(x), ((*t.grad_x)(x + h) - (*t.grad_x)(x - h)) / (2 * h), 1e-8);
  }
  EXPECT_NEAR((*t.grad_x)(-800.0), 1.0, 1e-15);
  EXPECT_EQ((*t.hess_x)(800.0), -0.0);
}

TEST(GaussianTarget, IsNormalisedAndInFamily) {
  const auto tg = gaussian_target(1.0, 3.0);
  const Target t = tg.to_target();
  EXPECT_NEAR(oracle::normal_expect(1.0, 3.0, [&](double x) {
                return std::exp(t.log_p(x) - oracle::log_normal(x, 1.0, 3.0));
              }),
              1.0, 1e-12);
  EXPECT_NEAR(tg.eta_tilde(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(tg.eta_tilde(1), -1.0 / 6.0, 1e-15);
  for (double x : {-2.0, 0.0, 4.0}) {
    EXPECT_NEAR(t.log_p(x), tg.log_p(x), 1e-14);
    EXPECT_NEAR((*t.grad_x)(x), -(x - 1.0) / 3.0, 1e-14);
    EXPECT_NEAR((*t.hess_x)(x), -1.0 / 3.0, 1e-15);
  }
}

TEST(Targets, ParseByName) {
  EXPECT_EQ(parse_target("logistic").name, "logistic");
  const Target g = parse_target("gaussian:1.5:0.25");
  EXPECT_NEAR(g.log_p(1.5), oracle::log_normal(1.5, 1.5, 0.25), 1e-14);
  EXPECT_THROW(parse_target("probit"), std::invalid_argument);
  EXPECT_THROW(parse_target("gaussian:1"), std::invalid_argument);
  EXPECT_THROW(parse_target("gaussian:0:-1"), std::exception);
  EXPECT_THROW(parse_target("gaussian:a:b"), std::invalid_argument);
}

TEST(Targets, MissingDerivativesRaiseCapabilityError) {
  Target t{"bare", [](double x) { return -x * x; }, std::nullopt, std::nullopt};
  EXPECT_THROW(t.require_grad("kingma-reparam"), capability_error);
  EXPECT_THROW(t.require_hess("delta-method"), capability_error);
}
