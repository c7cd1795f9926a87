#include <gtest/gtest.h>

#include <sstream>

#include "vbcv/benchmark.hpp"
#include "vbcv/report.hpp"

using namespace vbcv;

namespace {

BenchmarkSpec small_spec(std::size_t reps = 300) {
  BenchmarkSpec s;
  s.replications = reps;
  return s;
}

std::string csv(const MseTable& t) {
  std::ostringstream os;
  write_csv(os, t);
  return os.str();
}

}  // namespace

TEST(Benchmark, DefaultsMatchReferenceConfiguration) {
  const BenchmarkSpec s;
  EXPECT_EQ(s.samples, 50u);
  EXPECT_EQ(s.cv_split, 0.5);
  EXPECT_EQ(s.replications, 100000u);
  EXPECT_EQ(s.base_seed, 0u);
  EXPECT_EQ(s.target, "logistic");
  EXPECT_EQ(s.estimators.size(), 10u);
  ASSERT_EQ(s.settings.size(), 4u);
  EXPECT_EQ(s.settings[1], (Setting{-2, 2}));
  EXPECT_EQ(s.settings[3], (Setting{0, 4}));
}

TEST(Benchmark, OutputIndependentOfThreadCount) {
  auto s = small_spec();
  s.threads = 1;
  const auto a = csv(run_benchmark(s));
  s.threads = 8;
  EXPECT_EQ(a, csv(run_benchmark(s)));
  s.threads = 3;
  EXPECT_EQ(a, csv(run_benchmark(s)));
}

TEST(Benchmark, SeedChangesResults) {
  auto s = small_spec(50);
  const auto a = csv(run_benchmark(s));
  s.base_seed = 1;
  EXPECT_NE(a, csv(run_benchmark(s)));
}

TEST(Benchmark, SingleReplicationHasZeroStandardError) {
  auto s = small_spec(1);
  for (const auto& r : run_benchmark(s).rows) {
    EXPECT_EQ(r.mse_stderr, 0.0);
    EXPECT_EQ(r.replications, 1u);
    EXPECT_NEAR(r.mse, r.mean_bias.cwiseAbs2().dot(r.weights), 1e-12 * std::max(1.0, r.mse));
  }
}

TEST(Benchmark, PairedModeSharesDrawsAcrossEstimators) {
  EXPECT_EQ(replication_seed(0, 1, 2, 3, true), replication_seed(0, 7, 2, 3, true));
  EXPECT_NE(replication_seed(0, 1, 2, 3, false), replication_seed(0, 7, 2, 3, false));
  EXPECT_NE(replication_seed(0, 1, 2, 3, true), replication_seed(0, 1, 2, 4, true));
}

TEST(Benchmark, MissingDerivativesGiveUnavailableCells) {
  auto s = small_spec(20);
  Target bare{"bare", logistic_target().log_p, std::nullopt, std::nullopt};
  const auto t = run_benchmark(s, bare);
  for (const auto& r : t.rows) {
    const bool needs = needs_grad(r.estimator) || needs_hess(r.estimator);
    EXPECT_EQ(r.unavailable.has_value(), needs) << to_string(r.estimator);
  }
  const auto text = csv(t);
  EXPECT_NE(text.find("kingma-reparam,0,2,n/a,n/a,n/a,n/a,"), std::string::npos);
  std::ostringstream tab;
  write_table(tab, t);
  EXPECT_NE(tab.str().find("n/a"), std::string::npos);
  EXPECT_TRUE(to_json(t)[7]["mse"].is_null());
}

TEST(Benchmark, ValidationErrors) {
  auto s = small_spec(0);
  EXPECT_THROW(run_benchmark(s), std::invalid_argument);
  s = small_spec();
  s.settings.clear();
  EXPECT_THROW(run_benchmark(s), std::invalid_argument);
  s = small_spec();
  s.settings = {{0, -1}};
  EXPECT_THROW(run_benchmark(s), std::domain_error);
  s = small_spec();
  s.samples = 3;
  EXPECT_THROW(run_benchmark(s), std::invalid_argument);
  s = small_spec();
  s.target = "nope";
  EXPECT_THROW(run_benchmark(s), std::invalid_argument);
}

TEST(Benchmark, SimpleEstimatorMseIsInTheExpectedRange) {
  auto s = small_spec(20000);
  s.settings = {{0, 2}};
  s.estimators = {EstimatorId::simple, EstimatorId::greg_pathgrad};
  const auto t = run_benchmark(s);
  const auto* simple = t.find(EstimatorId::simple, {0, 2});
  EXPECT_NEAR(simple->mse, 0.5194, 4 * simple->mse_stderr + 0.02);
  const auto* greg = t.find(EstimatorId::greg_pathgrad, {0, 2});
  EXPECT_LT(greg->mse, 0.001);
}

TEST(Benchmark, WeightsFollowTheMetric) {
  EXPECT_EQ(metric_weights(MseMetric::precision), Vec2(1, 0.25));
  EXPECT_EQ(metric_weights(MseMetric::eta), Vec2(1, 1));
  EXPECT_EQ(parse_metric("eta2"), MseMetric::eta2);
  EXPECT_FALSE(parse_metric("l2").has_value());
  auto s = small_spec(200);
  s.settings = {{2, 2}};
  s.estimators = {EstimatorId::cov};
  const double p = run_benchmark(s).rows[0].mse;
  s.metric = MseMetric::eta1;
  const double a = run_benchmark(s).rows[0].mse;
  s.metric = MseMetric::eta2;
  const double b = run_benchmark(s).rows[0].mse;
  EXPECT_NEAR(p, a + 0.25 * b, 1e-12 * p);
}

TEST(Benchmark, BiasDecompositionAddsUp) {
  auto s = small_spec(500);
  for (const auto& r : run_benchmark(s).rows) {
    const auto b = bias_decomposition(r);
    EXPECT_GE(b.variance, 0.0);
    EXPECT_NEAR(b.squared_bias + b.variance, r.mse, 1e-12 * r.mse);
  }
}

TEST(Report, CsvSchemaAndEmptyTable) {
  std::ostringstream os;
  write_csv(os, MseTable{});
  EXPECT_EQ(os.str(), std::string(kMseCsvHeader) + "\n");
  EXPECT_EQ(std::string(kMseCsvHeader), "estimator,mu,sigma2,mse,mse_stderr,bias1,bias2,gt1,gt2,replications");
}

TEST(Report, TableColumnsFollowSettingOrder) {
  auto s = small_spec(10);
  s.estimators = {EstimatorId::simple};
  std::ostringstream os;
  write_table(os, run_benchmark(s));
  const auto text = os.str();
  const auto a = text.find("mu=0,sigma2=2"), b = text.find("mu=-2,sigma2=2"), c = text.find("mu=2,sigma2=2"),
             d = text.find("mu=0,sigma2=4");
  ASSERT_NE(d, std::string::npos);
  EXPECT_LT(a, b);
  EXPECT_LT(b, c);
  EXPECT_LT(c, d);
}

TEST(Report, JsonMirrorsCsvFields) {
  auto s = small_spec(10);
  s.estimators = {EstimatorId::cov};
  s.settings = {{0, 2}};
  const auto t = run_benchmark(s);
  const auto j = to_json(t);
  ASSERT_EQ(j.size(), 1u);
  for (const char* k : {"estimator", "mu", "sigma2", "mse", "mse_stderr", "bias1", "bias2", "gt1", "gt2",
                        "replications"})
    EXPECT_TRUE(j[0].contains(k)) << k;
  EXPECT_EQ(j[0]["mse"].get<double>(), t.rows[0].mse);
  EXPECT_EQ(j.dump(), to_json(run_benchmark(s)).dump());
}

TEST(Report, FormatDoubleRoundTrips) {
  for (double v : {0.1, -1.2736763079367389, 1e-300, 12345.678, 0.0})
    EXPECT_EQ(std::stod(format_double(v)), v);
}
