#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"
#include "vqdr/stats.hpp"

using namespace vqdr;
using test::error_code_of;

namespace {

double f_p(double f, double df1, double df2) { return oracle::f_sf(f, df1, df2); }
double t_p_one(double t, double df) { return oracle::t_sf(t, df); }
double t_oracle(const std::vector<double>& a, const std::vector<double>& b) { return oracle::paired_t(a, b).t; }

}  // namespace

TEST(IncompleteBeta, EdgesAndSymmetry) {
  EXPECT_EQ(incomplete_beta(2.0, 3.0, 0.0), 0.0);
  EXPECT_EQ(incomplete_beta(2.0, 3.0, 1.0), 1.0);
  for (double x : {0.1, 0.3, 0.5, 0.8, 0.95}) {
    EXPECT_NEAR(incomplete_beta(2.5, 4.0, x) + incomplete_beta(4.0, 2.5, 1.0 - x), 1.0, 1e-12);
  }
  // I_x(1, 1) = x and I_x(a, 1) = x^a.
  EXPECT_NEAR(incomplete_beta(1.0, 1.0, 0.37), 0.37, 1e-14);
  EXPECT_NEAR(incomplete_beta(3.0, 1.0, 0.6), 0.216, 1e-14);
  EXPECT_EQ(error_code_of([] { incomplete_beta(0.0, 1.0, 0.5); }), ErrorCode::InvalidArgument);
}

TEST(Distributions, MatchBoost) {
  for (double df : {1.0, 2.0, 5.0, 16.0, 60.0}) {
    for (double t : {-3.0, -0.5, 0.0, 0.7, 2.2, 8.0}) {
      EXPECT_NEAR(student_t_sf(t, df), t_p_one(t, df), 1e-12) << df << ' ' << t;
    }
  }
  for (auto [d1, d2] : {std::pair{1.0, 1.0}, {7.0, 16.0}, {3.0, 40.0}, {12.0, 5.0}}) {
    for (double f : {0.0, 0.3, 1.0, 2.5, 14.23, 100.0}) {
      EXPECT_NEAR(f_sf(f, d1, d2), f_p(f, d1, d2), 1e-12) << d1 << ' ' << d2 << ' ' << f;
    }
  }
}

TEST(Anova, ThreeGroupExample) {
  const std::vector<std::vector<double>> groups{{1, 2, 3}, {2, 3, 4}, {10, 11, 12}};
  const AnovaResult r = anova_oneway(groups);
  const oracle::Anova o = oracle::anova(groups);
  EXPECT_NEAR(r.f, o.f, 1e-9);
  EXPECT_EQ(r.df_between, 2u);
  EXPECT_EQ(r.df_within, 6u);
  EXPECT_NEAR(r.p, f_p(o.f, o.df1, o.df2), 1e-9);
}

TEST(Anova, IdenticalGroupsGiveZero) {
  const std::vector<std::vector<double>> groups{{1.0, 4.0, 2.5}, {1.0, 4.0, 2.5}};
  const AnovaResult r = anova_oneway(groups);
  EXPECT_NEAR(r.f, 0.0, 1e-15);
  EXPECT_NEAR(r.p, 1.0, 1e-12);
}

TEST(Anova, EightGroupsOfThree) {
  Rng rng(8);
  std::vector<std::vector<double>> groups(8);
  for (std::size_t g = 0; g < 8; ++g) {
    for (int i = 0; i < 3; ++i) groups[g].push_back(10.0 - static_cast<double>(g) + rng.normal());
  }
  const AnovaResult r = anova_oneway(groups);
  EXPECT_EQ(r.df_between, 7u);
  EXPECT_EQ(r.df_within, 16u);
}

TEST(Anova, RandomDatasetsMatchOracle) {
  Rng rng(50);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> groups(2 + rng.index(6));
    for (auto& g : groups) {
      const double shift = rng.uniform(-5.0, 5.0);
      g.resize(2 + rng.index(5));
      for (auto& v : g) v = shift + rng.normal();
    }
    const AnovaResult r = anova_oneway(groups);
    const oracle::Anova o = oracle::anova(groups);
    EXPECT_NEAR(r.f, o.f, 1e-9 * std::max(1.0, o.f)) << trial;
    EXPECT_NEAR(r.p, f_p(o.f, o.df1, o.df2), 1e-9) << trial;
  }
}

TEST(Anova, ShiftAndScaleInvariance) {
  const std::vector<std::vector<double>> groups{{3.1, 2.7, 3.3}, {4.0, 4.4, 3.8, 4.1}, {2.0, 2.2}};
  const double f = anova_oneway(groups).f;
  for (auto [shift, scale] : {std::pair{100.0, 1.0}, {0.0, 7.5}, {-3.0, 0.01}}) {
    auto moved = groups;
    for (auto& g : moved) {
      for (auto& v : g) v = v * scale + shift;
    }
    EXPECT_NEAR(anova_oneway(moved).f, f, 1e-9 * f);
  }
}

TEST(Anova, Errors) {
  EXPECT_EQ(error_code_of([] { anova_oneway(std::vector<std::vector<double>>{{1, 2}}); }), ErrorCode::TooFewGroups);
  EXPECT_EQ(error_code_of([] { anova_oneway(std::vector<std::vector<double>>{{1, 1}, {2, 2}}); }),
            ErrorCode::DegenerateVariance);
  EXPECT_EQ(error_code_of([] { anova_oneway(std::vector<std::vector<double>>{{1}, {2, 3}}); }), ErrorCode::TooFewPoints);
}

TEST(PairedT, DegenerateDifferences) {
  const std::vector<double> a{1, 2, 3};
  EXPECT_EQ(error_code_of([&] { paired_t_test(a, a); }), ErrorCode::DegenerateVariance);
  EXPECT_EQ(error_code_of([] { paired_t_test(std::vector<double>{2, 4, 6}, std::vector<double>{1, 3, 5}); }),
            ErrorCode::DegenerateVariance);
  EXPECT_EQ(error_code_of([] { paired_t_test(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}); }),
            ErrorCode::LengthMismatch);
}

TEST(PairedT, WorkedExample) {
  const std::vector<double> a{1.1, 2.0, 3.2, 4.1};
  const std::vector<double> b{1.0, 1.8, 3.0, 4.0};
  const double t = t_oracle(a, b);
  const TTestResult one = paired_t_test(a, b, Tail::one);
  const TTestResult two = paired_t_test(a, b, Tail::two);
  EXPECT_EQ(one.df, 3u);
  EXPECT_NEAR(one.t, t, 1e-9);
  EXPECT_NEAR(one.p, t_p_one(t, 3.0), 1e-9);
  EXPECT_NEAR(two.p, 2.0 * t_p_one(std::fabs(t), 3.0), 1e-9);
  // Swapping the arguments flips the one-tailed direction.
  EXPECT_NEAR(paired_t_test(b, a, Tail::one).p, 1.0 - one.p, 1e-12);
}

TEST(PairedT, RandomDatasetsMatchOracle) {
  Rng rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.index(9);
    std::vector<double> a(n);
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal() * 3.0;
      b[i] = a[i] - 0.5 + rng.normal();
    }
    const double t = t_oracle(a, b);
    const TTestResult r = paired_t_test(a, b, Tail::one);
    EXPECT_NEAR(r.t, t, 1e-9 * std::max(1.0, std::fabs(t))) << trial;
    EXPECT_NEAR(r.p, t_p_one(t, static_cast<double>(n - 1)), 1e-9) << trial;
    EXPECT_NEAR(paired_t_test(a, b).p, 2.0 * t_p_one(std::fabs(t), static_cast<double>(n - 1)), 1e-9) << trial;
  }
}
