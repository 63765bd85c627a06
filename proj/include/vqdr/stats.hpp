#pragma once

// Significance statistics: one-way ANOVA and the paired t-test, with p-values
// from the regularized incomplete beta function.

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vqdr/error.hpp"

namespace vqdr {

namespace detail {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, ErrorCode::InvalidArgument, "beta parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(T > t) for Student's t with `df` degrees of freedom.
inline double student_t_sf(double t, double df) {
  require(df > 0.0, ErrorCode::InvalidArgument, "degrees of freedom must be positive");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0.0 ? tail : 1.0 - tail;
}

/// P(F > f) for the F distribution with (df1, df2) degrees of freedom.
inline double f_sf(double f, double df1, double df2) {
  require(df1 > 0.0 && df2 > 0.0, ErrorCode::InvalidArgument, "degrees of freedom must be positive");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f));
}

struct AnovaResult {
  double f = 0.0;
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  double p = 1.0;
};

inline AnovaResult anova_oneway(std::span<const std::vector<double>> groups) {
  require(groups.size() >= 2, ErrorCode::TooFewGroups, "need at least two groups");
  std::size_t n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    require(g.size() >= 2, ErrorCode::TooFewPoints, "each group needs at least two values");
    for (double v : g) {
      require(std::isfinite(v), ErrorCode::NonFiniteInput, "non-finite observation");
      grand += v;
    }
    n += g.size();
  }
  grand /= static_cast<double>(n);

  double ss_between = 0.0;
  double ss_within = 0.0;
  double scale = 0.0;
  for (const auto& g : groups) {
    double mu = 0.0;
    for (double v : g) mu += v;
    mu /= static_cast<double>(g.size());
    ss_between += static_cast<double>(g.size()) * (mu - grand) * (mu - grand);
    for (double v : g) {
      ss_within += (v - mu) * (v - mu);
      scale = std::max(scale, std::fabs(v - grand));
    }
  }
  const double floor = std::numeric_limits<double>::epsilon() * scale;
  require(ss_within > floor * floor * static_cast<double>(n), ErrorCode::DegenerateVariance,
          "zero within-group variance");

  AnovaResult r;
  r.df_between = groups.size() - 1;
  r.df_within = n - groups.size();
  r.f = (ss_between / static_cast<double>(r.df_between)) / (ss_within / static_cast<double>(r.df_within));
  r.p = f_sf(r.f, static_cast<double>(r.df_between), static_cast<double>(r.df_within));
  return r;
}

enum class Tail { one, two };

struct TTestResult {
  double t = 0.0;
  std::size_t df = 0;
  double p = 1.0;
};

/// Paired t-test on d = a - b. The one-tailed alternative is mean(d) > 0.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b, Tail tail = Tail::two) {
  require(a.size() == b.size(), ErrorCode::LengthMismatch,
          std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " observations");
  require(a.size() >= 2, ErrorCode::TooFewPoints, "need at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  double mu = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    require(std::isfinite(d[i]), ErrorCode::NonFiniteInput, "non-finite observation");
    mu += d[i];
    scale = std::max(scale, std::fabs(d[i]));
  }
  mu /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mu) * (v - mu);
  const double floor = std::numeric_limits<double>::epsilon() * scale;
  require(ss > floor * floor * static_cast<double>(n), ErrorCode::DegenerateVariance, "differences have zero variance");
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult r;
  r.df = n - 1;
  r.t = mu / (sd / std::sqrt(static_cast<double>(n)));
  const double df = static_cast<double>(r.df);
  r.p = tail == Tail::one ? student_t_sf(r.t, df) : incomplete_beta(0.5 * df, 0.5, df / (df + r.t * r.t));
  return r;
}

}  // namespace vqdr
