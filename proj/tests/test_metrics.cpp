#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include "support.hpp"
#include "vqdr/metrics.hpp"
#include "vqdr/synth.hpp"

using namespace vqdr;
using test::error_code_of;

namespace {

FeatureMatrix cepstra(const std::vector<std::vector<double>>& rows) {
  FeatureMatrix f;
  f.kind = FeatureKind::mfcc;
  f.data = RealMatrix::from_rows(rows);
  return f;
}

double cell(const RealMatrix& x, const RealMatrix& y, std::size_t i, std::size_t j) {
  return std::sqrt(squared_distance(x.row(i), y.row(j)));
}

// Exhaustive minimum over every monotone path from (0,0) to (n-1,m-1).
double brute_force_dtw(const RealMatrix& x, const RealMatrix& y) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double cost) {
    if (i == x.rows() - 1 && j == y.rows() - 1) {
      best = std::min(best, cost);
      return;
    }
    if (i + 1 < x.rows() && j + 1 < y.rows()) walk(i + 1, j + 1, cost + cell(x, y, i + 1, j + 1));
    if (i + 1 < x.rows()) walk(i + 1, j, cost + cell(x, y, i + 1, j));
    if (j + 1 < y.rows()) walk(i, j + 1, cost + cell(x, y, i, j + 1));
  };
  walk(0, 0, cell(x, y, 0, 0));
  return best;
}

RealMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  RealMatrix m(rows, cols);
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace

TEST(Dtw, IdentityIsDiagonalAtZeroCost) {
  Rng rng(1);
  const RealMatrix x = random_matrix(6, 3, rng);
  const DtwResult r = dtw_align(x, x);
  EXPECT_EQ(r.cost, 0.0);
  ASSERT_EQ(r.path.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(r.path[i], std::make_pair(i, i));
}

TEST(Dtw, RepeatIsAbsorbed) {
  const DtwResult r = dtw_align(RealMatrix::from_rows({{0}, {1}}), RealMatrix::from_rows({{0}, {0}, {1}}));
  EXPECT_EQ(r.cost, 0.0);
  EXPECT_EQ(r.path.size(), 3u);
  EXPECT_EQ(r.path.front(), std::make_pair(std::size_t{0}, std::size_t{0}));
  EXPECT_EQ(r.path.back(), std::make_pair(std::size_t{1}, std::size_t{2}));
}

TEST(Dtw, MatchesExhaustiveEnumeration) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const RealMatrix x = random_matrix(5, 2, rng);
    const RealMatrix y = random_matrix(7, 2, rng);
    const DtwResult r = dtw_align(x, y);
    EXPECT_NEAR(r.cost, brute_force_dtw(x, y), 1e-12) << trial;
    // The returned path is monotone, contiguous and prices to the cost.
    double path_cost = 0.0;
    for (std::size_t s = 0; s < r.path.size(); ++s) {
      path_cost += cell(x, y, r.path[s].first, r.path[s].second);
      if (s == 0) continue;
      const auto di = r.path[s].first - r.path[s - 1].first;
      const auto dj = r.path[s].second - r.path[s - 1].second;
      EXPECT_TRUE((di == 1 || di == 0) && (dj == 1 || dj == 0) && di + dj > 0);
    }
    EXPECT_NEAR(path_cost, r.cost, 1e-12);
  }
}

TEST(Dtw, NoRandomPathIsCheaper) {
  Rng rng(9);
  const RealMatrix x = random_matrix(12, 4, rng);
  const RealMatrix y = random_matrix(9, 4, rng);
  const double best = dtw_align(x, y).cost;
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t i = 0;
    std::size_t j = 0;
    double cost = cell(x, y, 0, 0);
    while (i + 1 < x.rows() || j + 1 < y.rows()) {
      const std::size_t step = rng.index(3);
      if (i + 1 == x.rows()) {
        ++j;
      } else if (j + 1 == y.rows()) {
        ++i;
      } else if (step == 0) {
        ++i, ++j;
      } else if (step == 1) {
        ++i;
      } else {
        ++j;
      }
      cost += cell(x, y, i, j);
    }
    EXPECT_LE(best, cost + 1e-12);
  }
}

TEST(Dtw, TieBreakPrefersDiagonal) {
  // Every cell costs the same, so only the tie-break decides the path.
  const RealMatrix x(3, 1, 0.0);
  const RealMatrix y(3, 1, 0.0);
  const DtwResult r = dtw_align(x, y);
  ASSERT_EQ(r.path.size(), 3u);
  EXPECT_EQ(r.path[1], std::make_pair(std::size_t{1}, std::size_t{1}));
}

TEST(Dtw, Errors) {
  EXPECT_EQ(error_code_of([] { dtw_align(RealMatrix(2, 2), RealMatrix(2, 3)); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(error_code_of([] { dtw_align(RealMatrix(0, 2), RealMatrix(2, 2)); }), ErrorCode::EmptyInput);
}

TEST(Mcd, Examples) {
  const FeatureMatrix x = test::random_features(40, 13, 3);
  EXPECT_EQ(mcd(x, x), 0.0);
  EXPECT_EQ(mcd(x, x, {.use_dtw = false}), 0.0);

  const FeatureMatrix a = cepstra({{7.0, 0.0, 0.0}});
  const FeatureMatrix b = cepstra({{-3.0, 1.0, 0.0}});
  const double expected = 10.0 / std::numbers::ln10 * std::numbers::sqrt2;
  EXPECT_NEAR(mcd(a, b), 6.1418, 1e-4);
  EXPECT_NEAR(mcd(a, b), expected, 1e-12);
  EXPECT_NEAR(mcd(a, b, {.use_dtw = false}), expected, 1e-12);
  // Including c0 adds its difference.
  EXPECT_NEAR(mcd(a, b, {.exclude_c0 = false}), 10.0 / std::numbers::ln10 * std::sqrt(2.0 * 101.0), 1e-12);
}

TEST(Mcd, SymmetricAndNonNegative) {
  const FeatureMatrix x = test::random_features(30, 10, 4);
  const FeatureMatrix y = test::random_features(30, 10, 5);
  EXPECT_GT(mcd(x, y, {.use_dtw = false}), 0.0);
  EXPECT_DOUBLE_EQ(mcd(x, y, {.use_dtw = false}), mcd(y, x, {.use_dtw = false}));
  EXPECT_LE(mcd(x, y), mcd(x, y, {.use_dtw = false}) * 2.0);
}

TEST(Mcd, IncreasesWithNoiseOnSyntheticUtterance) {
  const FeatureMatrix x = mfcc(test::synthetic_utterance(3));
  Rng rng(17);
  RealMatrix noise(x.frames(), x.dim());
  for (auto& v : noise.data()) v = rng.normal();
  double previous = 0.0;
  for (double eps : {0.01, 0.1, 1.0}) {
    FeatureMatrix y = x;
    for (std::size_t i = 0; i < y.data.data().size(); ++i) y.data.data()[i] += eps * noise.data()[i];
    const double value = mcd(x, y);
    EXPECT_GT(value, previous) << eps;
    previous = value;
  }
}

TEST(Mcd, Errors) {
  const FeatureMatrix x = test::random_features(5, 4, 1);
  EXPECT_EQ(error_code_of([&] { mcd(x, test::random_features(5, 5, 2)); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(error_code_of([&] { mcd(x, test::random_features(0, 4, 2)); }), ErrorCode::EmptyInput);
  EXPECT_EQ(error_code_of([&] { mcd(x, test::random_features(6, 4, 2), {.use_dtw = false}); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(error_code_of([&] { mcd(x, test::random_features(5, 4, 2, FeatureKind::log_mel)); }),
            ErrorCode::InvalidArgument);
}

TEST(Prosody, ConstantTrack) {
  F0Track track;
  track.values.assign(150, 200.0);
  track.voiced.assign(150, true);
  const ProsodyProfile p = prosody_stats(track, 1.5);
  EXPECT_EQ(p.duration_s, 1.5);
  EXPECT_DOUBLE_EQ(*p.f0_avg_hz, 200.0);
  EXPECT_DOUBLE_EQ(*p.f0_range_hz, 0.0);
  EXPECT_EQ(p.voiced_fraction, 1.0);
}

TEST(Prosody, UnvoicedTrack) {
  F0Track track;
  track.values.assign(80, 0.0);
  track.voiced.assign(80, false);
  const ProsodyProfile p = prosody_stats(track, 0.8);
  EXPECT_EQ(p.duration_s, 0.8);
  EXPECT_FALSE(p.f0_avg_hz);
  EXPECT_FALSE(p.f0_range_hz);
  EXPECT_FALSE(p.has_f0());
}

TEST(Prosody, UniformTrackRange) {
  Rng rng(5);
  F0Track track;
  for (int i = 0; i < 4000; ++i) {
    track.values.push_back(rng.uniform(100.0, 300.0));
    track.voiced.push_back(true);
  }
  // Linearly interpolated percentiles on a sorted copy.
  std::vector<double> sorted = track.values;
  std::sort(sorted.begin(), sorted.end());
  const auto pct = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
  };
  const ProsodyProfile p = prosody_stats(track, 40.0);
  EXPECT_NEAR(*p.f0_range_hz, pct(0.95) - pct(0.05), 1e-9);
  EXPECT_NEAR(*p.f0_range_hz, 180.0, 5.0);
  EXPECT_NEAR(*p.f0_avg_hz, 200.0, 3.0);
}

TEST(Prosody, AnalyzeToneAndTrim) {
  AudioBuffer audio = synth::tone(200.0, 1.0);
  const std::vector<double> pad(3200, 0.0);
  audio.samples.insert(audio.samples.begin(), pad.begin(), pad.end());
  audio.samples.insert(audio.samples.end(), pad.begin(), pad.end());
  const ProsodyProfile trimmed = analyze_prosody(audio);
  // Gating works on 25 ms frames, so each edge may keep most of a window.
  EXPECT_NEAR(trimmed.duration_s, 1.0, 0.05);
  EXPECT_NEAR(*trimmed.f0_avg_hz, 200.0, 2.0);
  const ProsodyProfile raw = analyze_prosody(audio, {.enabled = false});
  EXPECT_DOUBLE_EQ(raw.duration_s, 1.4);
}

TEST(Prosody, DeltaExamples) {
  const auto profile = [](double dur, double avg, double range) {
    ProsodyProfile p;
    p.duration_s = dur;
    p.f0_avg_hz = avg;
    p.f0_range_hz = range;
    return p;
  };
  const std::vector<std::pair<ProsodyProfile, ProsodyProfile>> same{{profile(1, 150, 40), profile(1, 150, 40)}};
  const ProsodyDelta zero = prosody_delta(same);
  EXPECT_EQ(zero.d_duration_ms, 0.0);
  EXPECT_EQ(zero.d_f0_avg_hz, 0.0);
  EXPECT_EQ(zero.d_f0_range_hz, 0.0);

  ProsodyProfile unvoiced;
  unvoiced.duration_s = 1.0;
  const std::vector<std::pair<ProsodyProfile, ProsodyProfile>> pairs{
      {profile(1.010, 150, 40), profile(1.000, 160, 30)},
      {profile(2.000, 120, 20), profile(2.030, 100, 50)},
      {unvoiced, profile(1, 1, 1)},
  };
  const ProsodyDelta d = prosody_delta(pairs);
  EXPECT_NEAR(d.d_duration_ms, 20.0, 1e-9);
  EXPECT_NEAR(d.d_f0_avg_hz, 15.0, 1e-12);
  EXPECT_NEAR(d.d_f0_range_hz, 20.0, 1e-12);
  EXPECT_EQ(d.pairs_used, 2u);
  EXPECT_EQ(d.pairs_skipped, 1u);

  const std::vector<std::pair<ProsodyProfile, ProsodyProfile>> none{{unvoiced, unvoiced}};
  EXPECT_EQ(error_code_of([&] { prosody_delta(none); }), ErrorCode::NoComparablePairs);
}

TEST(Cosine, Examples) {
  const std::vector<double> e{1.0, -2.0, 0.5};
  const std::vector<double> neg{-1.0, 2.0, -0.5};
  EXPECT_NEAR(cosine_similarity(e, e), 1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(e, neg), -1.0, 1e-15);
  EXPECT_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 3}), 0.0);
  EXPECT_EQ(error_code_of([] { cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}); }),
            ErrorCode::ZeroVector);
  EXPECT_EQ(error_code_of([] { cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 0}); }),
            ErrorCode::DimensionMismatch);
}

namespace {

BottleneckItem item(std::vector<Code> c, double duration_s) {
  BottleneckItem it;
  it.codes.codes = std::move(c);
  it.runs = remove_duplicates(it.codes);
  it.duration_s = duration_s;
  return it;
}

}  // namespace

TEST(Bottleneck, PreCorrelationIsOneForFramedLengths) {
  Rng rng(3);
  std::vector<BottleneckItem> items;
  for (std::size_t frames : {50u, 73u, 120u, 201u}) {
    std::vector<Code> c;
    for (std::size_t t = 0; t < frames; ++t) c.push_back(static_cast<Code>(rng.index(4)));
    items.push_back(item(c, (static_cast<double>(frames) - 1.0) * 0.010 + 0.025));
  }
  const BottleneckReport r = bottleneck_report(items);
  ASSERT_TRUE(r.pre_dr_correlation);
  EXPECT_NEAR(*r.pre_dr_correlation, 1.0, 1e-12);
  EXPECT_GT(r.mean_compression_ratio, 1.0);
  EXPECT_EQ(r.utterances, 4u);
}

TEST(Bottleneck, ConstantCodeHasNoPostCorrelation) {
  std::vector<BottleneckItem> items{item(std::vector<Code>(10, 3), 0.1), item(std::vector<Code>(20, 3), 0.2),
                                    item(std::vector<Code>(35, 3), 0.35)};
  const BottleneckReport r = bottleneck_report(items);
  EXPECT_FALSE(r.post_dr_correlation);
  EXPECT_NEAR(r.mean_compression_ratio, (10.0 + 20.0 + 35.0) / 3.0, 1e-12);
  EXPECT_EQ(r.codes_used, 1u);
  EXPECT_EQ(r.usage_entropy_bits, 0.0);
}

TEST(Bottleneck, UniformUsageEntropy) {
  std::vector<Code> all;
  for (Code c = 0; c < 128; ++c) all.push_back(c);
  std::vector<BottleneckItem> items{item(all, 1.28), item(all, 1.30), item(all, 1.31)};
  const BottleneckReport r = bottleneck_report(items);
  EXPECT_NEAR(r.usage_entropy_bits, 7.0, 1e-12);
  EXPECT_EQ(r.codes_used, 128u);

  const std::vector<std::size_t> skewed{10, 1, 1, 1};
  EXPECT_LT(entropy_bits(skewed), 2.0);
  const std::vector<std::size_t> flat{3, 3, 3, 3};
  EXPECT_NEAR(entropy_bits(flat), 2.0, 1e-15);
}

TEST(Bottleneck, ErrorsAndCsv) {
  std::vector<BottleneckItem> same{item({1, 2}, 0.5), item({1, 1, 2}, 0.5), item({2}, 0.5)};
  EXPECT_EQ(error_code_of([&] { bottleneck_report(same); }), ErrorCode::DegenerateVariance);
  std::vector<BottleneckItem> two{item({1}, 0.1), item({1, 2}, 0.2)};
  EXPECT_EQ(error_code_of([&] { bottleneck_report(two); }), ErrorCode::TooFewPoints);

  std::vector<BottleneckItem> items{item(std::vector<Code>(10, 3), 0.1), item(std::vector<Code>(20, 3), 0.2),
                                    item(std::vector<Code>(35, 3), 0.35)};
  std::ostringstream out;
  write_bottleneck_csv(bottleneck_report(items), out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
            "utterances,pre_dr_correlation,post_dr_correlation,mean_compression_ratio,usage_entropy_bits,codes_used");
  const std::string row = out.str().substr(out.str().find('\n') + 1);
  EXPECT_EQ(row.substr(0, 2), "3,");
  EXPECT_NE(row.find(",,"), std::string::npos) << row;
}
