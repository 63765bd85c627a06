#pragma once

// Objective evaluation: DTW alignment, mel cepstral distortion, prosody
// profiles and deltas, embedding similarity and bottleneck diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <span>
#include <utility>
#include <vector>

#include "vqdr/common.hpp"
#include "vqdr/corpus.hpp"
#include "vqdr/dsp.hpp"
#include "vqdr/error.hpp"
#include "vqdr/vq.hpp"

namespace vqdr {

// ---------------------------------------------------------------------------
// DTW

struct DtwResult {
  double cost = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> path;
};

struct EuclideanDistance {
  double operator()(std::span<const double> a, std::span<const double> b) const {
    return std::sqrt(squared_distance(a, b));
  }
};

/// Globally minimal alignment under steps (1,1), (1,0), (0,1), each costing
/// the distance of the cell entered. Ties prefer the diagonal, then (1,0).
template <typename Distance = EuclideanDistance>
DtwResult dtw_align(const RealMatrix& x, const RealMatrix& y, Distance dist = {}) {
  require(x.rows() > 0 && y.rows() > 0, ErrorCode::EmptyInput, "DTW needs nonempty sequences");
  require(x.cols() == y.cols(), ErrorCode::DimensionMismatch, "DTW inputs differ in dimension");
  const std::size_t n = x.rows();
  const std::size_t m = y.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  enum Step : std::uint8_t { none, diag, down, right };
  RealMatrix acc(n, m, kInf);
  Matrix<std::uint8_t> from(n, m, none);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double local = dist(x.row(i), y.row(j));
      if (i == 0 && j == 0) {
        acc(i, j) = local;
        continue;
      }
      double best = kInf;
      std::uint8_t step = none;
      if (i > 0 && j > 0 && acc(i - 1, j - 1) < best) {
        best = acc(i - 1, j - 1);
        step = diag;
      }
      if (i > 0 && acc(i - 1, j) < best) {
        best = acc(i - 1, j);
        step = down;
      }
      if (j > 0 && acc(i, j - 1) < best) {
        best = acc(i, j - 1);
        step = right;
      }
      acc(i, j) = best + local;
      from(i, j) = step;
    }
  }
  DtwResult result;
  result.cost = acc(n - 1, m - 1);
  std::size_t i = n - 1;
  std::size_t j = m - 1;
  result.path.emplace_back(i, j);
  while (i != 0 || j != 0) {
    switch (from(i, j)) {
      case diag: --i, --j; break;
      case down: --i; break;
      case right: --j; break;
      default: fail(ErrorCode::InvalidArgument, "broken DTW back-pointer");
    }
    result.path.emplace_back(i, j);
  }
  std::reverse(result.path.begin(), result.path.end());
  return result;
}

// ---------------------------------------------------------------------------
// MCD

inline constexpr double kMcdScale = 10.0 / std::numbers::ln10;

/// Per-frame MCD term in dB: (10 / ln 10) * sqrt(2 * sum_i (c_i - c'_i)^2).
inline double mcd_frame(std::span<const double> c, std::span<const double> c_hat, bool exclude_c0 = true) {
  double acc = 0.0;
  for (std::size_t i = exclude_c0 ? 1 : 0; i < c.size(); ++i) {
    const double d = c[i] - c_hat[i];
    acc += d * d;
  }
  return kMcdScale * std::sqrt(2.0 * acc);
}

struct McdOptions {
  bool exclude_c0 = true;
  bool use_dtw = true;
};

/// Mean MCD over aligned frame pairs. Without DTW the inputs must have the
/// same length and frames are compared index by index.
inline double mcd(const FeatureMatrix& x, const FeatureMatrix& y, McdOptions options = {}) {
  require(x.frames() > 0 && y.frames() > 0, ErrorCode::EmptyInput, "MCD needs nonempty inputs");
  require(x.dim() == y.dim(), ErrorCode::DimensionMismatch, "MCD inputs differ in cepstral order");
  require(x.kind != FeatureKind::log_mel && y.kind != FeatureKind::log_mel, ErrorCode::InvalidArgument,
          "MCD is defined on cepstra, got log-mel");
  const bool aligned = !options.use_dtw && x.frames() == y.frames();
  if (!options.use_dtw) {
    require(aligned, ErrorCode::LengthMismatch, "frame-wise MCD needs equal lengths");
  }
  double total = 0.0;
  if (aligned) {
    for (std::size_t t = 0; t < x.frames(); ++t) total += mcd_frame(x.data.row(t), y.data.row(t), options.exclude_c0);
    return total / static_cast<double>(x.frames());
  }
  const std::size_t first = options.exclude_c0 ? 1 : 0;
  const auto cepstral = [first](std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a.subspan(first), b.subspan(first)));
  };
  const auto alignment = dtw_align(x.data, y.data, cepstral);
  for (const auto& [i, j] : alignment.path) total += mcd_frame(x.data.row(i), y.data.row(j), options.exclude_c0);
  return total / static_cast<double>(alignment.path.size());
}

// ---------------------------------------------------------------------------
// Prosody

struct TrimConfig {
  bool enabled = true;
  double threshold_db = -40.0;  // relative to the loudest frame
  double window_s = 0.025;
  double hop_s = 0.010;
};

/// Drops leading and trailing frames quieter than threshold_db below the
/// loudest frame.
inline AudioBuffer trim_silence(const AudioBuffer& audio, const TrimConfig& config = {}) {
  if (!config.enabled) return audio;
  const auto win = static_cast<std::size_t>(std::lround(config.window_s * audio.sample_rate));
  const auto hop = static_cast<std::size_t>(std::lround(config.hop_s * audio.sample_rate));
  require(win > 0 && hop > 0, ErrorCode::InvalidConfig, "trim window and hop must be positive");
  const std::size_t frames = frame_count(audio.size(), win, hop);
  if (frames == 0) return audio;
  std::vector<double> level_db(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    double energy = 0.0;
    for (std::size_t i = 0; i < win; ++i) energy += audio.samples[t * hop + i] * audio.samples[t * hop + i];
    level_db[t] = 10.0 * std::log10(energy / static_cast<double>(win) + 1e-20);
  }
  const double gate = *std::max_element(level_db.begin(), level_db.end()) + config.threshold_db;
  std::size_t first = 0;
  while (level_db[first] < gate) ++first;
  std::size_t last = frames - 1;
  while (level_db[last] < gate) --last;
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  const std::size_t end = std::min(audio.size(), last * hop + win);
  out.samples.assign(audio.samples.begin() + static_cast<std::ptrdiff_t>(first * hop),
                     audio.samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

struct ProsodyProfile {
  double duration_s = 0.0;
  std::optional<double> f0_avg_hz;
  std::optional<double> f0_range_hz;  // p95 - p5 of voiced F0
  double voiced_fraction = 0.0;

  bool has_f0() const noexcept { return f0_avg_hz.has_value() && f0_range_hz.has_value(); }
};

inline ProsodyProfile prosody_stats(const F0Track& f0, double audio_duration_s) {
  require(audio_duration_s > 0.0, ErrorCode::InvalidArgument, "duration must be positive");
  require(f0.values.size() == f0.voiced.size(), ErrorCode::LengthMismatch, "F0 track and voicing differ in length");
  ProsodyProfile p;
  p.duration_s = audio_duration_s;
  const auto voiced = f0.voiced_values();
  if (f0.frames() > 0) p.voiced_fraction = static_cast<double>(voiced.size()) / static_cast<double>(f0.frames());
  if (!voiced.empty()) {
    p.f0_avg_hz = mean(voiced);
    p.f0_range_hz = percentile(voiced, 95.0) - percentile(voiced, 5.0);
  }
  return p;
}

/// Trim, track F0 on the trimmed signal, and summarize. Audio too short for
/// F0 framing yields an unvoiced profile.
inline ProsodyProfile analyze_prosody(const AudioBuffer& audio, const TrimConfig& trim = {}, const F0Config& f0 = {}) {
  const AudioBuffer trimmed = trim_silence(audio, trim);
  require(trimmed.size() > 0, ErrorCode::EmptyAudio, "nothing left after trimming");
  F0Track track;
  if (trimmed.size() >= f0.frame_samples()) track = estimate_f0(trimmed, f0);
  return prosody_stats(track, trimmed.duration_s());
}

struct ProsodyDelta {
  double d_duration_ms = 0.0;
  double d_f0_avg_hz = 0.0;
  double d_f0_range_hz = 0.0;
  std::size_t pairs_used = 0;
  std::size_t pairs_skipped = 0;
};

/// Mean absolute differences over pairs where both sides carry F0 statistics.
inline ProsodyDelta prosody_delta(std::span<const std::pair<ProsodyProfile, ProsodyProfile>> pairs) {
  ProsodyDelta delta;
  for (const auto& [a, b] : pairs) {
    if (!a.has_f0() || !b.has_f0()) {
      ++delta.pairs_skipped;
      continue;
    }
    delta.d_duration_ms += 1000.0 * std::fabs(a.duration_s - b.duration_s);
    delta.d_f0_avg_hz += std::fabs(*a.f0_avg_hz - *b.f0_avg_hz);
    delta.d_f0_range_hz += std::fabs(*a.f0_range_hz - *b.f0_range_hz);
    ++delta.pairs_used;
  }
  require(delta.pairs_used > 0, ErrorCode::NoComparablePairs,
          std::to_string(delta.pairs_skipped) + " pairs lacked voiced F0");
  const double n = static_cast<double>(delta.pairs_used);
  delta.d_duration_ms /= n;
  delta.d_f0_avg_hz /= n;
  delta.d_f0_range_hz /= n;
  return delta;
}

// ---------------------------------------------------------------------------
// Embeddings

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::DimensionMismatch, "embedding lengths differ");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 0.0 && nb > 0.0, ErrorCode::ZeroVector, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Bottleneck diagnostics

struct BottleneckItem {
  CodeSequence codes;
  RunLengthSequence runs;
  double duration_s = 0.0;
};

struct BottleneckReport {
  std::size_t utterances = 0;
  std::optional<double> pre_dr_correlation;   // frames vs duration
  std::optional<double> post_dr_correlation;  // runs vs duration
  double mean_compression_ratio = 0.0;
  double usage_entropy_bits = 0.0;
  std::size_t codes_used = 0;
};

/// Pearson correlation; absent when either side has zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::LengthMismatch, "correlation inputs differ in length");
  require(!x.empty(), ErrorCode::EmptyInput, "correlation of empty inputs");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Shannon entropy in bits of a count histogram.
inline double entropy_bits(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

/// How much timing survives the bottleneck: length/duration correlation
/// before and after duplicate removal, compression ratio, and frame-level
/// codeword usage entropy.
inline BottleneckReport bottleneck_report(std::span<const BottleneckItem> items) {
  require(items.size() >= 3, ErrorCode::TooFewPoints, "need at least three utterances");
  std::vector<double> durations;
  std::vector<double> pre;
  std::vector<double> post;
  std::map<Code, std::size_t> usage;
  double ratio = 0.0;
  for (const auto& item : items) {
    require(item.runs.total_frames() == item.codes.size(), ErrorCode::LengthMismatch,
            "run-length sequence does not cover its code sequence");
    require(!item.runs.codes.empty(), ErrorCode::EmptyInput, "empty utterance in bottleneck report");
    durations.push_back(item.duration_s);
    pre.push_back(static_cast<double>(item.codes.size()));
    post.push_back(static_cast<double>(item.runs.size()));
    ratio += static_cast<double>(item.codes.size()) / static_cast<double>(item.runs.size());
    for (const Code c : item.codes.codes) ++usage[c];
  }
  const auto [lo, hi] = std::minmax_element(durations.begin(), durations.end());
  require(*lo != *hi, ErrorCode::DegenerateVariance, "all utterances have the same duration");

  BottleneckReport report;
  report.utterances = items.size();
  report.pre_dr_correlation = pearson(pre, durations);
  report.post_dr_correlation = pearson(post, durations);
  report.mean_compression_ratio = ratio / static_cast<double>(items.size());
  std::vector<std::size_t> counts;
  for (const auto& [code, count] : usage) counts.push_back(count);
  report.usage_entropy_bits = entropy_bits(counts);
  report.codes_used = counts.size();
  return report;
}

inline void write_bottleneck_csv(const BottleneckReport& r, std::ostream& out) {
  const auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    std::ostringstream s;
    s << std::setprecision(17) << *v;
    return s.str();
  };
  out << std::setprecision(17) << "utterances,pre_dr_correlation,post_dr_correlation,mean_compression_ratio,usage_entropy_bits,codes_used\n";
  out << r.utterances << ',' << opt(r.pre_dr_correlation) << ',' << opt(r.post_dr_correlation) << ','
      << r.mean_compression_ratio << ',' << r.usage_entropy_bits << ',' << r.codes_used << '\n';
}

}  // namespace vqdr
