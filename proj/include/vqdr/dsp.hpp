#pragma once

// Frame-level acoustic features: log-Mel spectrogram, MFCC, and a YIN F0 track.
// Framing everywhere: T = 1 + floor((N - window) / hop).

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vqdr/common.hpp"
#include "vqdr/corpus.hpp"
#include "vqdr/error.hpp"

namespace vqdr {

enum class FeatureKind : std::uint8_t { log_mel = 0, mfcc = 1, external = 2 };

constexpr std::string_view to_string(FeatureKind kind) noexcept {
  switch (kind) {
    case FeatureKind::log_mel: return "log_mel";
    case FeatureKind::mfcc: return "mfcc";
    case FeatureKind::external: return "external";
  }
  return "unknown";
}

inline FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "log_mel") return FeatureKind::log_mel;
  if (text == "mfcc") return FeatureKind::mfcc;
  if (text == "external") return FeatureKind::external;
  fail(ErrorCode::InvalidArgument, "unknown feature kind '" + std::string(text) + "'");
}

struct FeatureMatrix {
  RealMatrix data;
  double frame_hop_s = 0.010;
  double frame_len_s = 0.025;
  FeatureKind kind = FeatureKind::external;

  std::size_t frames() const noexcept { return data.rows(); }
  std::size_t dim() const noexcept { return data.cols(); }

  bool operator==(const FeatureMatrix&) const = default;
};

struct FeatureConfig {
  int sample_rate = kDefaultSampleRate;
  double window_s = 0.025;
  double hop_s = 0.010;
  std::size_t fft_size = 512;
  std::size_t n_mels = 80;
  std::size_t n_mfcc = 40;
  double f_min_hz = 0.0;
  double f_max_hz = 8000.0;
  double preemphasis = 0.97;
  double log_floor = 1e-10;

  std::size_t window_samples() const { return static_cast<std::size_t>(std::lround(window_s * sample_rate)); }
  std::size_t hop_samples() const { return static_cast<std::size_t>(std::lround(hop_s * sample_rate)); }
  std::size_t n_bins() const { return fft_size / 2 + 1; }

  void validate() const {
    require(sample_rate > 0, ErrorCode::InvalidConfig, "sample rate must be positive");
    require(window_samples() > 0 && hop_samples() > 0, ErrorCode::InvalidConfig, "window and hop must be positive");
    require(hop_samples() <= window_samples(), ErrorCode::InvalidConfig, "hop exceeds window");
    require(fft_size >= window_samples() && std::has_single_bit(fft_size), ErrorCode::InvalidConfig,
            "fft size must be a power of two no smaller than the window");
    require(n_mels > 0, ErrorCode::InvalidConfig, "zero mel bands");
    require(n_mfcc > 0 && n_mfcc <= n_mels, ErrorCode::InvalidConfig, "cepstral order must be in [1, n_mels]");
    require(f_min_hz >= 0.0 && f_min_hz < f_max_hz && f_max_hz <= sample_rate / 2.0, ErrorCode::InvalidConfig,
            "mel band edges must satisfy 0 <= f_min < f_max <= nyquist");
    require(preemphasis >= 0.0 && preemphasis < 1.0, ErrorCode::InvalidConfig, "pre-emphasis outside [0, 1)");
    require(log_floor > 0.0, ErrorCode::InvalidConfig, "log floor must be positive");
  }
};

inline std::size_t frame_count(std::size_t n_samples, std::size_t window, std::size_t hop) {
  if (n_samples < window) return 0;
  return 1 + (n_samples - window) / hop;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// ---------------------------------------------------------------------------
// FFT

/// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  require(std::has_single_bit(n), ErrorCode::InvalidArgument, "fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

/// |FFT|^2 of a zero-padded real frame, bins 0..fft_size/2.
inline std::vector<double> power_spectrum(std::span<const double> frame, std::size_t fft_size) {
  std::vector<std::complex<double>> buf(fft_size);
  for (std::size_t i = 0; i < frame.size() && i < fft_size; ++i) buf[i] = frame[i];
  fft_inplace(buf);
  std::vector<double> power(fft_size / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
  return power;
}

inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Mel filterbank

/// HTK-style triangular filters on evenly spaced mel points. Weights are
/// unnormalized (peak 1 at the center).
struct MelFilterbank {
  std::vector<double> center_hz;
  RealMatrix weights;  // n_mels x n_bins

  static MelFilterbank build(const FeatureConfig& config) {
    config.validate();
    const std::size_t n_mels = config.n_mels;
    const std::size_t n_bins = config.n_bins();
    const double mel_lo = hz_to_mel(config.f_min_hz);
    const double mel_hi = hz_to_mel(config.f_max_hz);
    std::vector<double> edges(n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
    }
    MelFilterbank fb;
    fb.center_hz.assign(edges.begin() + 1, edges.end() - 1);
    fb.weights = RealMatrix(n_mels, n_bins);
    const double bin_hz = static_cast<double>(config.sample_rate) / static_cast<double>(config.fft_size);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double left = edges[m];
      const double center = edges[m + 1];
      const double right = edges[m + 2];
      for (std::size_t k = 0; k < n_bins; ++k) {
        const double f = bin_hz * static_cast<double>(k);
        const double rising = (f - left) / (center - left);
        const double falling = (right - f) / (right - center);
        fb.weights(m, k) = std::max(0.0, std::min(rising, falling));
      }
    }
    return fb;
  }

  std::vector<double> apply(std::span<const double> power) const {
    std::vector<double> energies(weights.rows(), 0.0);
    for (std::size_t m = 0; m < weights.rows(); ++m) {
      const auto w = weights.row(m);
      double acc = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * power[k];
      energies[m] = acc;
    }
    return energies;
  }
};

namespace detail {

inline void check_audio_for_features(const AudioBuffer& audio, const FeatureConfig& config) {
  config.validate();
  require(audio.sample_rate == config.sample_rate, ErrorCode::InvalidConfig,
          "audio rate " + std::to_string(audio.sample_rate) + " differs from feature rate " +
              std::to_string(config.sample_rate) + " (resample first)");
  require(audio.size() >= config.window_samples(), ErrorCode::AudioTooShort,
          std::to_string(audio.size()) + " samples, need at least " + std::to_string(config.window_samples()));
  for (double s : audio.samples) require(std::isfinite(s), ErrorCode::NonFiniteInput, "non-finite audio sample");
}

inline std::vector<double> preemphasize(const std::vector<double>& x, double coeff) {
  std::vector<double> y(x.size());
  if (x.empty()) return y;
  y[0] = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) y[i] = x[i] - coeff * x[i - 1];
  return y;
}

}  // namespace detail

/// Natural-log mel energies, floored.
inline FeatureMatrix log_mel(const AudioBuffer& audio, const FeatureConfig& config = {}) {
  detail::check_audio_for_features(audio, config);
  const auto fb = MelFilterbank::build(config);
  const std::size_t win = config.window_samples();
  const std::size_t hop = config.hop_samples();
  const std::size_t frames = frame_count(audio.size(), win, hop);
  const auto signal = detail::preemphasize(audio.samples, config.preemphasis);
  const auto window = hann_window(win);

  FeatureMatrix out;
  out.kind = FeatureKind::log_mel;
  out.frame_hop_s = static_cast<double>(hop) / config.sample_rate;
  out.frame_len_s = static_cast<double>(win) / config.sample_rate;
  out.data = RealMatrix(frames, config.n_mels);
  std::vector<double> frame(win);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < win; ++i) frame[i] = signal[t * hop + i] * window[i];
    const auto energies = fb.apply(power_spectrum(frame, config.fft_size));
    auto row = out.data.row(t);
    for (std::size_t m = 0; m < energies.size(); ++m) row[m] = std::log(std::max(energies[m], config.log_floor));
  }
  return out;
}

/// Orthonormal DCT-II, first `n_out` coefficients.
inline std::vector<double> dct2(std::span<const double> x, std::size_t n_out) {
  const std::size_t n = x.size();
  std::vector<double> c(n_out, 0.0);
  for (std::size_t k = 0; k < n_out; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(i) + 0.5) /
                             static_cast<double>(n));
    }
    const double scale = k == 0 ? std::sqrt(1.0 / static_cast<double>(n)) : std::sqrt(2.0 / static_cast<double>(n));
    c[k] = scale * acc;
  }
  return c;
}

/// Cepstra from the log-mel rows; c0 included.
inline FeatureMatrix mfcc(const AudioBuffer& audio, const FeatureConfig& config = {}) {
  const FeatureMatrix mel = log_mel(audio, config);
  FeatureMatrix out;
  out.kind = FeatureKind::mfcc;
  out.frame_hop_s = mel.frame_hop_s;
  out.frame_len_s = mel.frame_len_s;
  out.data = RealMatrix(mel.frames(), config.n_mfcc);
  for (std::size_t t = 0; t < mel.frames(); ++t) {
    const auto c = dct2(mel.data.row(t), config.n_mfcc);
    std::copy(c.begin(), c.end(), out.data.row(t).begin());
  }
  return out;
}

inline FeatureMatrix extract_features(const AudioBuffer& audio, FeatureKind kind, const FeatureConfig& config = {}) {
  switch (kind) {
    case FeatureKind::log_mel: return log_mel(audio, config);
    case FeatureKind::mfcc: return mfcc(audio, config);
    case FeatureKind::external: break;
  }
  fail(ErrorCode::InvalidArgument, "external features are ingested, not computed");
}

/// Per-utterance mean and variance normalization of each feature dimension.
inline FeatureMatrix cmvn(const FeatureMatrix& features) {
  FeatureMatrix out = features;
  const std::size_t rows = features.frames();
  if (rows == 0) return out;
  for (std::size_t d = 0; d < features.dim(); ++d) {
    double mu = 0.0;
    for (std::size_t t = 0; t < rows; ++t) mu += features.data(t, d);
    mu /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t t = 0; t < rows; ++t) var += (features.data(t, d) - mu) * (features.data(t, d) - mu);
    var /= static_cast<double>(rows);
    const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t t = 0; t < rows; ++t) out.data(t, d) = (features.data(t, d) - mu) * inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// F0

struct F0Config {
  int sample_rate = kDefaultSampleRate;
  double f_min_hz = 70.0;
  double f_max_hz = 400.0;
  double threshold = 0.15;
  double hop_s = 0.010;

  std::size_t max_lag() const { return static_cast<std::size_t>(std::ceil(sample_rate / f_min_hz)); }
  std::size_t min_lag() const { return static_cast<std::size_t>(std::floor(sample_rate / f_max_hz)); }
  std::size_t hop_samples() const { return static_cast<std::size_t>(std::lround(hop_s * sample_rate)); }
  /// Each frame spans an integration window of max_lag samples plus max_lag of lag context.
  std::size_t frame_samples() const { return 2 * max_lag(); }

  void validate() const {
    require(sample_rate > 0, ErrorCode::InvalidConfig, "sample rate must be positive");
    require(f_min_hz > 0.0 && f_min_hz < f_max_hz, ErrorCode::InvalidBand, "need 0 < f_min < f_max");
    require(f_max_hz <= sample_rate / 2.0, ErrorCode::InvalidBand, "f_max above nyquist");
    require(min_lag() >= 2, ErrorCode::InvalidBand, "f_max too close to the sample rate");
    require(threshold > 0.0 && threshold < 1.0, ErrorCode::InvalidConfig, "threshold outside (0, 1)");
    require(hop_samples() > 0, ErrorCode::InvalidConfig, "hop must be positive");
  }
};

struct F0Track {
  std::vector<double> values;  // Hz, 0 where unvoiced
  std::vector<bool> voiced;
  double frame_hop_s = 0.010;

  std::size_t frames() const noexcept { return values.size(); }

  std::vector<double> voiced_values() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (voiced[i]) out.push_back(values[i]);
    }
    return out;
  }
};

/// YIN: cumulative-mean-normalized difference, absolute threshold, then
/// parabolic refinement of the chosen lag.
inline F0Track estimate_f0(const AudioBuffer& audio, const F0Config& config = {}) {
  config.validate();
  require(audio.sample_rate == config.sample_rate, ErrorCode::InvalidConfig, "audio rate differs from F0 config rate");
  const std::size_t max_lag = config.max_lag();
  const std::size_t min_lag = config.min_lag();
  const std::size_t span = config.frame_samples();
  const std::size_t hop = config.hop_samples();
  require(audio.size() >= span, ErrorCode::AudioTooShort,
          std::to_string(audio.size()) + " samples, F0 framing needs " + std::to_string(span));
  const std::size_t frames = frame_count(audio.size(), span, hop);
  const std::size_t width = max_lag;

  F0Track track;
  track.frame_hop_s = static_cast<double>(hop) / config.sample_rate;
  track.values.assign(frames, 0.0);
  track.voiced.assign(frames, false);

  std::vector<double> diff(max_lag + 2, 0.0);
  std::vector<double> cmnd(max_lag + 2, 1.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = audio.samples.data() + t * hop;
    const std::size_t last_lag = std::min(max_lag + 1, span - width);
    for (std::size_t lag = 1; lag <= last_lag; ++lag) {
      double acc = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        const double d = x[j] - x[j + lag];
        acc += d * d;
      }
      diff[lag] = acc;
    }
    double running = 0.0;
    cmnd[0] = 1.0;
    for (std::size_t lag = 1; lag <= last_lag; ++lag) {
      running += diff[lag];
      cmnd[lag] = running > 0.0 ? diff[lag] * static_cast<double>(lag) / running : 1.0;
    }

    std::size_t best = 0;
    for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
      if (cmnd[lag] < config.threshold) {
        while (lag + 1 <= max_lag && cmnd[lag + 1] < cmnd[lag]) ++lag;
        best = lag;
        break;
      }
    }
    if (best == 0) continue;

    double refined = static_cast<double>(best);
    if (best > 1 && best + 1 <= last_lag) {
      const double a = cmnd[best - 1];
      const double b = cmnd[best];
      const double c = cmnd[best + 1];
      const double denom = a - 2.0 * b + c;
      if (denom > 0.0) refined += 0.5 * (a - c) / denom;
    }
    const double f0 = std::clamp(config.sample_rate / refined, config.f_min_hz, config.f_max_hz);
    track.values[t] = f0;
    track.voiced[t] = true;
  }
  return track;
}

// ---------------------------------------------------------------------------
// Feature dump: "VQDRFEAT", u16 version, u8 kind, u32 T, u32 D, f64 hop, f64
// window, then T*D little-endian f32 row-major.

inline constexpr char kFeatureMagic[8] = {'V', 'Q', 'D', 'R', 'F', 'E', 'A', 'T'};
inline constexpr std::uint16_t kFeatureVersion = 1;

inline void write_features(const FeatureMatrix& features, std::ostream& out) {
  out.write(kFeatureMagic, 8);
  binary::write_le<std::uint16_t>(out, kFeatureVersion);
  binary::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(features.kind));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.frames()));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.dim()));
  binary::write_le<double>(out, features.frame_hop_s);
  binary::write_le<double>(out, features.frame_len_s);
  for (double v : features.data.data()) binary::write_le<float>(out, static_cast<float>(v));
}

inline FeatureMatrix read_features(std::istream& in) {
  char magic[8] = {};
  require(static_cast<bool>(in.read(magic, 8)) && std::equal(magic, magic + 8, kFeatureMagic), ErrorCode::BadMagic,
          "not a feature dump");
  std::uint16_t version = 0;
  require(binary::read_le(in, version), ErrorCode::VersionMismatch, "truncated header");
  require(version == kFeatureVersion, ErrorCode::VersionMismatch, "feature dump version " + std::to_string(version));
  std::uint8_t kind = 0;
  std::uint32_t frames = 0;
  std::uint32_t dim = 0;
  FeatureMatrix features;
  const bool header_ok = binary::read_le(in, kind) && binary::read_le(in, frames) && binary::read_le(in, dim) &&
                         binary::read_le(in, features.frame_hop_s) && binary::read_le(in, features.frame_len_s);
  require(header_ok, ErrorCode::CorruptHeader, "truncated feature header");
  require(kind <= 2, ErrorCode::CorruptHeader, "unknown feature kind " + std::to_string(kind));
  features.kind = static_cast<FeatureKind>(kind);
  std::vector<double> values(static_cast<std::size_t>(frames) * dim);
  for (auto& v : values) {
    float f = 0.0f;
    require(binary::read_le(in, f), ErrorCode::CorruptHeader, "truncated feature payload");
    v = f;
  }
  features.data = RealMatrix(frames, dim, std::move(values));
  return features;
}

inline void save_features(const FeatureMatrix& features, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
  write_features(features, out);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "short write to " + path.string());
}

inline FeatureMatrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  return read_features(in);
}

/// Values are rounded through f32 so that a matrix equals its own dump round trip.
inline FeatureMatrix round_to_f32(FeatureMatrix features) {
  for (auto& v : features.data.data()) v = static_cast<float>(v);
  return features;
}

inline void write_features_csv(const FeatureMatrix& features, std::ostream& out) {
  out << "frame";
  for (std::size_t d = 0; d < features.dim(); ++d) out << ",f" << d;
  out << '\n';
  out.precision(9);
  for (std::size_t t = 0; t < features.frames(); ++t) {
    out << t;
    for (double v : features.data.row(t)) out << ',' << v;
    out << '\n';
  }
}

}  // namespace vqdr
