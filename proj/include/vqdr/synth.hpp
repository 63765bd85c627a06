#pragma once

// Synthetic desk corpus: formant-synthesized "speech" built from a small
// phone inventory, parallel across speakers (same utt_id, same phone string,
// speaker-specific voice, rate and pitch). Also pure tones for F0 checks.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "vqdr/common.hpp"
#include "vqdr/corpus.hpp"

namespace vqdr::synth {

inline AudioBuffer tone(double freq_hz, double seconds, double amplitude = 0.5, int sample_rate = kDefaultSampleRate) {
  AudioBuffer a;
  a.sample_rate = sample_rate;
  a.samples.resize(static_cast<std::size_t>(std::lround(seconds * sample_rate)));
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    a.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / sample_rate);
  }
  return a;
}

struct Phone {
  double f1 = 500.0;
  double f2 = 1500.0;
  double f3 = 2500.0;
  bool voiced = true;
};

inline std::vector<Phone> make_inventory(std::size_t n, std::uint64_t seed, double unvoiced_fraction = 0.2) {
  Rng rng(seed);
  std::vector<Phone> phones(n);
  for (auto& p : phones) {
    p.voiced = rng.uniform() >= unvoiced_fraction;
    if (p.voiced) {
      p.f1 = rng.uniform(250.0, 850.0);
      p.f2 = rng.uniform(std::max(900.0, p.f1 + 300.0), 2400.0);
      p.f3 = rng.uniform(std::max(2300.0, p.f2 + 300.0), 3300.0);
    } else {
      p.f1 = rng.uniform(1800.0, 3000.0);
      p.f2 = rng.uniform(3500.0, 5500.0);
      p.f3 = rng.uniform(5800.0, 7200.0);
    }
  }
  return phones;
}

struct Voice {
  std::string speaker_id;
  double f0_hz = 120.0;
  double formant_scale = 1.0;
  double rate = 1.0;  // >1 speaks faster
};

struct Script {
  std::vector<std::size_t> phones;
  std::vector<double> base_durations_s;
};

inline Script make_script(std::size_t inventory_size, std::uint64_t seed, std::size_t min_phones = 8,
                          std::size_t max_phones = 18) {
  Rng rng(seed);
  Script s;
  const std::size_t n = min_phones + rng.index(max_phones - min_phones + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t p = rng.index(inventory_size);
    if (!s.phones.empty() && p == s.phones.back()) p = (p + 1) % inventory_size;
    s.phones.push_back(p);
    s.base_durations_s.push_back(rng.uniform(0.06, 0.18));
  }
  return s;
}

namespace detail {

struct Resonator {
  double y1 = 0.0;
  double y2 = 0.0;

  double step(double x, double freq, double bandwidth, int rate) {
    const double r = std::exp(-std::numbers::pi * bandwidth / rate);
    const double b1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / rate);
    const double b2 = -r * r;
    const double y = (1.0 - r) * x + b1 * y1 + b2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace detail

struct RenderOptions {
  double noise_floor = 1e-4;   // level of the leading/trailing pause
  double breathiness = 0.02;   // aspiration noise added to the pulse train
  double intonation = 1.0;     // depth of the declination/wobble F0 contour
  double transition_s = 0.025; // formant glide into each phone
  int sample_rate = kDefaultSampleRate;
};

/// Source-filter rendering with 25 ms formant transitions between phones,
/// 120 ms of near-silence at each end, normalized to 0.5 peak.
inline AudioBuffer render(const Script& script, const std::vector<Phone>& inventory, const Voice& voice,
                          std::uint64_t seed, const RenderOptions& options = {}) {
  Rng rng(seed);
  const int sample_rate = options.sample_rate;
  const auto pad = static_cast<std::size_t>(0.12 * sample_rate);
  std::vector<std::size_t> bounds{pad};
  for (double d : script.base_durations_s) {
    const double jitter = rng.uniform(0.9, 1.1);
    bounds.push_back(bounds.back() + static_cast<std::size_t>(d / voice.rate * jitter * sample_rate));
  }
  const std::size_t total = bounds.back() + pad;
  const double transition = options.transition_s * sample_rate;

  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.assign(total, 0.0);
  detail::Resonator r1;
  detail::Resonator r2;
  detail::Resonator r3;
  double phase = 0.0;
  const double span = static_cast<double>(bounds.back() - bounds.front());
  std::size_t seg = 0;
  for (std::size_t n = 0; n < total; ++n) {
    if (n < bounds.front() || n >= bounds.back()) {
      out.samples[n] = options.noise_floor * rng.normal();
      continue;
    }
    while (n >= bounds[seg + 1]) ++seg;
    const Phone& cur = inventory[script.phones[seg]];
    Phone shape = cur;
    const double into = static_cast<double>(n - bounds[seg]);
    if (seg > 0 && into < transition) {  // glide from the previous phone
      const Phone& prev = inventory[script.phones[seg - 1]];
      const double w = 0.5 + 0.5 * into / transition;
      shape.f1 = w * cur.f1 + (1 - w) * prev.f1;
      shape.f2 = w * cur.f2 + (1 - w) * prev.f2;
      shape.f3 = w * cur.f3 + (1 - w) * prev.f3;
    }
    const double progress = static_cast<double>(n - bounds.front()) / span;
    const double f0 = voice.f0_hz * (1.0 + options.intonation * (0.1 - 0.2 * progress +
                                                               0.06 * std::sin(2.0 * std::numbers::pi * 2.0 * progress)));
    double excitation = 0.0;
    if (cur.voiced) {
      phase += f0 / sample_rate;
      if (phase >= 1.0) {
        phase -= 1.0;
        excitation = 1.0;
      }
      excitation += options.breathiness * rng.normal();
    } else {
      excitation = 0.3 * rng.normal();
    }
    const double s = voice.formant_scale;
    double y = r1.step(excitation, shape.f1 * s, 80.0, sample_rate);
    y = r2.step(y, shape.f2 * s, 120.0, sample_rate) * 8.0;
    y = r3.step(y, std::min(shape.f3 * s, 0.45 * sample_rate), 160.0, sample_rate) * 8.0;
    out.samples[n] = y;
  }
  double peak = 0.0;
  for (double v : out.samples) peak = std::max(peak, std::fabs(v));
  if (peak > 0.0) {
    for (double& v : out.samples) v *= 0.5 / peak;
  }
  return out;
}

struct CorpusSpec {
  std::size_t speakers = 4;
  std::size_t utterances_per_speaker = 10;
  std::size_t inventory_size = 24;
  std::uint64_t seed = 1;
  double unvoiced_fraction = 0.2;
  RenderOptions render;
};

inline std::vector<Voice> default_voices(std::size_t n, std::uint64_t seed) {
  Rng rng(seed ^ 0x5eedULL);
  std::vector<Voice> voices;
  for (std::size_t i = 0; i < n; ++i) {
    std::ostringstream id;
    id << "spk" << std::setw(2) << std::setfill('0') << i;
    voices.push_back({id.str(), rng.uniform(95.0, 230.0), rng.uniform(0.9, 1.12), rng.uniform(0.85, 1.2)});
  }
  return voices;
}

/// Writes <dir>/<speaker>/<utt>.wav for every speaker and utterance plus
/// <dir>/manifest.tsv, and returns the manifest.
inline CorpusManifest write_corpus(const std::filesystem::path& dir, const CorpusSpec& spec) {
  std::filesystem::create_directories(dir);
  const auto inventory = make_inventory(spec.inventory_size, spec.seed, spec.unvoiced_fraction);
  const auto voices = default_voices(spec.speakers, spec.seed);
  CorpusManifest manifest;
  manifest.base_dir = dir;
  for (std::size_t s = 0; s < voices.size(); ++s) {
    std::filesystem::create_directories(dir / voices[s].speaker_id);
    for (std::size_t u = 0; u < spec.utterances_per_speaker; ++u) {
      std::ostringstream utt;
      utt << "u" << std::setw(4) << std::setfill('0') << u + 1;
      const Script script = make_script(inventory.size(), spec.seed * 1000003ULL + u);
      const AudioBuffer audio = render(script, inventory, voices[s], spec.seed * 7919ULL + s * 104729ULL + u,
                                     spec.render);
      const std::string rel = voices[s].speaker_id + "/" + utt.str() + ".wav";
      save_wav(audio, dir / rel);
      manifest.entries.push_back({utt.str(), voices[s].speaker_id, rel, ""});
    }
  }
  write_manifest(manifest, dir / "manifest.tsv");
  return manifest;
}

}  // namespace vqdr::synth
