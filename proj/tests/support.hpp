#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <unistd.h>

#include "vqdr/common.hpp"
#include "vqdr/dsp.hpp"
#include "vqdr/error.hpp"
#include "vqdr/synth.hpp"
#include "vqdr/testbench.hpp"

namespace vqdr::test {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "vqdr") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline FeatureMatrix random_features(std::size_t frames, std::size_t dim, std::uint64_t seed,
                                     FeatureKind kind = FeatureKind::mfcc) {
  Rng rng(seed);
  FeatureMatrix f;
  f.kind = kind;
  f.data = RealMatrix(frames, dim);
  for (auto& v : f.data.data()) v = rng.normal();
  return f;
}

/// Error code thrown by `fn`, or nothing if it returned normally.
template <typename F>
std::optional<ErrorCode> error_code_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// One rendered utterance from the formant synthesizer.
inline AudioBuffer synthetic_utterance(std::uint64_t seed = 1, std::size_t voice = 0) {
  const auto inventory = synth::make_inventory(24, seed);
  const auto voices = synth::default_voices(voice + 1, seed);
  return synth::render(synth::make_script(inventory.size(), seed), inventory, voices[voice], seed);
}

inline Pairing pairing(std::string baseline, std::string proposed, std::optional<std::string> reference = std::nullopt,
                       Question question = Question::comprehensibility) {
  return {std::move(baseline), std::move(proposed), std::move(reference), question};
}

/// One stimulus per (utterance, system); ids look like "u03_vq128".
inline std::vector<Stimulus> make_stimuli(std::size_t utterances, const std::vector<std::string>& systems) {
  std::vector<Stimulus> out;
  for (std::size_t u = 0; u < utterances; ++u) {
    const std::string utt = (u < 10 ? "u0" : "u") + std::to_string(u);
    for (const auto& tag : systems) {
      Stimulus s;
      s.stim_id = utt + "_" + tag;
      s.utt_id = utt;
      s.system_tag = tag;
      s.path = tag + "/" + utt + ".wav";
      s.condition = tag == "L2" ? ConditionTriplet{Origin::L2, Origin::L2, Origin::L2}
                                : ConditionTriplet{Origin::L2, Origin::L1, Origin::L2};
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace vqdr::test
