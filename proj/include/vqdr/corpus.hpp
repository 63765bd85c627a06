#pragma once

// Audio ingestion (RIFF/WAVE), corpus manifests, deterministic splits and
// parallel-utterance pairing.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vqdr/common.hpp"
#include "vqdr/error.hpp"

namespace vqdr {

inline constexpr int kDefaultSampleRate = 16000;

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  double duration_s() const noexcept { return static_cast<double>(samples.size()) / sample_rate; }
};

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Decodes an in-memory WAV image. Accepts PCM16 and IEEE float32 (plain or
/// WAVE_FORMAT_EXTENSIBLE); any channel count is mean-downmixed to mono.
inline AudioBuffer decode_wav(std::span<const unsigned char> bytes) {
  using binary::load_le;
  require(bytes.size() >= 12, ErrorCode::CorruptHeader, "file shorter than RIFF header");
  require(std::memcmp(bytes.data(), "RIFF", 4) == 0 && std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          ErrorCode::CorruptHeader, "missing RIFF/WAVE signature");

  std::optional<std::uint16_t> format;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  std::span<const unsigned char> payload;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const auto chunk_size = load_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(chunk_size >= 16 && chunk_size <= available, ErrorCode::CorruptHeader, "truncated fmt chunk");
      format = load_le<std::uint16_t>(chunk + 8);
      channels = load_le<std::uint16_t>(chunk + 10);
      rate = load_le<std::uint32_t>(chunk + 12);
      bits = load_le<std::uint16_t>(chunk + 22);
      if (*format == 0xFFFE) {
        require(chunk_size >= 40, ErrorCode::CorruptHeader, "truncated extensible fmt chunk");
        format = load_le<std::uint16_t>(chunk + 32);  // first two bytes of the subformat GUID
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      // Streaming writers sometimes leave the size at 0 or 0xFFFFFFFF; take what is there.
      const std::size_t size = (chunk_size == 0 || chunk_size > available) ? available : chunk_size;
      payload = bytes.subspan(body, size);
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1u);
    if (have_data && format) break;
  }

  require(format.has_value(), ErrorCode::CorruptHeader, "no fmt chunk");
  require(have_data, ErrorCode::CorruptHeader, "no data chunk");
  require(channels > 0, ErrorCode::CorruptHeader, "zero channels");
  require(rate > 0, ErrorCode::CorruptHeader, "zero sample rate");

  const bool pcm16 = *format == 1 && bits == 16;
  const bool float32 = *format == 3 && bits == 32;
  require(pcm16 || float32, ErrorCode::UnsupportedFormat,
          "codec " + std::to_string(*format) + " at " + std::to_string(bits) + " bits");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = payload.size() / frame_bytes;
  require(frames > 0, ErrorCode::EmptyAudio, "data chunk holds no complete frames");

  AudioBuffer audio;
  audio.sample_rate = static_cast<int>(rate);
  audio.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = payload.data() + f * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        acc += static_cast<double>(load_le<std::int16_t>(p)) / 32768.0;
      } else {
        const double v = static_cast<double>(load_le<float>(p));
        require(std::isfinite(v), ErrorCode::CorruptHeader, "non-finite float sample");
        acc += v;
      }
    }
    audio.samples[f] = acc / static_cast<double>(channels);
  }
  return audio;
}

inline AudioBuffer load_wav(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + std::string(e.what()));
  }
}

enum class WavEncoding { pcm16, float32 };

/// Serializes a mono buffer. PCM16 rounds to nearest and clips to the int16 range.
inline std::vector<unsigned char> encode_wav(const AudioBuffer& audio, WavEncoding encoding = WavEncoding::pcm16) {
  std::ostringstream out(std::ios::binary);
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint32_t data_size = static_cast<std::uint32_t>(audio.samples.size() * (bits / 8));
  out.write("RIFF", 4);
  binary::write_le<std::uint32_t>(out, 36 + data_size);
  out.write("WAVEfmt ", 8);
  binary::write_le<std::uint32_t>(out, 16);
  binary::write_le<std::uint16_t>(out, encoding == WavEncoding::pcm16 ? 1 : 3);
  binary::write_le<std::uint16_t>(out, 1);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate) * (bits / 8));
  binary::write_le<std::uint16_t>(out, bits / 8);
  binary::write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  binary::write_le<std::uint32_t>(out, data_size);
  for (double s : audio.samples) {
    if (encoding == WavEncoding::pcm16) {
      const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
      binary::write_le<std::int16_t>(out, static_cast<std::int16_t>(scaled));
    } else {
      binary::write_le<float>(out, static_cast<float>(s));
    }
  }
  const std::string blob = out.str();
  return {blob.begin(), blob.end()};
}

inline void save_wav(const AudioBuffer& audio, const std::filesystem::path& path,
                     WavEncoding encoding = WavEncoding::pcm16) {
  const auto bytes = encode_wav(audio, encoding);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::IoFailure, "short write to " + path.string());
}

/// Linear-interpolation resampling; identity when the rate already matches.
inline AudioBuffer resample_linear(const AudioBuffer& audio, int target_rate) {
  require(target_rate > 0, ErrorCode::InvalidArgument, "target rate must be positive");
  if (audio.sample_rate == target_rate) return audio;
  require(!audio.samples.empty(), ErrorCode::EmptyAudio, "cannot resample empty audio");
  const double ratio = static_cast<double>(audio.sample_rate) / target_rate;
  const auto out_len = static_cast<std::size_t>(
      std::floor(static_cast<double>(audio.samples.size() - 1) / ratio)) + 1;
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double src = static_cast<double>(i) * ratio;
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, audio.samples.size() - 1);
    const double frac = src - static_cast<double>(lo);
    out.samples[i] = audio.samples[lo] + frac * (audio.samples[hi] - audio.samples[lo]);
  }
  return out;
}

/// Loads a file and brings it to the pipeline rate.
inline AudioBuffer load_wav_resampled(const std::filesystem::path& path, int target_rate = kDefaultSampleRate) {
  return resample_linear(load_wav(path), target_rate);
}

// ---------------------------------------------------------------------------
// Manifests

struct ManifestEntry {
  std::string utt_id;
  std::string speaker_id;
  std::string path;
  std::string text;

  bool operator==(const ManifestEntry&) const = default;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // relative paths resolve against this

  std::size_t size() const noexcept { return entries.size(); }

  std::filesystem::path resolve(const ManifestEntry& entry) const {
    const std::filesystem::path p(entry.path);
    if (p.is_absolute()) return p;
    return base_dir / p;
  }
};

inline constexpr std::string_view kManifestHeader = "utt_id\tspeaker_id\tpath\ttext";

/// Rejects duplicate (speaker_id, utt_id) keys. The same utt_id across
/// speakers is the normal shape of a parallel corpus.
inline void check_unique_keys(const CorpusManifest& manifest) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : manifest.entries) {
    require(!e.utt_id.empty() && !e.speaker_id.empty(), ErrorCode::ParseError, "empty utt_id or speaker_id");
    require(seen.emplace(e.speaker_id, e.utt_id).second, ErrorCode::DuplicateEntry,
            "duplicate utterance " + e.speaker_id + "/" + e.utt_id);
  }
}

/// Checks key uniqueness and that every audio path exists.
inline void validate_manifest(const CorpusManifest& manifest) {
  check_unique_keys(manifest);
  for (const auto& e : manifest.entries) {
    const auto resolved = manifest.resolve(e);
    require(std::filesystem::is_regular_file(resolved), ErrorCode::IoFailure, "missing audio " + resolved.string());
  }
}

inline CorpusManifest parse_manifest(std::istream& in, std::filesystem::path base_dir = {}) {
  CorpusManifest manifest;
  manifest.base_dir = std::move(base_dir);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError, "manifest is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  require(line == kManifestHeader, ErrorCode::ParseError, "bad manifest header '" + line + "'");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    require(fields.size() == 3 || fields.size() == 4, ErrorCode::ParseError,
            "manifest line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    fields.resize(4);
    manifest.entries.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  check_unique_keys(manifest);
  return manifest;
}

/// Reads a manifest; relative paths resolve against `corpus_root` if given,
/// else the VQDR_CORPUS_ROOT environment variable, else the manifest's directory.
inline CorpusManifest read_manifest(const std::filesystem::path& path,
                                    std::optional<std::filesystem::path> corpus_root = std::nullopt) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open manifest " + path.string());
  std::filesystem::path base = path.parent_path();
  if (corpus_root) {
    base = *corpus_root;
  } else if (const char* env = std::getenv("VQDR_CORPUS_ROOT"); env != nullptr && *env != '\0') {
    base = env;
  }
  return parse_manifest(in, base);
}

inline void write_manifest(const CorpusManifest& manifest, std::ostream& out) {
  out << kManifestHeader << '\n';
  for (const auto& e : manifest.entries) {
    out << e.utt_id << '\t' << e.speaker_id << '\t' << e.path << '\t' << e.text << '\n';
  }
}

inline void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
  write_manifest(manifest, out);
}

inline std::vector<std::string> speakers(const CorpusManifest& manifest) {
  std::set<std::string> ids;
  for (const auto& e : manifest.entries) ids.insert(e.speaker_id);
  return {ids.begin(), ids.end()};
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// Entries beyond train+val+test land in `unused` so the four parts always
/// cover the input.
struct CorpusSplit {
  CorpusManifest train;
  CorpusManifest val;
  CorpusManifest test;
  CorpusManifest unused;
};

/// Per-speaker split. One seeded permutation of the sorted global utt_id set
/// drives every speaker, so a parallel corpus keeps each utt_id in the same
/// partition for all speakers.
inline CorpusSplit split_corpus(const CorpusManifest& manifest, SplitSizes sizes, std::uint64_t seed) {
  check_unique_keys(manifest);
  std::map<std::string, std::map<std::string, const ManifestEntry*>> by_speaker;
  std::set<std::string> all_ids;
  for (const auto& e : manifest.entries) {
    by_speaker[e.speaker_id][e.utt_id] = &e;
    all_ids.insert(e.utt_id);
  }
  const std::size_t wanted = sizes.train + sizes.val + sizes.test;
  for (const auto& [speaker, utts] : by_speaker) {
    require(utts.size() >= wanted, ErrorCode::InsufficientUtterances,
            "speaker " + speaker + " has " + std::to_string(utts.size()) + " utterances, split needs " +
                std::to_string(wanted));
  }

  std::vector<std::string> order(all_ids.begin(), all_ids.end());
  Rng rng(seed);
  rng.shuffle(order);

  CorpusSplit split;
  for (auto* part : {&split.train, &split.val, &split.test, &split.unused}) part->base_dir = manifest.base_dir;
  for (const auto& [speaker, utts] : by_speaker) {
    std::size_t taken = 0;
    for (const auto& utt_id : order) {
      const auto it = utts.find(utt_id);
      if (it == utts.end()) continue;
      CorpusManifest* dest = &split.unused;
      if (taken < sizes.train) {
        dest = &split.train;
      } else if (taken < sizes.train + sizes.val) {
        dest = &split.val;
      } else if (taken < wanted) {
        dest = &split.test;
      }
      dest->entries.push_back(*it->second);
      ++taken;
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Parallel pairs

struct UtterancePair {
  ManifestEntry a;
  ManifestEntry b;
};

inline std::vector<UtterancePair> pair_parallel(const CorpusManifest& manifest, const std::string& speaker_a,
                                                const std::string& speaker_b) {
  require(speaker_a != speaker_b, ErrorCode::InvalidArgument, "pairing a speaker with itself: " + speaker_a);
  std::map<std::string, const ManifestEntry*> a_utts;
  std::map<std::string, const ManifestEntry*> b_utts;
  for (const auto& e : manifest.entries) {
    if (e.speaker_id == speaker_a) a_utts[e.utt_id] = &e;
    if (e.speaker_id == speaker_b) b_utts[e.utt_id] = &e;
  }
  require(!a_utts.empty(), ErrorCode::UnknownSpeaker, speaker_a);
  require(!b_utts.empty(), ErrorCode::UnknownSpeaker, speaker_b);
  std::vector<UtterancePair> pairs;
  for (const auto& [utt_id, entry] : a_utts) {
    if (const auto it = b_utts.find(utt_id); it != b_utts.end()) pairs.push_back({*entry, *it->second});
  }
  require(!pairs.empty(), ErrorCode::NoCommonUtterances, speaker_a + " and " + speaker_b);
  return pairs;
}

}  // namespace vqdr
