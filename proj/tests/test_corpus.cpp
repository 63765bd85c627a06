#include <gtest/gtest.h>

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "vqdr/corpus.hpp"

using namespace vqdr;

namespace {

// Hand-rolled RIFF writer, independent of encode_wav.
struct WavBytes {
  std::vector<unsigned char> b;
  void u16(std::uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back(v >> 8);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
  }
  void tag(const char* t) { b.insert(b.end(), t, t + 4); }
};

std::vector<unsigned char> oracle_wav(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                      std::uint16_t bits, const std::vector<unsigned char>& payload,
                                      bool extensible = false) {
  WavBytes w;
  const std::uint32_t fmt_size = extensible ? 40 : 16;
  w.tag("RIFF");
  w.u32(4 + 8 + fmt_size + 8 + static_cast<std::uint32_t>(payload.size()));
  w.tag("WAVE");
  w.tag("fmt ");
  w.u32(fmt_size);
  w.u16(extensible ? 0xFFFE : format);
  w.u16(channels);
  w.u32(rate);
  w.u32(rate * channels * bits / 8);
  w.u16(channels * bits / 8);
  w.u16(bits);
  if (extensible) {
    w.u16(22);
    w.u16(bits);
    w.u32(0);
    w.u16(format);  // subformat GUID begins with the codec tag
    const unsigned char rest[14] = {0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x80, 0x00,
                                    0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};
    w.b.insert(w.b.end(), rest, rest + 14);
  }
  w.tag("data");
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.b.insert(w.b.end(), payload.begin(), payload.end());
  return w.b;
}

std::vector<unsigned char> pcm16_payload(const std::vector<std::int16_t>& values) {
  std::vector<unsigned char> p;
  for (auto v : values) {
    const auto u = static_cast<std::uint16_t>(v);
    p.push_back(u & 0xff);
    p.push_back(u >> 8);
  }
  return p;
}

CorpusManifest make_manifest(const std::vector<std::string>& speakers, std::size_t utts) {
  CorpusManifest m;
  for (const auto& s : speakers) {
    for (std::size_t u = 0; u < utts; ++u) {
      char id[16];
      std::snprintf(id, sizeof id, "a%04zu", u + 1);
      m.entries.push_back({id, s, s + "/" + id + ".wav", ""});
    }
  }
  return m;
}

}  // namespace

TEST(Wav, SilenceDecodesToZeros) {
  const auto bytes = oracle_wav(1, 1, 16000, 16, pcm16_payload(std::vector<std::int16_t>(16000, 0)));
  const AudioBuffer a = decode_wav(bytes);
  EXPECT_EQ(a.sample_rate, 16000);
  ASSERT_EQ(a.size(), 16000u);
  for (double s : a.samples) EXPECT_EQ(s, 0.0);
}

TEST(Wav, StereoOppositeChannelsDownmixToZero) {
  std::vector<std::int16_t> interleaved;
  for (int i = 0; i < 100; ++i) {
    const auto x = static_cast<std::int16_t>((i * 997) % 20000 - 10000);
    interleaved.push_back(x);
    interleaved.push_back(static_cast<std::int16_t>(-x));
  }
  const AudioBuffer a = decode_wav(oracle_wav(1, 2, 16000, 16, pcm16_payload(interleaved)));
  ASSERT_EQ(a.size(), 100u);
  for (double s : a.samples) EXPECT_EQ(s, 0.0);
}

TEST(Wav, FullScaleSquareWaveMatchesByteOracle) {
  std::vector<std::int16_t> square;
  for (int i = 0; i < 64; ++i) square.push_back(i % 2 == 0 ? 32767 : -32767);
  const AudioBuffer a = decode_wav(oracle_wav(1, 1, 16000, 16, pcm16_payload(square)));
  ASSERT_EQ(a.size(), 64u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.samples[i], (i % 2 == 0 ? 1.0 : -1.0) * 32767.0 / 32768.0);
}

TEST(Wav, EncoderMatchesByteOracle) {
  AudioBuffer a;
  a.sample_rate = 22050;
  a.samples = {0.0, 0.5, -0.5, 32767.0 / 32768.0, -1.0};
  const auto expected = oracle_wav(1, 1, 22050, 16, pcm16_payload({0, 16384, -16384, 32767, -32768}));
  EXPECT_EQ(encode_wav(a), expected);
}

TEST(Wav, Float32AndExtensible) {
  const std::vector<float> values = {0.25f, -0.75f, 1.0f};
  std::vector<unsigned char> payload(values.size() * 4);
  std::memcpy(payload.data(), values.data(), payload.size());
  for (bool ext : {false, true}) {
    const AudioBuffer a = decode_wav(oracle_wav(3, 1, 8000, 32, payload, ext));
    ASSERT_EQ(a.size(), 3u);
    EXPECT_EQ(a.sample_rate, 8000);
    for (std::size_t i = 0; i < values.size(); ++i) EXPECT_EQ(a.samples[i], values[i]);
  }
}

TEST(Wav, Pcm16RoundTripWithinOneStep) {
  Rng rng(3);
  AudioBuffer a;
  a.sample_rate = 16000;
  for (int i = 0; i < 5000; ++i) a.samples.push_back(rng.uniform(-1.0, 1.0));
  const AudioBuffer b = decode_wav(encode_wav(a));
  ASSERT_EQ(b.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(std::fabs(a.samples[i] - b.samples[i]), 1.0 / 32768.0);
  const AudioBuffer c = decode_wav(encode_wav(a, WavEncoding::float32));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(c.samples[i], static_cast<float>(a.samples[i]));
}

TEST(Wav, Errors) {
  const auto code_of = [](const std::vector<unsigned char>& bytes) {
    try {
      decode_wav(bytes);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code_of(oracle_wav(2, 1, 16000, 4, {1, 2, 3, 4})), ErrorCode::UnsupportedFormat);  // ADPCM
  EXPECT_EQ(code_of(oracle_wav(1, 1, 16000, 8, {1, 2, 3, 4})), ErrorCode::UnsupportedFormat);
  EXPECT_EQ(code_of(oracle_wav(1, 1, 16000, 16, {})), ErrorCode::EmptyAudio);
  EXPECT_EQ(code_of({'R', 'I', 'F', 'F'}), ErrorCode::CorruptHeader);
  auto bad = oracle_wav(1, 1, 16000, 16, pcm16_payload({1, 2}));
  bad[8] = 'X';
  EXPECT_EQ(code_of(bad), ErrorCode::CorruptHeader);
}

TEST(Wav, LoadNamesMissingPath) {
  try {
    load_wav("/nonexistent/file.wav");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoFailure);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/file.wav"), std::string::npos);
  }
}

TEST(Resample, IdentityAndLength) {
  AudioBuffer a;
  a.sample_rate = 32000;
  for (int i = 0; i < 3200; ++i) a.samples.push_back(static_cast<double>(i));
  const AudioBuffer same = resample_linear(a, 32000);
  EXPECT_EQ(same.samples, a.samples);
  const AudioBuffer half = resample_linear(a, 16000);
  EXPECT_EQ(half.sample_rate, 16000);
  ASSERT_EQ(half.size(), 1600u);
  for (std::size_t i = 0; i < half.size(); ++i) EXPECT_DOUBLE_EQ(half.samples[i], 2.0 * static_cast<double>(i));
  // A linear ramp is reproduced exactly by linear interpolation.
  const AudioBuffer up = resample_linear(a, 48000);
  for (std::size_t i = 0; i < up.size(); ++i) EXPECT_NEAR(up.samples[i], static_cast<double>(i) * 2.0 / 3.0, 1e-9);
}

TEST(Manifest, ParseWriteRoundTrip) {
  std::istringstream in("utt_id\tspeaker_id\tpath\ttext\nu1\ts1\ta/u1.wav\thello world\nu2\ts1\t/abs/u2.wav\t\n");
  const CorpusManifest m = parse_manifest(in, "/base");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.entries[0].text, "hello world");
  EXPECT_EQ(m.entries[1].text, "");
  EXPECT_EQ(m.resolve(m.entries[0]), std::filesystem::path("/base/a/u1.wav"));
  EXPECT_EQ(m.resolve(m.entries[1]), std::filesystem::path("/abs/u2.wav"));
  std::ostringstream out;
  write_manifest(m, out);
  std::istringstream again(out.str());
  EXPECT_EQ(parse_manifest(again, "/base").entries, m.entries);
}

TEST(Manifest, RejectsBadHeaderAndDuplicates) {
  std::istringstream bad_header("id\tspeaker\tpath\ttext\n");
  EXPECT_THROW(parse_manifest(bad_header), Error);
  std::istringstream dup("utt_id\tspeaker_id\tpath\ttext\nu1\ts1\tx.wav\t\nu1\ts1\ty.wav\t\n");
  try {
    parse_manifest(dup);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateEntry);
  }
  std::istringstream parallel("utt_id\tspeaker_id\tpath\ttext\nu1\ts1\tx.wav\t\nu1\ts2\ty.wav\t\n");
  EXPECT_EQ(parse_manifest(parallel).size(), 2u);
}

TEST(Manifest, EnvironmentOverridesBase) {
  test::TempDir dir;
  {
    std::ofstream out(dir / "m.tsv");
    out << "utt_id\tspeaker_id\tpath\ttext\nu1\ts1\tx.wav\t\n";
  }
  ::unsetenv("VQDR_CORPUS_ROOT");
  EXPECT_EQ(read_manifest(dir / "m.tsv").base_dir, dir.path());
  ::setenv("VQDR_CORPUS_ROOT", "/elsewhere", 1);
  EXPECT_EQ(read_manifest(dir / "m.tsv").base_dir, std::filesystem::path("/elsewhere"));
  EXPECT_EQ(read_manifest(dir / "m.tsv", std::filesystem::path("/flag")).base_dir, std::filesystem::path("/flag"));
  ::unsetenv("VQDR_CORPUS_ROOT");
}

TEST(Manifest, ValidateReportsMissingAudio) {
  CorpusManifest m = make_manifest({"s1"}, 1);
  m.base_dir = "/nonexistent";
  EXPECT_THROW(validate_manifest(m), Error);
}

TEST(Split, PaperSizesPerSpeaker) {
  const CorpusManifest m = make_manifest({"s1", "s2", "s3"}, 1132);
  const CorpusSplit s = split_corpus(m, {1032, 50, 50}, 7);
  for (const auto& spk : {"s1", "s2", "s3"}) {
    const auto count = [&](const CorpusManifest& part) {
      return std::count_if(part.entries.begin(), part.entries.end(), [&](const auto& e) { return e.speaker_id == spk; });
    };
    EXPECT_EQ(count(s.train), 1032);
    EXPECT_EQ(count(s.val), 50);
    EXPECT_EQ(count(s.test), 50);
  }
  EXPECT_TRUE(s.unused.entries.empty());
}

TEST(Split, DegenerateAllTrain) {
  const CorpusManifest m = make_manifest({"s1"}, 12);
  const CorpusSplit s = split_corpus(m, {12, 0, 0}, 1);
  EXPECT_TRUE(s.val.entries.empty());
  EXPECT_TRUE(s.test.entries.empty());
  std::set<std::string> ids;
  for (const auto& e : s.train.entries) ids.insert(e.utt_id);
  EXPECT_EQ(ids.size(), 12u);
}

TEST(Split, DeterministicPartitionAndParallel) {
  const CorpusManifest m = make_manifest({"s1", "s2"}, 40);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const CorpusSplit a = split_corpus(m, {20, 5, 5}, seed);
    const CorpusSplit b = split_corpus(m, {20, 5, 5}, seed);
    EXPECT_EQ(a.train.entries, b.train.entries);
    EXPECT_EQ(a.test.entries, b.test.entries);

    std::set<std::pair<std::string, std::string>> seen;
    std::size_t total = 0;
    for (const auto* part : {&a.train, &a.val, &a.test, &a.unused}) {
      for (const auto& e : part->entries) {
        EXPECT_TRUE(seen.emplace(e.speaker_id, e.utt_id).second) << "entry in two partitions";
        ++total;
      }
    }
    EXPECT_EQ(total, m.size());
    // The same utt_id lands in the same partition for every speaker.
    for (const auto* part : {&a.train, &a.val, &a.test}) {
      std::set<std::string> s1;
      std::set<std::string> s2;
      for (const auto& e : part->entries) (e.speaker_id == "s1" ? s1 : s2).insert(e.utt_id);
      EXPECT_EQ(s1, s2);
    }
  }
  EXPECT_NE(split_corpus(m, {20, 5, 5}, 1).train.entries, split_corpus(m, {20, 5, 5}, 2).train.entries);
}

TEST(Split, InsufficientUtterances) {
  try {
    split_corpus(make_manifest({"s1"}, 5), {4, 1, 1}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientUtterances);
  }
}

TEST(Pairs, IntersectionSortedByUtt) {
  CorpusManifest m;
  m.entries = {{"a0002", "x", "x2", ""}, {"a0001", "x", "x1", ""}, {"a0003", "x", "x3", ""},
               {"a0001", "y", "y1", ""}, {"a0002", "y", "y2", ""}};
  const auto pairs = pair_parallel(m, "x", "y");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].a.utt_id, "a0001");
  EXPECT_EQ(pairs[1].a.utt_id, "a0002");
  for (const auto& p : pairs) {
    EXPECT_EQ(p.a.utt_id, p.b.utt_id);
    EXPECT_EQ(p.a.speaker_id, "x");
    EXPECT_EQ(p.b.speaker_id, "y");
  }
}

TEST(Pairs, Errors) {
  CorpusManifest m;
  m.entries = {{"a1", "x", "p", ""}, {"b1", "y", "q", ""}};
  const auto code_of = [&](const std::string& a, const std::string& b) {
    try {
      pair_parallel(m, a, b);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ParseError;
  };
  EXPECT_EQ(code_of("x", "y"), ErrorCode::NoCommonUtterances);
  EXPECT_EQ(code_of("x", "z"), ErrorCode::UnknownSpeaker);
  EXPECT_EQ(code_of("x", "x"), ErrorCode::InvalidArgument);
}
