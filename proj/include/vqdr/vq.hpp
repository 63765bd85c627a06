#pragma once

// Vector quantization with adjacent-duplicate removal: k-means codebook
// training, nearest-centroid quantization, run-length collapse/expansion and
// codeword-lookup inversion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "vqdr/common.hpp"
#include "vqdr/dsp.hpp"
#include "vqdr/error.hpp"

namespace vqdr {

using Code = std::uint32_t;

struct Codebook {
  RealMatrix centroids;  // k x D, values representable as f32
  std::uint64_t seed = 0;
  std::uint32_t iterations_run = 0;
  double final_distortion = 0.0;
  std::vector<double> distortion_history;  // one entry per assignment step

  std::size_t k() const noexcept { return centroids.rows(); }
  std::size_t dim() const noexcept { return centroids.cols(); }
};

struct CodeSequence {
  std::vector<Code> codes;
  double frame_hop_s = 0.010;

  std::size_t size() const noexcept { return codes.size(); }
  bool operator==(const CodeSequence&) const = default;
};

struct RunLengthSequence {
  std::vector<Code> codes;
  std::vector<std::uint32_t> durations;  // frames per run
  double frame_hop_s = 0.010;

  std::size_t size() const noexcept { return codes.size(); }
  std::size_t total_frames() const noexcept {
    std::size_t total = 0;
    for (auto d : durations) total += d;
    return total;
  }
  bool operator==(const RunLengthSequence&) const = default;
};

struct KMeansOptions {
  std::size_t k = 128;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double rel_tol = 1e-5;
  std::size_t restarts = 1;  // best final distortion wins
  std::size_t jobs = 1;      // assignment-step workers
};

namespace detail {

struct Assignment {
  std::vector<Code> labels;
  std::vector<double> dist2;
  double total = 0.0;
};

inline Code nearest_centroid(std::span<const double> x, const RealMatrix& centroids, double& best_d2) {
  Code best = 0;
  best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d2 = squared_distance(x, centroids.row(c));
    if (d2 < best_d2) {  // strict: ties keep the lowest index
      best_d2 = d2;
      best = static_cast<Code>(c);
    }
  }
  return best;
}

// Fixed-size blocks keep the summation order independent of the worker count.
inline constexpr std::size_t kAssignBlock = 1024;

inline Assignment assign(const RealMatrix& points, const RealMatrix& centroids, std::size_t jobs) {
  const std::size_t n = points.rows();
  Assignment a;
  a.labels.resize(n);
  a.dist2.resize(n);
  const std::size_t blocks = (n + kAssignBlock - 1) / kAssignBlock;
  const auto work = [&](std::size_t first_block, std::size_t stride) {
    for (std::size_t b = first_block; b < blocks; b += stride) {
      const std::size_t end = std::min(n, (b + 1) * kAssignBlock);
      for (std::size_t i = b * kAssignBlock; i < end; ++i) a.labels[i] = nearest_centroid(points.row(i), centroids, a.dist2[i]);
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(blocks, 1));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  for (double d : a.dist2) a.total += d;
  return a;
}

inline RealMatrix kmeanspp_init(const RealMatrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  RealMatrix centroids(k, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.index(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c)));
      total += d2[i];
    }
    if (total <= 0.0) {
      pick = rng.index(n);  // fewer distinct points than k
      continue;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    if (pick == n) {  // rounding at the tail: last point with positive weight
      for (std::size_t i = n; i-- > 0;) {
        if (d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
  }
  return centroids;
}

/// Cluster means, computed as offsets from the first member so a cluster of
/// identical points reproduces that point exactly.
inline std::vector<std::size_t> update_centroids(const RealMatrix& points, const Assignment& a, RealMatrix& centroids) {
  const std::size_t k = centroids.rows();
  const std::size_t dim = centroids.cols();
  std::vector<std::size_t> counts(k, 0);
  std::vector<std::size_t> anchor(k, 0);
  RealMatrix sums(k, dim);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const Code c = a.labels[i];
    if (counts[c]++ == 0) anchor[c] = i;
    const auto x = points.row(i);
    const auto ref = points.row(anchor[c]);
    auto s = sums.row(c);
    for (std::size_t d = 0; d < dim; ++d) s[d] += x[d] - ref[d];
  }
  std::vector<std::size_t> empty;
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      empty.push_back(c);
      continue;
    }
    const auto ref = points.row(anchor[c]);
    auto out = centroids.row(c);
    for (std::size_t d = 0; d < dim; ++d) out[d] = ref[d] + sums(c, d) / static_cast<double>(counts[c]);
  }
  return empty;
}

/// Moves each empty centroid onto the point currently farthest from its own
/// centroid. Those points then sit at distance zero, so no reseed repeats.
inline void repair_empty(const RealMatrix& points, Assignment& a, RealMatrix& centroids,
                         const std::vector<std::size_t>& empty) {
  for (const std::size_t c : empty) {
    std::size_t far = 0;
    double far_d2 = -1.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (a.dist2[i] > far_d2) {
        far_d2 = a.dist2[i];
        far = i;
      }
    }
    std::copy(points.row(far).begin(), points.row(far).end(), centroids.row(c).begin());
    a.dist2[far] = 0.0;
  }
}

inline void check_points(const RealMatrix& points, std::size_t k) {
  require(k >= 1, ErrorCode::InvalidArgument, "codebook size must be at least 1");
  require(points.cols() > 0, ErrorCode::DimensionMismatch, "zero-dimensional features");
  require(points.rows() >= k, ErrorCode::TooFewPoints,
          std::to_string(points.rows()) + " points for " + std::to_string(k) + " centroids");
  for (double v : points.data()) require(std::isfinite(v), ErrorCode::NonFiniteInput, "non-finite feature value");
}

inline Codebook lloyd(const RealMatrix& points, const KMeansOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  Codebook cb;
  cb.seed = options.seed;
  cb.centroids = kmeanspp_init(points, options.k, rng);
  const double n = static_cast<double>(points.rows());
  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    Assignment a = assign(points, cb.centroids, options.jobs);
    const double distortion = a.total / n;
    const std::optional<double> previous =
        cb.distortion_history.empty() ? std::nullopt : std::optional(cb.distortion_history.back());
    cb.distortion_history.push_back(distortion);
    cb.iterations_run = static_cast<std::uint32_t>(iter + 1);
    if (distortion == 0.0) break;
    if (previous && (*previous - distortion) < options.rel_tol * *previous) break;
    // Rounding in the means can cost an ulp once the partition is stable;
    // keeping the old centroids then makes the recorded history monotone.
    const RealMatrix before = cb.centroids;
    const auto empty = update_centroids(points, a, cb.centroids);
    double moved = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      moved += squared_distance(points.row(i), cb.centroids.row(a.labels[i]));
    }
    if (moved > a.total) cb.centroids = before;
    if (!empty.empty()) repair_empty(points, a, cb.centroids, empty);
  }
  for (auto& v : cb.centroids.data()) v = static_cast<float>(v);
  cb.final_distortion = assign(points, cb.centroids, options.jobs).total / n;
  return cb;
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations until the relative
/// improvement drops below `rel_tol` or `max_iters` is reached. Centroids are
/// rounded to f32 so the codebook file round-trips exactly.
inline Codebook train_codebook(const RealMatrix& points, const KMeansOptions& options) {
  detail::check_points(points, options.k);
  require(options.restarts >= 1, ErrorCode::InvalidArgument, "restarts must be at least 1");
  std::optional<Codebook> best;
  for (std::size_t r = 0; r < options.restarts; ++r) {
    Codebook cb = detail::lloyd(points, options, options.seed + r);
    if (!best || cb.final_distortion < best->final_distortion) best = std::move(cb);
  }
  return std::move(*best);
}

inline RealMatrix stack_rows(std::span<const FeatureMatrix> utterances) {
  require(!utterances.empty(), ErrorCode::EmptyInput, "no feature matrices");
  RealMatrix all;
  const std::size_t dim = utterances.front().dim();
  std::size_t total = 0;
  for (const auto& u : utterances) {
    require(u.dim() == dim, ErrorCode::DimensionMismatch, "feature dimensions differ across utterances");
    total += u.frames();
  }
  std::vector<double> data;
  data.reserve(total * dim);
  for (const auto& u : utterances) data.insert(data.end(), u.data.data().begin(), u.data.data().end());
  return RealMatrix(total, dim, std::move(data));
}

inline Codebook train_codebook(std::span<const FeatureMatrix> utterances, const KMeansOptions& options) {
  return train_codebook(stack_rows(utterances), options);
}

/// Nearest centroid per frame; ties go to the lowest index.
inline CodeSequence quantize(const FeatureMatrix& features, const Codebook& codebook) {
  require(features.dim() == codebook.dim(), ErrorCode::DimensionMismatch,
          "features have " + std::to_string(features.dim()) + " dims, codebook " + std::to_string(codebook.dim()));
  CodeSequence seq;
  seq.frame_hop_s = features.frame_hop_s;
  seq.codes.resize(features.frames());
  for (std::size_t t = 0; t < features.frames(); ++t) {
    double d2 = 0.0;
    seq.codes[t] = detail::nearest_centroid(features.data.row(t), codebook.centroids, d2);
  }
  return seq;
}

/// Mean squared distance from each frame to its assigned centroid.
inline double quantization_distortion(const FeatureMatrix& features, const Codebook& codebook) {
  const auto seq = quantize(features, codebook);
  double total = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    total += squared_distance(features.data.row(t), codebook.centroids.row(seq.codes[t]));
  }
  return seq.size() == 0 ? 0.0 : total / static_cast<double>(seq.size());
}

/// Collapses runs of identical adjacent codes; durations keep the run lengths.
inline RunLengthSequence remove_duplicates(const CodeSequence& seq) {
  RunLengthSequence rls;
  rls.frame_hop_s = seq.frame_hop_s;
  for (const Code c : seq.codes) {
    if (!rls.codes.empty() && rls.codes.back() == c) {
      ++rls.durations.back();
    } else {
      rls.codes.push_back(c);
      rls.durations.push_back(1);
    }
  }
  return rls;
}

inline CodeSequence expand(const RunLengthSequence& rls) {
  require(rls.codes.size() == rls.durations.size(), ErrorCode::LengthMismatch, "codes and durations differ in length");
  CodeSequence seq;
  seq.frame_hop_s = rls.frame_hop_s;
  seq.codes.reserve(rls.total_frames());
  for (std::size_t i = 0; i < rls.codes.size(); ++i) {
    require(rls.durations[i] > 0, ErrorCode::InvalidArgument, "zero-length run");
    seq.codes.insert(seq.codes.end(), rls.durations[i], rls.codes[i]);
  }
  return seq;
}

/// Table lookup: row t is the centroid of codes[t].
inline FeatureMatrix invert(const CodeSequence& seq, const Codebook& codebook,
                            FeatureKind kind = FeatureKind::external, double frame_len_s = 0.025) {
  FeatureMatrix out;
  out.kind = kind;
  out.frame_hop_s = seq.frame_hop_s;
  out.frame_len_s = frame_len_s;
  out.data = RealMatrix(seq.size(), codebook.dim());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    require(seq.codes[t] < codebook.k(), ErrorCode::CodeOutOfRange,
            "code " + std::to_string(seq.codes[t]) + " at frame " + std::to_string(t));
    const auto c = codebook.centroids.row(seq.codes[t]);
    std::copy(c.begin(), c.end(), out.data.row(t).begin());
  }
  return out;
}

inline FeatureMatrix invert(const CodeSequence& seq, const Codebook& codebook, const FeatureMatrix& like) {
  return invert(seq, codebook, like.kind, like.frame_len_s);
}

// ---------------------------------------------------------------------------
// Codebook file: "VQDRCODE", u16 version, u32 k, u32 D, u64 seed, k*D f32
// row-major. An optional trailer (u32 iterations_run, f64 final_distortion)
// follows; readers of the base layout can ignore it.

inline constexpr char kCodebookMagic[8] = {'V', 'Q', 'D', 'R', 'C', 'O', 'D', 'E'};
inline constexpr std::uint16_t kCodebookVersion = 1;

inline void write_codebook(const Codebook& cb, std::ostream& out) {
  out.write(kCodebookMagic, 8);
  binary::write_le<std::uint16_t>(out, kCodebookVersion);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cb.k()));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cb.dim()));
  binary::write_le<std::uint64_t>(out, cb.seed);
  for (double v : cb.centroids.data()) binary::write_le<float>(out, static_cast<float>(v));
  binary::write_le<std::uint32_t>(out, cb.iterations_run);
  binary::write_le<double>(out, cb.final_distortion);
}

inline Codebook read_codebook(std::istream& in) {
  char magic[8] = {};
  require(static_cast<bool>(in.read(magic, 8)) && std::equal(magic, magic + 8, kCodebookMagic), ErrorCode::BadMagic,
          "not a codebook file");
  std::uint16_t version = 0;
  require(binary::read_le(in, version), ErrorCode::VersionMismatch, "truncated header");
  require(version == kCodebookVersion, ErrorCode::VersionMismatch, "codebook version " + std::to_string(version));
  std::uint32_t k = 0;
  std::uint32_t dim = 0;
  Codebook cb;
  require(binary::read_le(in, k) && binary::read_le(in, dim) && binary::read_le(in, cb.seed), ErrorCode::VersionMismatch,
          "truncated codebook header");
  require(k >= 1 && dim >= 1, ErrorCode::CorruptHeader, "empty codebook");
  std::vector<double> values(static_cast<std::size_t>(k) * dim);
  for (auto& v : values) {
    float f = 0.0f;
    require(binary::read_le(in, f), ErrorCode::CorruptHeader, "truncated centroid table");
    v = f;
  }
  cb.centroids = RealMatrix(k, dim, std::move(values));
  std::uint32_t iterations = 0;
  double distortion = 0.0;
  if (binary::read_le(in, iterations) && binary::read_le(in, distortion)) {
    cb.iterations_run = iterations;
    cb.final_distortion = distortion;
  }
  return cb;
}

inline void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
  write_codebook(cb, out);
  out.flush();
  require(static_cast<bool>(out), ErrorCode::IoFailure, "short write to " + path.string());
}

inline Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  return read_codebook(in);
}

// CSV exports.

inline void write_codes_csv(const CodeSequence& seq, std::ostream& out) {
  out << "frame,code\n";
  for (std::size_t t = 0; t < seq.size(); ++t) out << t << ',' << seq.codes[t] << '\n';
}

inline void write_rls_csv(const RunLengthSequence& rls, std::ostream& out) {
  out << "code,duration_frames\n";
  for (std::size_t i = 0; i < rls.size(); ++i) out << rls.codes[i] << ',' << rls.durations[i] << '\n';
}

inline RunLengthSequence read_rls_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && trim(line) == "code,duration_frames", ErrorCode::ParseError,
          "missing 'code,duration_frames' header");
  RunLengthSequence rls;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    require(fields.size() == 2, ErrorCode::ParseError, "bad run line '" + line + "'");
    try {
      rls.codes.push_back(static_cast<Code>(std::stoul(fields[0])));
      rls.durations.push_back(static_cast<std::uint32_t>(std::stoul(fields[1])));
    } catch (const std::exception&) {
      fail(ErrorCode::ParseError, "bad run line '" + line + "'");
    }
    require(rls.durations.back() > 0, ErrorCode::ParseError, "zero-length run");
  }
  return rls;
}

}  // namespace vqdr
