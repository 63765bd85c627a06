#pragma once

// Reconstruction MCD as a function of codebook size: train a codebook per
// (size, seed), quantize and invert held-out utterances, and compare the
// lookup reconstruction with the original cepstra frame by frame.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vqdr/dsp.hpp"
#include "vqdr/error.hpp"
#include "vqdr/metrics.hpp"
#include "vqdr/stats.hpp"
#include "vqdr/vq.hpp"

namespace vqdr {

struct SweepOptions {
  std::vector<std::size_t> sizes;
  std::vector<std::uint64_t> seeds;
  std::size_t max_iters = 100;
  double rel_tol = 1e-5;
  std::size_t jobs = 1;  // concurrent (size, seed) trainings
  bool exclude_c0 = true;
};

struct SweepRow {
  std::size_t size = 0;
  double mean_mcd = 0.0;
  double std_mcd = 0.0;  // population std over seeds
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed_mcd;
};

struct SweepReport {
  std::vector<SweepRow> rows;
};

/// Mean over utterances of the frame-wise MCD between each utterance and its
/// codebook reconstruction.
inline double reconstruction_mcd(std::span<const FeatureMatrix> utterances, const Codebook& codebook, bool exclude_c0) {
  double total = 0.0;
  for (const auto& u : utterances) {
    const FeatureMatrix rebuilt = invert(quantize(u, codebook), codebook, u);
    total += mcd(u, rebuilt, {.exclude_c0 = exclude_c0, .use_dtw = false});
  }
  return total / static_cast<double>(utterances.size());
}

inline SweepReport codebook_sweep(std::span<const FeatureMatrix> train, std::span<const FeatureMatrix> eval,
                                  const SweepOptions& options) {
  require(!options.sizes.empty(), ErrorCode::InvalidArgument, "no codebook sizes");
  require(!options.seeds.empty(), ErrorCode::InvalidArgument, "no seeds");
  require(!eval.empty(), ErrorCode::EmptyInput, "no evaluation utterances");
  for (std::size_t i = 0; i < options.sizes.size(); ++i) {
    require(options.sizes[i] >= 1, ErrorCode::InvalidArgument, "codebook size must be positive");
    require(i == 0 || options.sizes[i] > options.sizes[i - 1], ErrorCode::InvalidArgument,
            "codebook sizes must be strictly increasing");
  }
  const RealMatrix points = stack_rows(train);
  detail::check_points(points, options.sizes.back());
  for (const auto& u : eval) {
    require(u.dim() == points.cols(), ErrorCode::DimensionMismatch, "evaluation features differ in dimension");
  }

  const std::size_t n_seeds = options.seeds.size();
  const std::size_t tasks = options.sizes.size() * n_seeds;
  std::vector<double> results(tasks, 0.0);
  std::vector<std::exception_ptr> errors(tasks);
  const auto run = [&](std::size_t task) {
    try {
      KMeansOptions km;
      km.k = options.sizes[task / n_seeds];
      km.seed = options.seeds[task % n_seeds];
      km.max_iters = options.max_iters;
      km.rel_tol = options.rel_tol;
      results[task] = reconstruction_mcd(eval, train_codebook(points, km), options.exclude_c0);
    } catch (...) {
      errors[task] = std::current_exception();
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.jobs, 1, tasks);
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks; ++t) run(t);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < tasks; t += workers) run(t);
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  SweepReport report;
  for (std::size_t s = 0; s < options.sizes.size(); ++s) {
    SweepRow row;
    row.size = options.sizes[s];
    row.seeds = options.seeds;
    row.per_seed_mcd.assign(results.begin() + static_cast<std::ptrdiff_t>(s * n_seeds),
                            results.begin() + static_cast<std::ptrdiff_t>((s + 1) * n_seeds));
    row.mean_mcd = mean(row.per_seed_mcd);
    double var = 0.0;
    for (double v : row.per_seed_mcd) var += (v - row.mean_mcd) * (v - row.mean_mcd);
    row.std_mcd = std::sqrt(var / static_cast<double>(n_seeds));
    report.rows.push_back(std::move(row));
  }
  return report;
}

/// Significance of the size effect: one-way ANOVA with seeds as replicates,
/// and one-tailed paired t-tests (paired by seed) that each size lowers MCD
/// relative to the previous one. Entries are absent where the data are
/// degenerate (a single seed, or identical values).
struct SweepStatistics {
  std::optional<AnovaResult> anova;
  struct Step {
    std::size_t smaller = 0;
    std::size_t larger = 0;
    std::optional<TTestResult> test;
  };
  std::vector<Step> steps;
};

inline SweepStatistics sweep_statistics(const SweepReport& report) {
  SweepStatistics stats;
  std::vector<std::vector<double>> groups;
  for (const auto& row : report.rows) groups.push_back(row.per_seed_mcd);
  try {
    stats.anova = anova_oneway(groups);
  } catch (const Error&) {
  }
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    SweepStatistics::Step step{report.rows[i - 1].size, report.rows[i].size, std::nullopt};
    try {
      step.test = paired_t_test(report.rows[i - 1].per_seed_mcd, report.rows[i].per_seed_mcd, Tail::one);
    } catch (const Error&) {
    }
    stats.steps.push_back(step);
  }
  return stats;
}

inline void write_sweep_csv(const SweepReport& report, std::ostream& out) {
  out << "codebook_size,mean_mcd_db,std_mcd_db,n_seeds,seeds,per_seed_mcd_db\n";
  out << std::setprecision(10);
  for (const auto& row : report.rows) {
    out << row.size << ',' << row.mean_mcd << ',' << row.std_mcd << ',' << row.seeds.size() << ',';
    for (std::size_t i = 0; i < row.seeds.size(); ++i) out << (i ? ";" : "") << row.seeds[i];
    out << ',';
    for (std::size_t i = 0; i < row.per_seed_mcd.size(); ++i) out << (i ? ";" : "") << row.per_seed_mcd[i];
    out << '\n';
  }
}

inline void write_sweep_table(const SweepReport& report, std::ostream& out) {
  out << std::left << std::setw(10) << "size" << std::setw(14) << "MCD (dB)" << "std\n";
  for (const auto& row : report.rows) {
    out << std::left << std::setw(10) << ("vq" + std::to_string(row.size)) << std::setw(14) << std::fixed
        << std::setprecision(4) << row.mean_mcd << row.std_mcd << '\n';
  }
  out.unsetf(std::ios::fixed);
}

inline void write_sweep_statistics_csv(const SweepStatistics& stats, std::ostream& out) {
  out << "test,groups,statistic,df1,df2,p\n" << std::setprecision(10);
  if (stats.anova) {
    out << "anova_oneway,all," << stats.anova->f << ',' << stats.anova->df_between << ',' << stats.anova->df_within
        << ',' << stats.anova->p << '\n';
  }
  for (const auto& step : stats.steps) {
    if (!step.test) continue;
    out << "paired_t_one_tailed,vq" << step.smaller << ">vq" << step.larger << ',' << step.test->t << ','
        << step.test->df << ",," << step.test->p << '\n';
  }
}

/// Line plot of mean MCD against log2(codebook size) with +-1 std bars.
inline void write_sweep_svg(const SweepReport& report, std::ostream& out) {
  require(!report.rows.empty(), ErrorCode::EmptyInput, "empty sweep report");
  constexpr double kWidth = 640.0;
  constexpr double kHeight = 400.0;
  constexpr double kMargin = 60.0;
  double x_lo = std::log2(static_cast<double>(report.rows.front().size));
  double x_hi = std::log2(static_cast<double>(report.rows.back().size));
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  double y_lo = report.rows.front().mean_mcd;
  double y_hi = y_lo;
  for (const auto& r : report.rows) {
    y_lo = std::min(y_lo, r.mean_mcd - r.std_mcd);
    y_hi = std::max(y_hi, r.mean_mcd + r.std_mcd);
  }
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  const auto px = [&](double x) { return kMargin + (x - x_lo) / (x_hi - x_lo) * (kWidth - 2 * kMargin); };
  const auto py = [&](double y) { return kHeight - kMargin - (y - y_lo) / (y_hi - y_lo) * (kHeight - 2 * kMargin); };

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin << "\" y2=\""
      << kHeight - kMargin << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\"" << kHeight - kMargin
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 15 << "\" text-anchor=\"middle\" font-size=\"14\">"
      << "codebook size</text>\n";
  svg << "<text x=\"18\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 "
      << kHeight / 2 << ")\">MCD (dB)</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = y_lo + (y_hi - y_lo) * tick / 4.0;
    svg << "<text x=\"" << kMargin - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << v
        << "</text>\n";
  }
  svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (const auto& r : report.rows) svg << px(std::log2(static_cast<double>(r.size))) << ',' << py(r.mean_mcd) << ' ';
  svg << "\"/>\n";
  for (const auto& r : report.rows) {
    const double x = px(std::log2(static_cast<double>(r.size)));
    svg << "<line x1=\"" << x << "\" y1=\"" << py(r.mean_mcd - r.std_mcd) << "\" x2=\"" << x << "\" y2=\""
        << py(r.mean_mcd + r.std_mcd) << "\" stroke=\"#1f77b4\"/>\n";
    svg << "<circle cx=\"" << x << "\" cy=\"" << py(r.mean_mcd) << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    svg << "<text x=\"" << x << "\" y=\"" << kHeight - kMargin + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << r.size << "</text>\n";
  }
  svg << "</svg>\n";
  out << svg.str();
}

}  // namespace vqdr
