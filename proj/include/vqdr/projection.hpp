#pragma once

// 2-D projections of embedding sets: PCA and exact t-SNE.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vqdr/common.hpp"
#include "vqdr/error.hpp"

namespace vqdr {

enum class ProjectionMethod { pca, tsne };

struct ProjectionOptions {
  ProjectionMethod method = ProjectionMethod::pca;
  std::uint64_t seed = 0;
  double perplexity = 5.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
};

/// Top-2 principal component scores. Each component is sign-fixed so its
/// largest-magnitude loading is positive.
inline RealMatrix pca_2d(const RealMatrix& points) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  Eigen::MatrixXd x(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = points(i, d);
  }
  const Eigen::RowVectorXd centroid = x.colwise().mean();
  x.rowwise() -= centroid;
  const Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(n > 1 ? n - 1 : 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorCode::InvalidArgument, "eigendecomposition failed");

  RealMatrix out(n, 2);
  const auto components = std::min<std::size_t>(2, dim);
  for (std::size_t c = 0; c < components; ++c) {
    Eigen::VectorXd axis = solver.eigenvectors().col(static_cast<Eigen::Index>(dim - 1 - c));
    Eigen::Index pivot = 0;
    axis.cwiseAbs().maxCoeff(&pivot);
    if (axis(pivot) < 0.0) axis = -axis;
    const Eigen::VectorXd scores = x * axis;
    for (std::size_t i = 0; i < n; ++i) out(i, c) = scores(static_cast<Eigen::Index>(i));
  }
  return out;
}

namespace detail {

/// Row-conditional affinities p_{j|i} with per-row precision found by
/// bisection so that the row entropy equals log(perplexity).
inline RealMatrix conditional_affinities(const RealMatrix& d2, double perplexity) {
  const std::size_t n = d2.rows();
  const double target = std::log(perplexity);
  RealMatrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 200; ++step) {
      double sum = 0.0;
      double weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = std::exp(-beta * d2(i, j));
        p(i, j) = w;
        sum += w;
        weighted += w * d2(i, j);
      }
      if (sum <= 0.0) {
        hi = beta;
        beta = (lo + hi) / 2.0;
        continue;
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      for (std::size_t j = 0; j < n; ++j) p(i, j) = j == i ? 0.0 : p(i, j) / sum;
      const double gap = entropy - target;
      if (std::fabs(gap) < 1e-10) break;
      if (gap > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (lo + hi) / 2.0;
      } else {
        hi = beta;
        beta = (lo + hi) / 2.0;
      }
    }
  }
  return p;
}

}  // namespace detail

/// Exact O(N^2) t-SNE with early exaggeration, momentum and adaptive gains.
inline RealMatrix tsne_2d(const RealMatrix& points, const ProjectionOptions& options) {
  const std::size_t n = points.rows();
  require(options.perplexity > 0.0 && options.perplexity < (static_cast<double>(n) - 1.0) / 3.0,
          ErrorCode::BadPerplexity,
          "perplexity must be in (0, (N-1)/3) = (0, " + std::to_string((static_cast<double>(n) - 1.0) / 3.0) + ")");

  RealMatrix d2(n, n);
  double max_d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d2(i, j) = d2(j, i) = squared_distance(points.row(i), points.row(j));
      max_d2 = std::max(max_d2, d2(i, j));
    }
  }
  if (max_d2 > 0.0) {
    for (auto& v : d2.data()) v /= max_d2;
  }
  const RealMatrix cond = detail::conditional_affinities(d2, options.perplexity);
  RealMatrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      p(i, j) = i == j ? 0.0 : std::max((cond(i, j) + cond(j, i)) / (2.0 * static_cast<double>(n)), 1e-12);
    }
  }

  Rng rng(options.seed);
  RealMatrix y(n, 2);
  for (auto& v : y.data()) v = 1e-4 * rng.normal();
  RealMatrix update(n, 2);
  RealMatrix gains(n, 2, 1.0);
  RealMatrix num(n, n);
  RealMatrix grad(n, 2);

  for (std::size_t iter = 0; iter < options.iterations; ++iter) {
    const bool early = iter < options.exaggeration_iters;
    const double exaggeration = early ? options.early_exaggeration : 1.0;
    const double momentum = early ? 0.5 : 0.8;

    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num(i, i) = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y(i, 0) - y(j, 0);
        const double dy = y(i, 1) - y(j, 1);
        num(i, j) = num(j, i) = 1.0 / (1.0 + dx * dx + dy * dy);
        z += 2.0 * num(i, j);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0.0;
      double gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(num(i, j) / z, 1e-12);
        const double coeff = (exaggeration * p(i, j) - q) * num(i, j);
        gx += coeff * (y(i, 0) - y(j, 0));
        gy += coeff * (y(i, 1) - y(j, 1));
      }
      grad(i, 0) = 4.0 * gx;
      grad(i, 1) = 4.0 * gy;
    }
    for (std::size_t k = 0; k < y.data().size(); ++k) {
      const double g = grad.data()[k];
      double& gain = gains.data()[k];
      double& u = update.data()[k];
      gain = ((g > 0.0) != (u > 0.0)) ? gain + 0.2 : gain * 0.8;
      gain = std::max(gain, 0.01);
      u = momentum * u - options.learning_rate * gain * g;
      y.data()[k] += u;
    }
    for (std::size_t c = 0; c < 2; ++c) {
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) mu += y(i, c);
      mu /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) y(i, c) -= mu;
    }
  }
  return y;
}

inline RealMatrix project_2d(const RealMatrix& embeddings, const ProjectionOptions& options = {}) {
  require(embeddings.rows() >= 3, ErrorCode::TooFewPoints, "projection needs at least three points");
  require(embeddings.cols() >= 1, ErrorCode::DimensionMismatch, "zero-dimensional embeddings");
  for (double v : embeddings.data()) require(std::isfinite(v), ErrorCode::NonFiniteInput, "non-finite embedding");
  return options.method == ProjectionMethod::pca ? pca_2d(embeddings) : tsne_2d(embeddings, options);
}

}  // namespace vqdr
