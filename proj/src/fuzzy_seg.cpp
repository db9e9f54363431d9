#include "marl/fuzzy_seg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace marl {

namespace {

Eigen::Map<const VectorXd> flat(const HuImage& img) {
  return {img.values.data(), img.values.size()};
}

void check_fuzzifier(double m) {
  if (!(m > 1.0)) throw Error("invalid_fuzzifier", "fuzzifier must be > 1");
}

}  // namespace

MatrixXd classical_memberships(const HuImage& img, const VectorXd& centroids, double fuzzifier) {
  check_fuzzifier(fuzzifier);
  const auto x = flat(img);
  const Index n = x.size();
  const Index c = centroids.size();
  const double exponent = -2.0 / (fuzzifier - 1.0);
  MatrixXd u(n, c);
  for (Index k = 0; k < n; ++k) {
    Index hit = -1;
    for (Index i = 0; i < c; ++i) {
      if (x[k] == centroids[i]) {
        hit = i;
        break;
      }
    }
    if (hit >= 0) {
      u.row(k).setZero();
      u(k, hit) = 1.0;
      continue;
    }
    // u_ki = d_ki^e / sum_j d_kj^e, normalised by the nearest distance so the
    // largest weight is exactly 1.
    const auto dist = (centroids.array() - x[k]).abs();
    const double nearest = dist.minCoeff();
    double total = 0.0;
    for (Index i = 0; i < c; ++i) {
      const double w = std::pow(dist[i] / nearest, exponent);
      u(k, i) = w;
      total += w;
    }
    u.row(k) /= total;
  }
  return u;
}

FuzzyPartition fcm_init(const HuImage& img, int clusters, std::uint64_t /*seed*/, double fuzzifier) {
  if (img.size() == 0) throw Error("empty_image", "fcm_init requires a non-empty image");
  if (clusters < 2) throw Error("invalid_clusters", "fcm_init requires at least 2 clusters");
  check_fuzzifier(fuzzifier);

  std::vector<double> distinct(img.values.data(), img.values.data() + img.size());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const auto u = static_cast<Index>(distinct.size());
  if (u < clusters) {
    throw Error("indistinct_values", "image has " + std::to_string(u) + " distinct values, fewer than " +
                                         std::to_string(clusters) + " clusters");
  }

  FuzzyPartition part;
  part.fuzzifier = fuzzifier;
  part.centroids.resize(clusters);
  for (int k = 0; k < clusters; ++k) {
    const auto pos = static_cast<Index>(std::floor((k + 0.5) * static_cast<double>(u) / clusters));
    part.centroids[k] = distinct[static_cast<std::size_t>(std::min(pos, u - 1))];
  }
  part.memberships = classical_memberships(img, part.centroids, fuzzifier);
  return part;
}

double fcm_objective(const FuzzyPartition& part, const HuImage& img) {
  const auto x = flat(img);
  double j = 0.0;
  for (Index i = 0; i < part.clusters(); ++i) {
    j += (part.memberships.col(i).array().pow(part.fuzzifier) * (x.array() - part.centroids[i]).square()).sum();
  }
  return j;
}

FuzzyPartition fcm_step(const FuzzyPartition& part, const HuImage& img) {
  const auto x = flat(img);
  if (part.pixels() != x.size()) throw Error("dimension_mismatch", "partition does not match image");
  FuzzyPartition next;
  next.fuzzifier = part.fuzzifier;
  next.centroids = part.centroids;
  for (Index i = 0; i < part.clusters(); ++i) {
    const VectorXd w = part.memberships.col(i).array().pow(part.fuzzifier);
    const double mass = w.sum();
    if (mass > 0.0) next.centroids[i] = w.dot(x) / mass;
  }
  next.memberships = classical_memberships(img, next.centroids, next.fuzzifier);
  return next;
}

MatrixXd spatial_function(const FuzzyPartition& part, int width, int height, const SpatialParams& params) {
  if (params.window_radius < 1) throw Error("invalid_radius", "window_radius must be >= 1");
  if (static_cast<Index>(width) * height != part.pixels()) {
    throw Error("dimension_mismatch", "image dimensions do not match the partition");
  }
  const int r = params.window_radius;
  const Index c = part.clusters();
  MatrixXd rows(part.pixels(), c);
  MatrixXd h(part.pixels(), c);
  // Separable box sum: horizontal pass then vertical pass.
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(width - 1, x + r);
      auto acc = rows.row(static_cast<Index>(y) * width + x);
      acc.setZero();
      for (int xx = x0; xx <= x1; ++xx) acc += part.memberships.row(static_cast<Index>(y) * width + xx);
    }
  }
  for (int y = 0; y < height; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(height - 1, y + r);
    for (int x = 0; x < width; ++x) {
      auto acc = h.row(static_cast<Index>(y) * width + x);
      acc.setZero();
      for (int yy = y0; yy <= y1; ++yy) acc += rows.row(static_cast<Index>(yy) * width + x);
    }
  }
  return h;
}

MatrixXd spatial_membership(const MatrixXd& u, const MatrixXd& h, const SpatialParams& params) {
  if (u.rows() != h.rows() || u.cols() != h.cols()) {
    throw Error("dimension_mismatch", "u and h must have the same shape");
  }
  if (params.p < 0.0 || params.q < 0.0) throw Error("invalid_exponent", "p and q must be non-negative");
  MatrixXd m(u.rows(), u.cols());
  for (Index k = 0; k < u.rows(); ++k) {
    double total = 0.0;
    for (Index i = 0; i < u.cols(); ++i) {
      const double term = std::pow(u(k, i), params.p) * std::pow(h(k, i), params.q);
      m(k, i) = term;
      total += term;
    }
    if (total > 0.0 && std::isfinite(total)) {
      m.row(k) /= total;
    } else {
      m.row(k) = u.row(k);
    }
  }
  return m;
}

SegmentResult segment_lung(const HuImage& img, const SegmentOptions& options) {
  SegmentResult result;
  result.mask = LungMask(img.width(), img.height());
  result.partition = fcm_init(img, options.clusters, options.seed, options.fuzzifier);

  for (int it = 1; it <= options.max_iter; ++it) {
    const VectorXd previous = result.partition.centroids;
    result.partition = fcm_step(result.partition, img);
    const MatrixXd h = spatial_function(result.partition, img.width(), img.height(), options.spatial);
    result.partition.memberships = spatial_membership(result.partition.memberships, h, options.spatial);
    result.iterations = it;
    if ((result.partition.centroids - previous).cwiseAbs().maxCoeff() < options.tol) {
      result.converged = true;
      break;
    }
  }

  (result.partition.centroids.array() - options.lung_hu).abs().minCoeff(&result.lung_cluster);
  result.lung_found = result.partition.centroids[result.lung_cluster] <= options.lung_like_max;
  if (!result.lung_found) return result;

  const auto lung = result.partition.memberships.col(result.lung_cluster);
  for (Index k = 0; k < lung.size(); ++k) {
    result.mask.bits(k / img.width(), k % img.width()) = lung[k] > 0.5;
  }
  result.mask = dilate(erode(result.mask, options.morph_radius), options.morph_radius);
  return result;
}

}  // namespace marl
