#pragma once

#include "marl/common.hpp"
#include "marl/ct_ingest.hpp"
#include "marl/mask.hpp"

#include <cstdint>

namespace marl {

/// State of a fuzzy c-means optimisation over the pixels of one image.
/// Pixel k is the k-th entry of the row-major image.
struct FuzzyPartition {
  MatrixXd memberships;  // n x c, rows on the probability simplex
  VectorXd centroids;    // c cluster prototypes, in HU
  double fuzzifier = 2.0;

  Index clusters() const { return centroids.size(); }
  Index pixels() const { return memberships.rows(); }
};

/// Exponents of the spatially weighted membership and the neighbourhood
/// half-width used to accumulate the spatial function.
struct SpatialParams {
  double p = 1.0;
  double q = 1.0;
  int window_radius = 2;
};

struct SegmentOptions {
  int clusters = 3;
  double fuzzifier = 2.0;
  SpatialParams spatial;
  double tol = 1e-4;  // max centroid shift in HU
  int max_iter = 100;
  int morph_radius = 1;
  std::uint64_t seed = 0;
  double lung_hu = -500.0;        // the lung cluster is the centroid nearest this
  double lung_like_max = -200.0;  // a lung centroid above this means no lung was found
};

struct SegmentResult {
  LungMask mask;
  FuzzyPartition partition;
  Index lung_cluster = -1;
  int iterations = 0;
  bool converged = false;
  bool lung_found = false;
};

/// Classical membership rule for fixed centroids. A pixel that coincides with
/// a centroid gets a one-hot row on the first such cluster.
MatrixXd classical_memberships(const HuImage& img, const VectorXd& centroids, double fuzzifier);

/// Centroids at equally spaced quantile levels (k + 1/2) / c of the distinct
/// pixel values, memberships from one classical update. The quantile rule is
/// deterministic on its own; `seed` is carried for API stability.
FuzzyPartition fcm_init(const HuImage& img, int clusters, std::uint64_t seed, double fuzzifier = 2.0);

/// J = sum_k sum_i u_ki^m (x_k - v_i)^2
double fcm_objective(const FuzzyPartition& part, const HuImage& img);

/// One alternating update: centroids from the current memberships, then
/// memberships from the new centroids. J never increases.
FuzzyPartition fcm_step(const FuzzyPartition& part, const HuImage& img);

/// h_ki = sum of u_ji over the (2r+1)^2 window around pixel k, truncated at the
/// image border.
MatrixXd spatial_function(const FuzzyPartition& part, int width, int height, const SpatialParams& params);

/// m_ki = u_ki^p h_ki^q / sum_j u_kj^p h_kj^q. Rows whose denominator is zero
/// keep their u row unchanged.
MatrixXd spatial_membership(const MatrixXd& u, const MatrixXd& h, const SpatialParams& params);

/// Spatial FCM segmentation followed by an erode-then-dilate cleanup.
SegmentResult segment_lung(const HuImage& img, const SegmentOptions& options = {});

}  // namespace marl
