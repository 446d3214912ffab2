#pragma once

#include <cstdint>
#include <vector>

#include "bitalloc/dataset.hpp"

namespace bitalloc {

enum class EstimatorKind { histogram, knn };

struct KldEstimate {
  double value = 0.0;  // nats
  EstimatorKind kind = EstimatorKind::histogram;
  Eigen::Index j_reference = 0;
  Eigen::Index j_candidate = 0;
  int k = 0;                  // knn only
  std::vector<int> bins;      // histogram only
};

// Volume of a d-dimensional Euclidean ball: pi^(d/2) / Gamma(d/2 + 1) * r^d.
double ball_volume(int dim, double radius);

// Euclidean distance from `query` to its k-th nearest neighbour in `data`.
// With exclude_self, one exact zero-distance match (the query itself when it
// is a member of the data) is skipped.
double knn_radius(Eigen::Ref<const Eigen::RowVectorXd> query, const Dataset& data,
                  int k, bool exclude_self);

struct KnnParams {
  int k = 200;
  // z-score both sets by the reference set's per-dimension mean/stddev;
  // features span incommensurate units, raw distances stay available.
  bool standardize = true;
  // Uniform jitter of magnitude jitter_scale * per-dim range breaks the
  // exact duplicates that quantized data produces. 0 disables.
  double jitter_scale = 1e-10;
  std::uint64_t jitter_seed = 0x8f1d2c3b4a596877ull;
  int threads = 1;  // per-sample radius computations; 0 = hardware
};

// k-nearest-neighbour plugin estimate of D_KL(reference || candidate).
// Reference radii exclude the query point itself.
KldEstimate kld_knn(const Dataset& reference, const Dataset& candidate,
                    const KnnParams& params);

struct HistogramAxis {
  int bins = 8;
  double lo = 0.0;
  double hi = 1.0;
  // Finest quantization step admissible on this axis; bins narrower than it
  // are rejected. 0 disables the check (output axes).
  double min_width = 0.0;

  double width() const { return (hi - lo) / static_cast<double>(bins); }
};

struct HistogramConfig {
  std::vector<HistogramAxis> axes;  // one per dimension
};

// Smoothed-histogram estimate of D_KL(reference || candidate): reference mass
// is raw counts/J on its occupied bins; candidate bins empty of samples get
// mass 1/(J + mu) where mu counts such bins, occupied ones n/(J + mu).
// Samples outside an axis range land in the edge bin.
KldEstimate kld_histogram_smoothed(const Dataset& reference, const Dataset& candidate,
                                   const HistogramConfig& config);

}  // namespace bitalloc
