#include "bitalloc/divergence.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "bitalloc/detail/kdtree.hpp"
#include "bitalloc/parallel.hpp"
#include "bitalloc/rng.hpp"

namespace bitalloc {

double ball_volume(int dim, double radius) {
  if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
  if (radius < 0.0) throw std::invalid_argument("negative radius");
  const double unit =
      std::pow(3.14159265358979323846, 0.5 * dim) / std::tgamma(0.5 * dim + 1.0);
  return unit * std::pow(radius, dim);
}

double knn_radius(Eigen::Ref<const Eigen::RowVectorXd> query, const Dataset& data,
                  int k, bool exclude_self) {
  if (query.size() != data.dim()) throw std::invalid_argument("dimension mismatch");
  detail::KdTree tree(data.samples);
  if (!exclude_self)
    return std::sqrt(tree.knn_sq_distance(query, k));
  // The query's own entry shows up as the zero-distance minimum; dropping one
  // zero shifts the k-th place to the (k+1)-th of the full list.
  if (tree.knn_sq_distance(query, 1) == 0.0) {
    if (k + 1 > data.rows()) throw std::invalid_argument("k out of range");
    return std::sqrt(tree.knn_sq_distance(query, k + 1));
  }
  return std::sqrt(tree.knn_sq_distance(query, k));
}

namespace {

void apply_standardize(RowMatrixXd& a, RowMatrixXd& b) {
  // Stats from the reference set only; a constant dimension keeps scale 1.
  const Eigen::RowVectorXd mean = a.colwise().mean();
  Eigen::RowVectorXd stddev(a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double var =
        (a.col(c).array() - mean[c]).square().sum() / static_cast<double>(a.rows());
    stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  a = (a.rowwise() - mean).array().rowwise() / stddev.array();
  b = (b.rowwise() - mean).array().rowwise() / stddev.array();
}

void apply_jitter(RowMatrixXd& a, RowMatrixXd& b, double scale, std::uint64_t seed) {
  Eigen::RowVectorXd lo = a.colwise().minCoeff().cwiseMin(b.colwise().minCoeff());
  Eigen::RowVectorXd hi = a.colwise().maxCoeff().cwiseMax(b.colwise().maxCoeff());
  Eigen::RowVectorXd eps = (hi - lo) * scale;
  for (Eigen::Index c = 0; c < eps.size(); ++c)
    if (eps[c] == 0.0) eps[c] = scale;
  Rng rng(seed);
  for (RowMatrixXd* m : {&a, &b})
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c)
        (*m)(r, c) += rng.uniform(-eps[c], eps[c]);
}

}  // namespace

KldEstimate kld_knn(const Dataset& reference, const Dataset& candidate,
                    const KnnParams& params) {
  if (reference.dim() != candidate.dim())
    throw std::invalid_argument("dimension mismatch");
  const Eigen::Index j1 = reference.rows();
  const Eigen::Index j2 = candidate.rows();
  if (j1 < 2 || j2 < 1) throw std::invalid_argument("too few samples");
  if (params.k < 1 || params.k > std::min<Eigen::Index>(j1 - 1, j2))
    throw std::invalid_argument("k out of range");

  RowMatrixXd ref = reference.samples;
  RowMatrixXd cand = candidate.samples;
  if (params.standardize) apply_standardize(ref, cand);
  if (params.jitter_scale > 0.0)
    apply_jitter(ref, cand, params.jitter_scale, params.jitter_seed);

  const detail::KdTree ref_tree(ref);
  const detail::KdTree cand_tree(cand);
  const int d = static_cast<int>(reference.dim());

  // Per-sample log radius ratios, reduced in index order for determinism.
  std::vector<double> log_ratio(static_cast<std::size_t>(j1));
  std::vector<char> collapsed(static_cast<std::size_t>(j1), 0);
  parallel_for(j1, params.threads, [&](std::int64_t j) {
    const auto q = ref.row(j);
    const double rp = ref_tree.knn_sq_distance(q, params.k, j);
    const double rq = cand_tree.knn_sq_distance(q, params.k);
    if (rp == 0.0 || rq == 0.0) {
      collapsed[static_cast<std::size_t>(j)] = 1;
      return;
    }
    log_ratio[static_cast<std::size_t>(j)] = 0.5 * (std::log(rq) - std::log(rp));
  });
  for (char c : collapsed)
    if (c) throw std::runtime_error("duplicate collapse");

  double acc = 0.0;
  for (double v : log_ratio) acc += v;

  KldEstimate est;
  est.kind = EstimatorKind::knn;
  est.j_reference = j1;
  est.j_candidate = j2;
  est.k = params.k;
  est.value = d * (acc / static_cast<double>(j1)) +
              std::log(static_cast<double>(j2) / static_cast<double>(j1 - 1));
  return est;
}

namespace {

struct BinIndexer {
  std::vector<int> shifts;
  const HistogramConfig* config;

  explicit BinIndexer(const HistogramConfig& cfg) : config(&cfg) {
    int total_bits = 0;
    shifts.reserve(cfg.axes.size());
    for (const HistogramAxis& axis : cfg.axes) {
      if (axis.bins < 1) throw std::invalid_argument("bins must be >= 1");
      if (!(axis.hi > axis.lo)) throw std::invalid_argument("degenerate axis range");
      if (axis.min_width > 0.0 && axis.width() < axis.min_width)
        throw std::invalid_argument("bins finer than quantization");
      shifts.push_back(total_bits);
      int bits = 0;
      while ((1 << bits) < axis.bins) ++bits;
      total_bits += bits;
      if (total_bits > 64) throw std::invalid_argument("histogram too large");
    }
  }

  std::uint64_t key(Eigen::Ref<const Eigen::RowVectorXd> z) const {
    std::uint64_t k = 0;
    for (std::size_t d = 0; d < config->axes.size(); ++d) {
      const HistogramAxis& axis = config->axes[d];
      auto idx = static_cast<std::int64_t>(
          std::floor((z[static_cast<Eigen::Index>(d)] - axis.lo) / axis.width()));
      if (idx < 0) idx = 0;                       // edge-bin clamp
      if (idx >= axis.bins) idx = axis.bins - 1;  // edge-bin clamp
      k |= static_cast<std::uint64_t>(idx) << shifts[d];
    }
    return k;
  }
};

}  // namespace

KldEstimate kld_histogram_smoothed(const Dataset& reference, const Dataset& candidate,
                                   const HistogramConfig& config) {
  if (reference.dim() != candidate.dim())
    throw std::invalid_argument("dimension mismatch");
  if (static_cast<Eigen::Index>(config.axes.size()) != reference.dim())
    throw std::invalid_argument("config dimension mismatch");
  if (reference.rows() < 1 || candidate.rows() < 1)
    throw std::invalid_argument("too few samples");

  const BinIndexer indexer(config);
  std::unordered_map<std::uint64_t, std::int64_t> ref_counts, cand_counts;
  ref_counts.reserve(static_cast<std::size_t>(reference.rows()));
  cand_counts.reserve(static_cast<std::size_t>(candidate.rows()));
  for (Eigen::Index r = 0; r < reference.rows(); ++r)
    ++ref_counts[indexer.key(reference.samples.row(r))];
  for (Eigen::Index r = 0; r < candidate.rows(); ++r)
    ++cand_counts[indexer.key(candidate.samples.row(r))];

  // mu = occupied reference bins with no candidate samples.
  std::int64_t mu = 0;
  for (const auto& [key, n1] : ref_counts) {
    auto it = cand_counts.find(key);
    if (it == cand_counts.end() || it->second == 0) ++mu;
  }

  const double j1 = static_cast<double>(reference.rows());
  const double j2 = static_cast<double>(candidate.rows());

  // Deterministic accumulation order: sort occupied keys.
  std::vector<std::uint64_t> keys;
  keys.reserve(ref_counts.size());
  for (const auto& [key, n1] : ref_counts) keys.push_back(key);
  std::sort(keys.begin(), keys.end());

  double div = 0.0;
  for (std::uint64_t key : keys) {
    const double p = static_cast<double>(ref_counts[key]) / j1;
    auto it = cand_counts.find(key);
    const std::int64_t n = it == cand_counts.end() ? 0 : it->second;
    const double alpha = n == 0 ? 1.0 : 0.0;
    const double q = (static_cast<double>(n) + alpha) / (j2 + static_cast<double>(mu));
    div += p * std::log(p / q);
  }

  KldEstimate est;
  est.kind = EstimatorKind::histogram;
  est.j_reference = reference.rows();
  est.j_candidate = candidate.rows();
  est.bins.reserve(config.axes.size());
  for (const HistogramAxis& axis : config.axes) est.bins.push_back(axis.bins);
  est.value = div;
  return est;
}

}  // namespace bitalloc
