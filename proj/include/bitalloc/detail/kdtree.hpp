#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "bitalloc/dataset.hpp"

namespace bitalloc::detail {

// Exact k-nearest-neighbour search over a fixed point set. Median split on
// the widest dimension, leaves of up to 16 points. Distances are computed
// with Eigen's squaredNorm on rows, the same expression a brute-force scan
// uses, so results match an exhaustive sort bit-for-bit.
class KdTree {
 public:
  explicit KdTree(const RowMatrixXd& points) : points_(points) {
    const std::int64_t n = points_.rows();
    index_.resize(static_cast<std::size_t>(n));
    std::iota(index_.begin(), index_.end(), 0);
    nodes_.reserve(static_cast<std::size_t>(2 * n / kLeafSize + 2));
    if (n > 0) root_ = build(0, n);
  }

  // Squared distance to the k-th nearest point, optionally skipping one
  // index (the query itself when querying the tree's own point set).
  double knn_sq_distance(Eigen::Ref<const Eigen::RowVectorXd> query, int k,
                         std::int64_t skip_index = -1) const {
    const std::int64_t available = points_.rows() - (skip_index >= 0 ? 1 : 0);
    if (k < 1 || k > available) throw std::invalid_argument("k out of range");
    Heap heap(k);
    search(root_, query, skip_index, heap);
    return heap.top();
  }

 private:
  static constexpr std::int64_t kLeafSize = 16;

  struct Node {
    double split = 0.0;
    int dim = -1;  // -1 marks a leaf
    std::int64_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    Eigen::VectorXd lo, hi;  // bounding box
  };

  // Fixed-capacity max-heap of the k smallest squared distances seen.
  class Heap {
   public:
    explicit Heap(int k) : cap_(static_cast<std::size_t>(k)) { d_.reserve(cap_); }
    bool full() const { return d_.size() == cap_; }
    double top() const {
      return full() ? d_.front() : std::numeric_limits<double>::infinity();
    }
    void push(double v) {
      if (!full()) {
        d_.push_back(v);
        std::push_heap(d_.begin(), d_.end());
      } else if (v < d_.front()) {
        std::pop_heap(d_.begin(), d_.end());
        d_.back() = v;
        std::push_heap(d_.begin(), d_.end());
      }
    }

   private:
    std::size_t cap_;
    std::vector<double> d_;
  };

  std::int32_t build(std::int64_t begin, std::int64_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo.resize(points_.cols());
    node.hi.resize(points_.cols());
    node.lo.setConstant(std::numeric_limits<double>::infinity());
    node.hi.setConstant(-std::numeric_limits<double>::infinity());
    for (std::int64_t i = begin; i < end; ++i) {
      const auto row = points_.row(index_[static_cast<std::size_t>(i)]);
      node.lo = node.lo.cwiseMin(row.transpose());
      node.hi = node.hi.cwiseMax(row.transpose());
    }
    if (end - begin > kLeafSize) {
      int dim = 0;
      (node.hi - node.lo).maxCoeff(&dim);
      if (node.hi[dim] > node.lo[dim]) {
        const std::int64_t mid = (begin + end) / 2;
        auto first = index_.begin() + begin;
        auto nth = index_.begin() + mid;
        auto last = index_.begin() + end;
        std::nth_element(first, nth, last, [&](std::int64_t a, std::int64_t b) {
          return points_(a, dim) < points_(b, dim);
        });
        node.dim = dim;
        node.split = points_(*nth, dim);
        nodes_.push_back(node);
        const auto id = static_cast<std::int32_t>(nodes_.size() - 1);
        const std::int32_t left = build(begin, mid);
        const std::int32_t right = build(mid, end);
        nodes_[static_cast<std::size_t>(id)].left = left;
        nodes_[static_cast<std::size_t>(id)].right = right;
        return id;
      }
    }
    nodes_.push_back(node);  // leaf (possibly with duplicate coordinates)
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  double box_sq_distance(const Node& node,
                         Eigen::Ref<const Eigen::RowVectorXd> q) const {
    double acc = 0.0;
    for (Eigen::Index d = 0; d < q.size(); ++d) {
      double diff = 0.0;
      if (q[d] < node.lo[d]) diff = node.lo[d] - q[d];
      else if (q[d] > node.hi[d]) diff = q[d] - node.hi[d];
      acc += diff * diff;
    }
    return acc;
  }

  void search(std::int32_t id, Eigen::Ref<const Eigen::RowVectorXd> q,
              std::int64_t skip, Heap& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (heap.full() && box_sq_distance(node, q) > heap.top()) return;
    if (node.dim < 0) {
      for (std::int64_t i = node.begin; i < node.end; ++i) {
        const std::int64_t p = index_[static_cast<std::size_t>(i)];
        if (p == skip) continue;
        heap.push((points_.row(p) - q).squaredNorm());
      }
      return;
    }
    const bool left_first = q[node.dim] < node.split;
    search(left_first ? node.left : node.right, q, skip, heap);
    search(left_first ? node.right : node.left, q, skip, heap);
  }

  const RowMatrixXd& points_;
  std::vector<std::int64_t> index_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace bitalloc::detail
