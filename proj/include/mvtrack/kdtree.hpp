#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "mvtrack/types.hpp"

namespace mvtrack {

// Canonical squared Euclidean distance between two columns: summed over
// rows in ascending order. Both the tree search and any linear-scan path
// must produce candidate distances through this exact expression so that
// results are bit-identical across search strategies.
inline double column_squared_distance(const MatrixD& pts, int a, int b) {
  double s = 0.0;
  for (int r = 0; r < pts.rows(); ++r) {
    const double diff = pts(r, a) - pts(r, b);
    s += diff * diff;
  }
  return s;
}

// Exact k-nearest-neighbor search over the columns of a d x N matrix
// under the Euclidean metric. A balanced kd-tree (median split on the
// widest dimension) is used for d <= kMaxTreeDim; higher dimensions fall
// back to a linear scan, where the tree no longer prunes anything.
//
// Neighbor ordering: ascending squared distance, ties broken by smaller
// column index, except that the query column itself always outranks any
// other column at equal distance.
class NeighborIndex {
 public:
  static constexpr int kMaxTreeDim = 32;
  static constexpr int kLeafSize = 8;

  explicit NeighborIndex(MatrixD points) : pts_(std::move(points)) {
    const int n = static_cast<int>(pts_.cols());
    if (pts_.rows() <= kMaxTreeDim && n > 0) {
      order_.resize(n);
      for (int i = 0; i < n; ++i) order_[i] = i;
      nodes_.reserve(2 * static_cast<std::size_t>(n) / kLeafSize + 2);
      root_ = Build(0, n);
    }
  }

  const MatrixD& points() const { return pts_; }

  // k neighbors of column `query` among columns with exclude_mask == 0.
  // The query itself must not be excluded and is always part of the
  // result (its distance is zero). Throws ValueError when fewer than k
  // columns remain.
  std::vector<int> Query(int query, int k, const std::vector<char>& exclude_mask) const {
    const int n = static_cast<int>(pts_.cols());
    if (query < 0 || query >= n) throw ValueError("knn: query index out of range");
    if (static_cast<int>(exclude_mask.size()) != n)
      throw ValueError("knn: exclude mask size mismatch");
    if (exclude_mask[query]) throw ValueError("knn: query column is excluded");
    if (k < 1) throw ValueError("knn: k must be positive");
    int remaining = 0;
    for (char c : exclude_mask) remaining += (c == 0);
    if (k > remaining)
      throw ValueError("knn: insufficient remaining columns (" + std::to_string(remaining) +
                       " available, " + std::to_string(k) + " requested)");

    Candidates cand(query, k);
    if (root_ >= 0) {
      Search(root_, query, exclude_mask, cand);
    } else {
      for (int i = 0; i < n; ++i)
        if (!exclude_mask[i]) cand.Offer(i, column_squared_distance(pts_, query, i));
    }
    return cand.Sorted();
  }

 private:
  struct Entry {
    double d2;
    int rank;  // column index, or -1 for the query column
    int index;
    bool operator<(const Entry& other) const {  // "better than"
      if (d2 != other.d2) return d2 < other.d2;
      return rank < other.rank;
    }
  };

  // Bounded best-k set kept as a max-heap on the (d2, rank) order.
  struct Candidates {
    int query;
    std::size_t k;
    std::vector<Entry> heap;

    Candidates(int query_in, int k_in) : query(query_in), k(static_cast<std::size_t>(k_in)) {}

    static bool HeapLess(const Entry& a, const Entry& b) { return a < b; }

    void Offer(int index, double d2) {
      Entry e{d2, index == query ? -1 : index, index};
      if (heap.size() < k) {
        heap.push_back(e);
        std::push_heap(heap.begin(), heap.end(), HeapLess);
      } else if (e < heap.front()) {
        std::pop_heap(heap.begin(), heap.end(), HeapLess);
        heap.back() = e;
        std::push_heap(heap.begin(), heap.end(), HeapLess);
      }
    }

    bool Full() const { return heap.size() == k; }
    double WorstD2() const { return heap.front().d2; }

    std::vector<int> Sorted() {
      std::sort(heap.begin(), heap.end());
      std::vector<int> out;
      out.reserve(heap.size());
      for (const Entry& e : heap) out.push_back(e.index);
      return out;
    }
  };

  struct Node {
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
    int split_dim = -1;
    std::vector<double> box_lo, box_hi;
  };

  int Build(int begin, int end) {
    const int d = static_cast<int>(pts_.rows());
    Node node;
    node.begin = begin;
    node.end = end;
    node.box_lo.assign(d, std::numeric_limits<double>::infinity());
    node.box_hi.assign(d, -std::numeric_limits<double>::infinity());
    for (int i = begin; i < end; ++i) {
      for (int r = 0; r < d; ++r) {
        const double v = pts_(r, order_[i]);
        node.box_lo[r] = std::min(node.box_lo[r], v);
        node.box_hi[r] = std::max(node.box_hi[r], v);
      }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(node));
    if (end - begin <= kLeafSize) return id;

    // Split on the widest dimension at the median.
    int split_dim = 0;
    double best_spread = -1.0;
    for (int r = 0; r < d; ++r) {
      const double spread = nodes_[id].box_hi[r] - nodes_[id].box_lo[r];
      if (spread > best_spread) {
        best_spread = spread;
        split_dim = r;
      }
    }
    if (best_spread <= 0.0) return id;  // all points identical; keep as leaf

    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                       if (pts_(split_dim, a) != pts_(split_dim, b))
                         return pts_(split_dim, a) < pts_(split_dim, b);
                       return a < b;
                     });
    nodes_[id].split_dim = split_dim;
    const int left = Build(begin, mid);
    const int right = Build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  double BoxMinD2(const Node& node, int query) const {
    double s = 0.0;
    for (int r = 0; r < static_cast<int>(node.box_lo.size()); ++r) {
      const double q = pts_(r, query);
      double diff = 0.0;
      if (q < node.box_lo[r]) diff = node.box_lo[r] - q;
      else if (q > node.box_hi[r]) diff = q - node.box_hi[r];
      s += diff * diff;
    }
    return s;
  }

  void Search(int id, int query, const std::vector<char>& exclude_mask,
              Candidates& cand) const {
    const Node& node = nodes_[id];
    // Prune only on strict excess: a point at exactly the current worst
    // distance could still win its tie on index.
    if (cand.Full() && BoxMinD2(node, query) > cand.WorstD2()) return;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = order_[i];
        if (!exclude_mask[idx]) cand.Offer(idx, column_squared_distance(pts_, query, idx));
      }
      return;
    }
    // Descend into the child containing the query first.
    const double q = pts_(node.split_dim, query);
    const double left_hi = nodes_[node.left].box_hi[node.split_dim];
    int first = node.left, second = node.right;
    if (q > left_hi) std::swap(first, second);
    Search(first, query, exclude_mask, cand);
    Search(second, query, exclude_mask, cand);
  }

  MatrixD pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace mvtrack
