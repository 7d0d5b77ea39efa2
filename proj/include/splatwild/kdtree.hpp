#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "splatwild/math.hpp"

namespace splatwild {

// Small static 3D k-d tree for K-nearest-neighbor queries. Ties are broken by
// point index so queries are deterministic and match a sorted brute-force scan.
class KdTree3 {
  public:
    explicit KdTree3(const std::vector<Vec3>& points) : points_(points) {
        if (points_.empty()) throw std::invalid_argument("KdTree3: empty point set");
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), 0);
        nodes_.reserve(points_.size());
        root_ = build(0, static_cast<int>(order_.size()));
    }

    // Indices of the k nearest points, ordered by (distance, index); the query
    // point itself is included when it belongs to the set.
    std::vector<int> knn(const Vec3& query, int k) const {
        if (k <= 0) return {};
        k = std::min<int>(k, static_cast<int>(points_.size()));
        std::vector<std::pair<double, int>> heap;  // max-heap on (dist2, index)
        heap.reserve(k + 1);
        search(root_, query, k, heap);
        std::sort_heap(heap.begin(), heap.end());
        std::vector<int> out(heap.size());
        for (size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].second;
        return out;
    }

  private:
    struct Node {
        int point = -1;
        int axis = 0;
        int left = -1, right = -1;
    };

    int build(int lo, int hi) {
        if (lo >= hi) return -1;
        // Split on the widest axis of this span for balanced cells.
        Vec3 mn = points_[order_[lo]], mx = mn;
        for (int i = lo + 1; i < hi; ++i) {
            mn = mn.cwiseMin(points_[order_[i]]);
            mx = mx.cwiseMax(points_[order_[i]]);
        }
        int axis = 0;
        (mx - mn).maxCoeff(&axis);
        int mid = (lo + hi) / 2;
        std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi, [&](int a, int b) {
            if (points_[a][axis] != points_[b][axis]) return points_[a][axis] < points_[b][axis];
            return a < b;
        });
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back({order_[mid], axis, -1, -1});
        nodes_[id].left = build(lo, mid);
        nodes_[id].right = build(mid + 1, hi);
        return id;
    }

    void search(int node, const Vec3& query, int k, std::vector<std::pair<double, int>>& heap) const {
        if (node < 0) return;
        const Node& n = nodes_[node];
        double d2 = (points_[n.point] - query).squaredNorm();
        std::pair<double, int> cand{d2, n.point};
        if (static_cast<int>(heap.size()) < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end());
        }
        double delta = query[n.axis] - points_[n.point][n.axis];
        int near = delta < 0 ? n.left : n.right;
        int far = delta < 0 ? n.right : n.left;
        search(near, query, k, heap);
        if (static_cast<int>(heap.size()) < k || delta * delta <= heap.front().first) search(far, query, k, heap);
    }

    const std::vector<Vec3>& points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace splatwild
