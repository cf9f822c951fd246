#include "gdir/spatial_index.hpp"

#include "gdir/errors.hpp"
#include "gdir/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gdir {

namespace {
constexpr int kLeafSize = 16;
}

SpatialIndex::SpatialIndex(std::span<const double> centers_xyz) {
    if (centers_xyz.size() % 3 != 0)
        throw validation_error("SpatialIndex: center array length must be a multiple of 3");
    const int n = static_cast<int>(centers_xyz.size() / 3);
    if (n < 1) throw validation_error("SpatialIndex: need at least one center");
    for (double c : centers_xyz)
        if (!std::isfinite(c)) throw validation_error("SpatialIndex: non-finite center coordinate");

    points_.assign(centers_xyz.begin(), centers_xyz.end());
    order_.resize(n);
    for (int i = 0; i < n; ++i) order_[i] = i;
    nodes_.reserve(static_cast<std::size_t>(2 * n / kLeafSize + 2));
    root_ = build(0, n);
}

int SpatialIndex::build(int begin, int end) {
    const int node_id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    if (end - begin <= kLeafSize) {
        nodes_[node_id].begin = begin;
        nodes_[node_id].end = end;
        return node_id;
    }

    // Split the widest axis at the median.
    double lo[3] = {std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
                    std::numeric_limits<double>::max()};
    double hi[3] = {std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest(),
                    std::numeric_limits<double>::lowest()};
    for (int i = begin; i < end; ++i)
        for (int a = 0; a < 3; ++a) {
            const double c = points_[static_cast<std::size_t>(order_[i]) * 3 + a];
            lo[a] = std::min(lo[a], c);
            hi[a] = std::max(hi[a], c);
        }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;

    const int mid = begin + (end - begin) / 2;
    auto key = [&](int32_t idx) {
        return std::pair<double, int32_t>(points_[static_cast<std::size_t>(idx) * 3 + axis], idx);
    };
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int32_t a, int32_t b) { return key(a) < key(b); });
    const double split = points_[static_cast<std::size_t>(order_[mid]) * 3 + axis];

    const int left = build(begin, mid);
    const int right = build(mid, end);
    Node& node = nodes_[node_id];
    node.axis = axis;
    node.split = split;
    node.left = left;
    node.right = right;
    return node_id;
}

namespace {

using HeapEntry = std::pair<double, int32_t>; // (squared distance, index)

struct KnnSearch {
    const std::vector<double>& points;
    Vec3 q;
    int k;
    std::vector<HeapEntry> heap;

    double worst() const {
        return static_cast<int>(heap.size()) < k ? std::numeric_limits<double>::max()
                                                 : heap.front().first;
    }
    void offer(int32_t idx) {
        const double dx = q.x - points[static_cast<std::size_t>(idx) * 3];
        const double dy = q.y - points[static_cast<std::size_t>(idx) * 3 + 1];
        const double dz = q.z - points[static_cast<std::size_t>(idx) * 3 + 2];
        const HeapEntry cand{dx * dx + dy * dy + dz * dz, idx};
        if (static_cast<int>(heap.size()) < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end());
        }
    }
};

} // namespace

int SpatialIndex::knn_one(const Vec3& query, int k, int32_t* idx, double* dist) const {
    if (k < 1) throw validation_error("knn: k must be >= 1");
    const int kk = std::min(k, size());

    KnnSearch s{points_, query, kk, {}};
    s.heap.reserve(kk + 1);

    // Iterative traversal, near child first; far child only if its slab can
    // still hold a better candidate (ties must be visited for the index rule).
    struct Frame {
        int node;
        double delta2; // squared plane distance guarding this subtree, 0 for near path
    };
    std::vector<Frame> stack;
    stack.push_back({root_, 0.0});
    while (!stack.empty()) {
        const Frame f = stack.back();
        stack.pop_back();
        if (f.delta2 > s.worst()) continue;
        const Node& node = nodes_[f.node];
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i) s.offer(order_[i]);
            continue;
        }
        const double delta = query[node.axis] - node.split;
        const int near_child = delta < 0 ? node.left : node.right;
        const int far_child = delta < 0 ? node.right : node.left;
        stack.push_back({far_child, delta * delta});
        stack.push_back({near_child, 0.0});
    }

    std::sort(s.heap.begin(), s.heap.end());
    for (int i = 0; i < kk; ++i) {
        idx[i] = s.heap[i].second;
        dist[i] = std::sqrt(s.heap[i].first);
    }
    return kk;
}

NeighborList SpatialIndex::knn(std::span<const Vec3> queries, int k) const {
    if (k < 1) throw validation_error("knn: k must be >= 1");
    const int kk = std::min(k, size());
    NeighborList out;
    out.query_count = static_cast<int>(queries.size());
    out.k = kk;
    out.indices.resize(static_cast<std::size_t>(out.query_count) * kk);
    out.distances.resize(static_cast<std::size_t>(out.query_count) * kk);
    parallel_chunks(queries.size(), 1024, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t q = b; q < e; ++q)
            knn_one(queries[q], kk, out.indices.data() + q * kk, out.distances.data() + q * kk);
    });
    return out;
}

SpatialIndex build_index(const GaussianSet& g) { return SpatialIndex(g.positions); }

} // namespace gdir
