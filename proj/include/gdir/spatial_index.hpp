#pragma once

#include "gdir/control_points.hpp"
#include "gdir/geom.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gdir {

// Per-query K nearest Gaussian centers, sorted by ascending distance with ties
// broken by ascending index. k is clamped to the set size.
struct NeighborList {
    int query_count = 0;
    int k = 0;
    std::vector<int32_t> indices;  // query_count * k
    std::vector<double> distances; // query_count * k, Euclidean mm

    const int32_t* row_indices(int q) const { return indices.data() + static_cast<std::size_t>(q) * k; }
    const double* row_distances(int q) const { return distances.data() + static_cast<std::size_t>(q) * k; }
};

// Exact k-nearest-neighbor index over a fixed point set (median-split kd-tree).
// Immutable after construction; rebuilt by the trainer when centers move.
class SpatialIndex {
public:
    explicit SpatialIndex(std::span<const double> centers_xyz);

    int size() const { return static_cast<int>(points_.size() / 3); }

    // Writes k results (clamped to n) into idx/dist; returns the count.
    int knn_one(const Vec3& query, int k, int32_t* idx, double* dist) const;

    NeighborList knn(std::span<const Vec3> queries, int k) const;

private:
    struct Node {
        // leaf: axis = -1, [begin, end) into order_
        int axis = -1;
        double split = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0;
    };

    int build(int begin, int end);

    std::vector<double> points_; // copied centers, n*3
    std::vector<int32_t> order_; // permutation of original indices
    std::vector<Node> nodes_;
    int root_ = -1;
};

SpatialIndex build_index(const GaussianSet& g);

} // namespace gdir
