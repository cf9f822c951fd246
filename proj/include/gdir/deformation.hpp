#pragma once

#include "gdir/control_points.hpp"
#include "gdir/spatial_index.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gdir {

// Per-parameter gradient accumulators, shaped like the GaussianSet arrays.
struct ParamGrads {
    std::vector<double> positions;
    std::vector<double> log_scales;
    std::vector<double> shape_rotations;
    std::vector<double> translations;
    std::vector<double> transform_rotations;
    std::vector<uint8_t> touched; // Gaussians referenced by any neighbor list

    void resize_like(const GaussianSet& g);
    void add(const ParamGrads& other);
    bool all_finite() const;
    double position_grad_norm(int i) const;
};

// Forward-pass record for a batch of query points: the interpolated
// displacements plus what the backward pass needs (normalized weights and the
// per-point underflow-fallback flag).
struct DisplacementBatch {
    std::vector<Vec3> points;
    NeighborList neighbors;
    std::vector<double> weights;   // m * k, rows sum to 1
    std::vector<Vec3> displacements;
    std::vector<uint8_t> fallback; // m, 1 where weights fell back to uniform
    int64_t underflow_count = 0;

    int size() const { return static_cast<int>(points.size()); }
};

// Gaussian-density interpolation weights over each point's neighbor set.
// Each unnormalized weight is the full normal density at the point under the
// neighbor's covariance; rows are normalized to sum to 1. If a row's density
// sum underflows to zero the row falls back to uniform 1/K and is counted.
void lbs_weights(const GaussianSet& g, const NeighborList& neighbors,
                 std::span<const Vec3> points, std::vector<double>& weights,
                 std::vector<uint8_t>& fallback, int64_t& underflow_count);

// Blended displacement: Phi_j = sum_k w_jk * (R'_k (x_j - mu_k) + mu_k + T_k - x_j).
// With rotation disabled this reduces to the weighted sum of translations.
void lbs_displace(const GaussianSet& g, std::span<const Vec3> points,
                  const NeighborList& neighbors, std::span<const double> weights,
                  std::vector<Vec3>& displacements);

// knn + weights + displacement in one call.
DisplacementBatch displace_points(const GaussianSet& g, const SpatialIndex& index, int k,
                                  std::span<const Vec3> points);

// Exact adjoints of the batch forward pass with respect to every enabled
// parameter group, accumulated additively into `grads`. Neighbor sets are
// treated as fixed. `upstream` holds dL/dPhi_j per point.
void lbs_backward(const GaussianSet& g, const DisplacementBatch& batch,
                  std::span<const Vec3> upstream, ParamGrads& grads);

} // namespace gdir
