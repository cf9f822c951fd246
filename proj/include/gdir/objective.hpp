#pragma once

#include "gdir/deformation.hpp"
#include "gdir/rng.hpp"
#include "gdir/volume.hpp"

#include <optional>
#include <span>
#include <vector>

namespace gdir {

struct LossReport {
    double ncc = 0.0; // negated correlation, in [-1, 1]; -1 is a perfect match
    int batch_size = 0;
    int64_t underflow_count = 0;
    int step = 0;
};

// Uniform random voxel centers of the fixed grid (restricted to mask > 0 when
// given), with replacement, in world mm.
std::vector<Vec3> sample_batch(const Volume3& fixed, int batch_size, Rng& rng,
                               const MaskVolume* mask = nullptr);

// Negated normalized cross-correlation over the batch, with batch means, plus
// the exact derivative with respect to each warped value. The denominator is
// guarded by eps = 1e-8 under the square root so constant batches stay finite.
double ncc_loss(std::span<const double> fixed_vals, std::span<const double> warped_vals,
                std::span<double> adjoints);

struct EvalResult {
    LossReport report;
    ParamGrads grads;
};

// Full objective: deform the sample points, resample the moving image at the
// displaced locations, score against the fixed values with NCC, and chain the
// adjoints back to every enabled Gaussian parameter.
EvalResult evaluate(const GaussianSet& g, const Volume3& fixed, const Volume3& moving,
                    std::span<const Vec3> points, const SpatialIndex& index, int k, int step = 0);

} // namespace gdir
