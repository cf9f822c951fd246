#pragma once

#include "gdir/control_points.hpp"
#include "gdir/deformation.hpp"
#include "gdir/spatial_index.hpp"
#include "gdir/volume.hpp"

#include <string>
#include <vector>

namespace gdir {

// Maps each landmark l to l + Phi(l) through the full deformation pipeline.
LandmarkSet warp_landmarks(const GaussianSet& g, const LandmarkSet& landmarks,
                           const SpatialIndex& index, int k);

struct TreResult {
    double mean = 0.0;
    double stddev = 0.0; // population standard deviation
    std::vector<double> per_landmark;
};

// Target registration error: per-pair Euclidean distances in mm.
TreResult tre(const LandmarkSet& a, const LandmarkSet& b);

// Dice similarity coefficient for one label; 1.0 when both regions are empty.
double dsc(const MaskVolume& fixed_mask, const MaskVolume& warped_mask, int32_t label);

// Sorted distinct non-zero labels present in the mask.
std::vector<int32_t> mask_labels(const MaskVolume& m);

// Resamples the moving-image mask onto the fixed geometry through the
// deformation, nearest-neighbor so labels stay crisp.
MaskVolume warp_mask(const GaussianSet& g, const MaskVolume& moving_mask,
                     const GridMeta& fixed_geometry, const SpatialIndex& index, int k);

// Evaluates Phi at every voxel center of the geometry and writes the dense
// field; processed in z-slabs so peak memory stays below twice the field size.
void export_dense_dvf(const GaussianSet& g, const GridMeta& geometry, const SpatialIndex& index,
                      int k, const std::string& path);

// Warped moving image on the fixed geometry: warped(x) = moving(x + Phi(x)).
Volume3 warp_volume(const GaussianSet& g, const Volume3& moving, const GridMeta& fixed_geometry,
                    const SpatialIndex& index, int k);

} // namespace gdir
