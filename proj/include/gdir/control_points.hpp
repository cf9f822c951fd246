#pragma once

#include "gdir/geom.hpp"
#include "gdir/rng.hpp"
#include "gdir/volume.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace gdir {

enum class ScalingMode { isotropic, diagonal };
enum class RotationMode { none, quaternion };

// Degrees of freedom attached to each control point, beyond the 3 position
// parameters. The named presets I-VI range from isotropic translation-only
// (the default, fastest) to full anisotropic 6-DoF transforms.
struct DofConfig {
    ScalingMode gaussian_scaling = ScalingMode::isotropic;
    RotationMode gaussian_rotation = RotationMode::none;
    RotationMode transform_rotation = RotationMode::none;
    bool transform_translation = true;

    static DofConfig preset(int index); // 1..6 for I..VI
    static DofConfig from_name(const std::string& name);
    std::string name() const;

    int scaling_dof() const { return gaussian_scaling == ScalingMode::isotropic ? 1 : 3; }
    int gaussian_rotation_dof() const { return gaussian_rotation == RotationMode::none ? 0 : 3; }
    int transform_rotation_dof() const { return transform_rotation == RotationMode::none ? 0 : 3; }
    int translation_dof() const { return transform_translation ? 3 : 0; }
    // Total per point, position included; quaternions count as 3 DoF.
    int dof_per_point() const {
        return 3 + scaling_dof() + gaussian_rotation_dof() + transform_rotation_dof() +
               translation_dof();
    }
    void validate() const;
    bool operator==(const DofConfig&) const = default;
};

// The learnable control-point set. Scales are stored as log(sigma) so sigma
// stays positive without constrained updates. Quaternions are stored (w,x,y,z)
// and kept unit-length by the optimizer.
struct GaussianSet {
    DofConfig config;
    int n = 0;
    std::vector<double> positions;           // n*3, world mm
    std::vector<double> log_scales;          // n*scale_stride
    std::vector<double> shape_rotations;     // n*4 if enabled
    std::vector<double> translations;        // n*3 if enabled
    std::vector<double> transform_rotations; // n*4 if enabled

    int scale_stride() const { return config.scaling_dof(); }

    Vec3 position(int i) const {
        return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]};
    }
    Vec3 sigma3(int i) const {
        if (config.gaussian_scaling == ScalingMode::isotropic) {
            const double s = std::exp(log_scales[i]);
            return {s, s, s};
        }
        return {std::exp(log_scales[3 * i]), std::exp(log_scales[3 * i + 1]),
                std::exp(log_scales[3 * i + 2])};
    }
    // Isotropic stand-in: the scale itself, or the mean of the three scales.
    double iso_sigma(int i) const {
        const Vec3 s = sigma3(i);
        return config.gaussian_scaling == ScalingMode::isotropic ? s.x : (s.x + s.y + s.z) / 3.0;
    }
    Quat shape_rotation(int i) const {
        if (config.gaussian_rotation == RotationMode::none) return Quat::identity();
        return {shape_rotations[4 * i], shape_rotations[4 * i + 1], shape_rotations[4 * i + 2],
                shape_rotations[4 * i + 3]};
    }
    Quat transform_rotation_q(int i) const {
        if (config.transform_rotation == RotationMode::none) return Quat::identity();
        return {transform_rotations[4 * i], transform_rotations[4 * i + 1],
                transform_rotations[4 * i + 2], transform_rotations[4 * i + 3]};
    }
    Vec3 translation(int i) const {
        if (!config.transform_translation) return {0, 0, 0};
        return {translations[3 * i], translations[3 * i + 1], translations[3 * i + 2]};
    }

    long param_count() const { return static_cast<long>(n) * config.dof_per_point(); }
    void validate() const;
};

// Regular lattice of control points spanning `bounds` inclusively; initial
// sigma is half the largest node spacing so neighboring kernels overlap.
GaussianSet init_grid(const Box3& bounds, std::array<int, 3> grid_shape, const DofConfig& config);

// Sigma = R S S^T R^T with S = diag(sigma), R the shape rotation.
Mat3 covariance(const GaussianSet& g, int i);

// Appends a copy of point i displaced by `displacement`; every other
// parameter is copied verbatim. Returns the new index.
int clone_point(GaussianSet& g, int i, const Vec3& displacement);
// Displacement drawn from an isotropic normal with the point's own sigma.
int clone_point(GaussianSet& g, int i, Rng& rng);

// Removes the given points, keeping the remaining order stable. Refuses to
// shrink below n_min.
void prune_points(GaussianSet& g, std::span<const int> indices, int n_min = 1);

// Checkpoint: one JSON header line (config, n, fixed-image geometry, k), then
// raw little-endian float32 blocks in declared parameter order.
struct Checkpoint {
    GaussianSet set;
    GridMeta geometry;
    int k = 10;
};
void save_checkpoint(const GaussianSet& g, const GridMeta& geometry, int k,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace gdir
