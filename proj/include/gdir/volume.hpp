#pragma once

#include "gdir/geom.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gdir {

// Grid geometry shared by volumes, masks, and displacement fields.
// Voxel (0,0,0) has its center at `origin`; index i maps to
// origin + i * spacing (world millimeters). Storage is x-fastest.
struct GridMeta {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing{1, 1, 1};
    Vec3 origin{0, 0, 0};

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int ix, int iy, int iz) const {
        return static_cast<std::size_t>(ix) +
               static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(iy) +
               static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(iz));
    }
    Vec3 voxel_center(int ix, int iy, int iz) const {
        return {origin.x + ix * spacing.x, origin.y + iy * spacing.y, origin.z + iz * spacing.z};
    }
    // World box spanned by voxel centers.
    Box3 world_bounds() const {
        return {origin, voxel_center(dims[0] - 1, dims[1] - 1, dims[2] - 1)};
    }
    void validate() const;
    bool same_grid(const GridMeta& o, double tol = 1e-9) const;
};

struct Volume3 {
    GridMeta meta;
    std::vector<float> data;

    float at(int ix, int iy, int iz) const { return data[meta.index(ix, iy, iz)]; }
    float& at(int ix, int iy, int iz) { return data[meta.index(ix, iy, iz)]; }
    void validate() const;
};

struct MaskVolume {
    GridMeta meta;
    std::vector<int32_t> data;

    int32_t at(int ix, int iy, int iz) const { return data[meta.index(ix, iy, iz)]; }
    void validate() const;
};

struct LandmarkSet {
    std::vector<Vec3> points; // world mm

    std::size_t size() const { return points.size(); }
};

enum class VolumeFormat { metaimage, raw_json };
enum class LandmarkUnits { millimeters, voxels };

// Format detection by extension: .mhd/.mha -> metaimage, .json/.raw -> raw+json.
VolumeFormat detect_volume_format(const std::string& path);

Volume3 load_volume(const std::string& path, VolumeFormat format);
Volume3 load_volume(const std::string& path);

// Masks go through the same readers; labels must be non-negative integers.
MaskVolume load_mask(const std::string& path);

// Raw+json scalar volume: float32 little-endian payload plus a .json sidecar.
void write_volume(const Volume3& v, const std::string& path);

// Continuous sampling. World point -> trilinear blend of the 8 surrounding
// voxels; out-of-grid points clamp to the nearest edge (total functions).
double sample_trilinear(const Volume3& v, const Vec3& p);

// Exact spatial derivative of the trilinear interpolant, per world mm.
// Zero along axes where the point lies outside the grid (the clamped value is
// locally constant there).
Vec3 sample_gradient(const Volume3& v, const Vec3& p);

int32_t sample_nearest(const MaskVolume& m, const Vec3& p);

// Dense displacement field: 3 float32 components per voxel, x fastest, with a
// JSON sidecar for geometry. `field` holds xyz triples, length 3 * voxel_count.
void write_dvf(std::span<const float> field, const GridMeta& meta, const std::string& path);

struct DvfData {
    GridMeta meta;
    int components = 3;
    std::vector<float> values;
};
DvfData read_dvf(const std::string& path);

// CSV landmarks, one "x,y,z" row per point, optional single header row.
// Voxel-unit inputs are converted to mm through `ref`.
LandmarkSet load_landmarks(const std::string& path, LandmarkUnits units, const GridMeta& ref);
void write_landmarks(const LandmarkSet& set, const std::string& path);

} // namespace gdir
