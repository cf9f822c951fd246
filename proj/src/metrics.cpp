#include "gdir/metrics.hpp"

#include "gdir/errors.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace gdir {

LandmarkSet warp_landmarks(const GaussianSet& g, const LandmarkSet& landmarks,
                           const SpatialIndex& index, int k) {
    const DisplacementBatch batch = displace_points(g, index, k, landmarks.points);
    LandmarkSet out;
    out.points.resize(landmarks.size());
    for (std::size_t i = 0; i < landmarks.size(); ++i)
        out.points[i] = landmarks.points[i] + batch.displacements[i];
    return out;
}

TreResult tre(const LandmarkSet& a, const LandmarkSet& b) {
    if (a.size() != b.size()) throw validation_error("tre: landmark sets differ in length");
    if (a.size() == 0) throw validation_error("tre: empty landmark sets");
    TreResult r;
    r.per_landmark.resize(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        r.per_landmark[i] = (a.points[i] - b.points[i]).norm();
        sum += r.per_landmark[i];
    }
    r.mean = sum / static_cast<double>(a.size());
    double var = 0.0;
    for (double d : r.per_landmark) var += (d - r.mean) * (d - r.mean);
    r.stddev = std::sqrt(var / static_cast<double>(a.size()));
    return r;
}

double dsc(const MaskVolume& fixed_mask, const MaskVolume& warped_mask, int32_t label) {
    if (fixed_mask.meta.dims != warped_mask.meta.dims)
        throw validation_error("dsc: mask dimensions differ");
    std::size_t nf = 0, nw = 0, overlap = 0;
    for (std::size_t i = 0; i < fixed_mask.data.size(); ++i) {
        const bool f = fixed_mask.data[i] == label;
        const bool w = warped_mask.data[i] == label;
        nf += f;
        nw += w;
        overlap += f && w;
    }
    if (nf + nw == 0) return 1.0; // both regions empty
    return 2.0 * static_cast<double>(overlap) / static_cast<double>(nf + nw);
}

std::vector<int32_t> mask_labels(const MaskVolume& m) {
    std::set<int32_t> labels;
    for (int32_t v : m.data)
        if (v != 0) labels.insert(v);
    return {labels.begin(), labels.end()};
}

MaskVolume warp_mask(const GaussianSet& g, const MaskVolume& moving_mask,
                     const GridMeta& fixed_geometry, const SpatialIndex& index, int k) {
    MaskVolume out;
    out.meta = fixed_geometry;
    out.data.resize(fixed_geometry.voxel_count());

    const int nx = fixed_geometry.dims[0], ny = fixed_geometry.dims[1];
    std::vector<Vec3> points(static_cast<std::size_t>(nx) * ny);
    for (int iz = 0; iz < fixed_geometry.dims[2]; ++iz) {
        std::size_t p = 0;
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) points[p++] = fixed_geometry.voxel_center(ix, iy, iz);
        const DisplacementBatch batch = displace_points(g, index, k, points);
        const std::size_t base = fixed_geometry.index(0, 0, iz);
        for (std::size_t j = 0; j < points.size(); ++j)
            out.data[base + j] = sample_nearest(moving_mask, points[j] + batch.displacements[j]);
    }
    return out;
}

void export_dense_dvf(const GaussianSet& g, const GridMeta& geometry, const SpatialIndex& index,
                      int k, const std::string& path) {
    geometry.validate();

    // Streamed variant of write_dvf: sidecar first, payload slab by slab.
    const std::string side = [&] {
        std::filesystem::path p(path);
        p.replace_extension(".json");
        return p.string();
    }();
    const std::string payload = [&] {
        std::filesystem::path p(path);
        p.replace_extension(".raw");
        return p.string();
    }();

    {
        std::ofstream js(side);
        if (!js) throw io_error("cannot open sidecar '" + side + "' for writing");
        js << "{\n  \"dims\": [" << geometry.dims[0] << ", " << geometry.dims[1] << ", "
           << geometry.dims[2] << "],\n";
        js.precision(17);
        js << "  \"spacing\": [" << geometry.spacing.x << ", " << geometry.spacing.y << ", "
           << geometry.spacing.z << "],\n";
        js << "  \"origin\": [" << geometry.origin.x << ", " << geometry.origin.y << ", "
           << geometry.origin.z << "],\n";
        js << "  \"components\": 3,\n  \"dtype\": \"float32_le\",\n  \"order\": \"x-fastest\"\n}\n";
        if (!js) throw io_error("write failed on sidecar '" + side + "'");
    }

    std::ofstream out(payload, std::ios::binary);
    if (!out) throw io_error("cannot open '" + payload + "' for writing");

    const int nx = geometry.dims[0], ny = geometry.dims[1];
    std::vector<Vec3> points(static_cast<std::size_t>(nx) * ny);
    std::vector<float> slab(points.size() * 3);
    for (int iz = 0; iz < geometry.dims[2]; ++iz) {
        std::size_t p = 0;
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) points[p++] = geometry.voxel_center(ix, iy, iz);
        const DisplacementBatch batch = displace_points(g, index, k, points);
        for (std::size_t j = 0; j < points.size(); ++j) {
            slab[3 * j] = static_cast<float>(batch.displacements[j].x);
            slab[3 * j + 1] = static_cast<float>(batch.displacements[j].y);
            slab[3 * j + 2] = static_cast<float>(batch.displacements[j].z);
        }
        out.write(reinterpret_cast<const char*>(slab.data()),
                  static_cast<std::streamsize>(slab.size() * 4));
    }
    if (!out) throw io_error("write failed on '" + payload + "'");
}

Volume3 warp_volume(const GaussianSet& g, const Volume3& moving, const GridMeta& fixed_geometry,
                    const SpatialIndex& index, int k) {
    Volume3 out;
    out.meta = fixed_geometry;
    out.data.resize(fixed_geometry.voxel_count());

    const int nx = fixed_geometry.dims[0], ny = fixed_geometry.dims[1];
    std::vector<Vec3> points(static_cast<std::size_t>(nx) * ny);
    for (int iz = 0; iz < fixed_geometry.dims[2]; ++iz) {
        std::size_t p = 0;
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) points[p++] = fixed_geometry.voxel_center(ix, iy, iz);
        const DisplacementBatch batch = displace_points(g, index, k, points);
        const std::size_t base = fixed_geometry.index(0, 0, iz);
        for (std::size_t j = 0; j < points.size(); ++j)
            out.data[base + j] =
                static_cast<float>(sample_trilinear(moving, points[j] + batch.displacements[j]));
    }
    return out;
}

} // namespace gdir
