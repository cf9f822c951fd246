#include "gdir/objective.hpp"

#include "gdir/errors.hpp"
#include "gdir/parallel.hpp"

#include <cmath>

namespace gdir {

std::vector<Vec3> sample_batch(const Volume3& fixed, int batch_size, Rng& rng,
                               const MaskVolume* mask) {
    if (batch_size < 2) throw validation_error("sample_batch: batch_size must be >= 2");
    const GridMeta& g = fixed.meta;

    std::vector<Vec3> points;
    points.reserve(static_cast<std::size_t>(batch_size));

    if (mask) {
        if (!mask->meta.same_grid(g))
            throw validation_error("sample_batch: mask geometry differs from fixed image");
        std::vector<std::size_t> inside;
        for (std::size_t i = 0; i < mask->data.size(); ++i)
            if (mask->data[i] > 0) inside.push_back(i);
        if (inside.empty()) throw validation_error("sample_batch: mask has no positive voxels");
        for (int s = 0; s < batch_size; ++s) {
            const std::size_t flat = inside[rng.uniform_index(inside.size())];
            const int ix = static_cast<int>(flat % g.dims[0]);
            const int iy = static_cast<int>((flat / g.dims[0]) % g.dims[1]);
            const int iz = static_cast<int>(flat / (static_cast<std::size_t>(g.dims[0]) * g.dims[1]));
            points.push_back(g.voxel_center(ix, iy, iz));
        }
        return points;
    }

    for (int s = 0; s < batch_size; ++s) {
        const int ix = static_cast<int>(rng.uniform_index(g.dims[0]));
        const int iy = static_cast<int>(rng.uniform_index(g.dims[1]));
        const int iz = static_cast<int>(rng.uniform_index(g.dims[2]));
        points.push_back(g.voxel_center(ix, iy, iz));
    }
    return points;
}

double ncc_loss(std::span<const double> fixed_vals, std::span<const double> warped_vals,
                std::span<double> adjoints) {
    const std::size_t m = fixed_vals.size();
    if (m < 2) throw validation_error("ncc_loss: need at least 2 samples");
    if (warped_vals.size() != m || adjoints.size() != m)
        throw validation_error("ncc_loss: size mismatch");

    double fixed_mean = 0.0, warped_mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        fixed_mean += fixed_vals[i];
        warped_mean += warped_vals[i];
    }
    fixed_mean /= static_cast<double>(m);
    warped_mean /= static_cast<double>(m);

    double s_fw = 0.0, s_ff = 0.0, s_ww = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double f = fixed_vals[i] - fixed_mean;
        const double w = warped_vals[i] - warped_mean;
        s_fw += f * w;
        s_ff += f * f;
        s_ww += w * w;
    }

    constexpr double kEps = 1e-8;
    const double denom = std::sqrt(s_ff * s_ww + kEps);
    const double loss = -s_fw / denom;

    // d loss / d warped_i = -F_i / denom + s_fw * s_ff * W_i / denom^3
    const double denom3 = denom * denom * denom;
    for (std::size_t i = 0; i < m; ++i) {
        const double f = fixed_vals[i] - fixed_mean;
        const double w = warped_vals[i] - warped_mean;
        adjoints[i] = -f / denom + s_fw * s_ff * w / denom3;
    }
    return loss;
}

EvalResult evaluate(const GaussianSet& g, const Volume3& fixed, const Volume3& moving,
                    std::span<const Vec3> points, const SpatialIndex& index, int k, int step) {
    const std::size_t m = points.size();
    if (m < 2) throw validation_error("evaluate: need at least 2 points");

    DisplacementBatch batch = displace_points(g, index, k, points);

    std::vector<double> fixed_vals(m), warped_vals(m);
    std::vector<Vec3> warped_pos(m);
    parallel_chunks(m, 4096, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j) {
            fixed_vals[j] = sample_trilinear(fixed, points[j]);
            warped_pos[j] = points[j] + batch.displacements[j];
            warped_vals[j] = sample_trilinear(moving, warped_pos[j]);
        }
    });

    std::vector<double> adjoints(m);
    const double loss = ncc_loss(fixed_vals, warped_vals, adjoints);

    // dL/dPhi_j = dL/dwarped_j * grad I_moving at the displaced position.
    std::vector<Vec3> upstream(m);
    parallel_chunks(m, 4096, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j)
            upstream[j] = adjoints[j] * sample_gradient(moving, warped_pos[j]);
    });

    EvalResult out;
    out.grads.resize_like(g);
    lbs_backward(g, batch, upstream, out.grads);
    out.report = LossReport{loss, static_cast<int>(m), batch.underflow_count, step};
    return out;
}

} // namespace gdir
