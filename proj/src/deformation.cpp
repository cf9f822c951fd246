#include "gdir/deformation.hpp"

#include "gdir/errors.hpp"
#include "gdir/parallel.hpp"

#include <cmath>

namespace gdir {

void ParamGrads::resize_like(const GaussianSet& g) {
    positions.assign(g.positions.size(), 0.0);
    log_scales.assign(g.log_scales.size(), 0.0);
    shape_rotations.assign(g.shape_rotations.size(), 0.0);
    translations.assign(g.translations.size(), 0.0);
    transform_rotations.assign(g.transform_rotations.size(), 0.0);
    touched.assign(static_cast<std::size_t>(g.n), 0);
}

void ParamGrads::add(const ParamGrads& other) {
    auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    acc(positions, other.positions);
    acc(log_scales, other.log_scales);
    acc(shape_rotations, other.shape_rotations);
    acc(translations, other.translations);
    acc(transform_rotations, other.transform_rotations);
    for (std::size_t i = 0; i < touched.size(); ++i) touched[i] |= other.touched[i];
}

bool ParamGrads::all_finite() const {
    auto ok = [](const std::vector<double>& v) {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    };
    return ok(positions) && ok(log_scales) && ok(shape_rotations) && ok(translations) &&
           ok(transform_rotations);
}

double ParamGrads::position_grad_norm(int i) const {
    const double gx = positions[3 * i], gy = positions[3 * i + 1], gz = positions[3 * i + 2];
    return std::sqrt(gx * gx + gy * gy + gz * gz);
}

namespace {

constexpr double kTwoPiCubedRootInv = 0.0634936359342409697857633; // (2*pi)^(-3/2)

// Per-neighbor kernel geometry shared by forward and backward.
struct KernelTerms {
    Vec3 u;        // x - mu
    Vec3 y;        // R^T u (shape-rotation frame)
    Vec3 inv_s2;   // 1 / sigma^2 per axis
    double density = 0.0;  // full normal density (unnormalized weight)
    double quad = 0.0;     // u^T Sigma^-1 u
};

KernelTerms kernel_terms(const GaussianSet& g, int gi, const Vec3& x, const Mat3* shape_rot) {
    KernelTerms t;
    t.u = x - g.position(gi);
    t.y = shape_rot ? shape_rot->transposed_mul(t.u) : t.u;
    const Vec3 s = g.sigma3(gi);
    t.inv_s2 = {1.0 / (s.x * s.x), 1.0 / (s.y * s.y), 1.0 / (s.z * s.z)};
    t.quad = t.y.x * t.y.x * t.inv_s2.x + t.y.y * t.y.y * t.inv_s2.y + t.y.z * t.y.z * t.inv_s2.z;
    const double norm_const = kTwoPiCubedRootInv / (s.x * s.y * s.z);
    t.density = norm_const * std::exp(-0.5 * t.quad);
    return t;
}

} // namespace

void lbs_weights(const GaussianSet& g, const NeighborList& neighbors,
                 std::span<const Vec3> points, std::vector<double>& weights,
                 std::vector<uint8_t>& fallback, int64_t& underflow_count) {
    const int m = neighbors.query_count;
    const int k = neighbors.k;
    weights.assign(static_cast<std::size_t>(m) * k, 0.0);
    fallback.assign(static_cast<std::size_t>(m), 0);

    const bool rotated = g.config.gaussian_rotation == RotationMode::quaternion;
    std::vector<Mat3> rot_cache;
    if (rotated) {
        rot_cache.resize(static_cast<std::size_t>(g.n));
        for (int i = 0; i < g.n; ++i) rot_cache[i] = rotation_matrix(g.shape_rotation(i));
    }

    const std::size_t n_chunks = m == 0 ? 0 : (static_cast<std::size_t>(m) + 4095) / 4096;
    std::vector<int64_t> chunk_underflows(n_chunks, 0);
    parallel_chunks(static_cast<std::size_t>(m), 4096,
                    [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            const int32_t* idx = neighbors.row_indices(static_cast<int>(j));
            double* w = weights.data() + j * k;
            double sum = 0.0;
            for (int c = 0; c < k; ++c) {
                const int gi = idx[c];
                const KernelTerms t =
                    kernel_terms(g, gi, points[j], rotated ? &rot_cache[gi] : nullptr);
                w[c] = t.density;
                sum += t.density;
            }
            if (sum > 0.0 && std::isfinite(sum)) {
                for (int c = 0; c < k; ++c) w[c] /= sum;
            } else {
                for (int c = 0; c < k; ++c) w[c] = 1.0 / k;
                fallback[j] = 1;
                ++chunk_underflows[chunk];
            }
        }
    });
    for (int64_t c : chunk_underflows) underflow_count += c;
}

void lbs_displace(const GaussianSet& g, std::span<const Vec3> points,
                  const NeighborList& neighbors, std::span<const double> weights,
                  std::vector<Vec3>& displacements) {
    const int m = neighbors.query_count;
    const int k = neighbors.k;
    displacements.assign(static_cast<std::size_t>(m), Vec3{});

    const bool rotated = g.config.transform_rotation == RotationMode::quaternion;
    std::vector<Mat3> rot_cache;
    if (rotated) {
        rot_cache.resize(static_cast<std::size_t>(g.n));
        for (int i = 0; i < g.n; ++i) rot_cache[i] = rotation_matrix(g.transform_rotation_q(i));
    }

    parallel_chunks(static_cast<std::size_t>(m), 4096,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            const int32_t* idx = neighbors.row_indices(static_cast<int>(j));
            const double* w = weights.data() + j * k;
            Vec3 phi{};
            for (int c = 0; c < k; ++c) {
                const int gi = idx[c];
                Vec3 contrib = g.translation(gi);
                if (rotated) {
                    const Vec3 u = points[j] - g.position(gi);
                    contrib += rot_cache[gi] * u - u; // R'(x - mu) + mu - x
                }
                phi += w[c] * contrib;
            }
            displacements[j] = phi;
        }
    });
}

DisplacementBatch displace_points(const GaussianSet& g, const SpatialIndex& index, int k,
                                  std::span<const Vec3> points) {
    DisplacementBatch batch;
    batch.points.assign(points.begin(), points.end());
    batch.neighbors = index.knn(points, k);
    lbs_weights(g, batch.neighbors, batch.points, batch.weights, batch.fallback,
                batch.underflow_count);
    lbs_displace(g, batch.points, batch.neighbors, batch.weights, batch.displacements);
    return batch;
}

namespace {

struct BackwardContext {
    const GaussianSet& g;
    const DisplacementBatch& batch;
    std::span<const Vec3> upstream;
    bool shape_rotated, xform_rotated, iso;
    std::vector<Mat3> shape_rot, xform_rot;
};

void backward_range(const BackwardContext& ctx, std::size_t begin, std::size_t end,
                    ParamGrads& grads) {
    const GaussianSet& g = ctx.g;
    const DisplacementBatch& batch = ctx.batch;
    const int k = batch.neighbors.k;
    const bool shape_rotated = ctx.shape_rotated;
    const bool xform_rotated = ctx.xform_rotated;
    const bool iso = ctx.iso;
    const auto& shape_rot = ctx.shape_rot;
    const auto& xform_rot = ctx.xform_rot;

    std::vector<double> phi_dot_a(k); // g_c = a . phi_c per neighbor

    for (std::size_t j = begin; j < end; ++j) {
        const Vec3 a = ctx.upstream[j];
        const Vec3 x = batch.points[j];
        const int32_t* idx = batch.neighbors.row_indices(j);
        const double* w = batch.weights.data() + static_cast<std::size_t>(j) * k;

        // Pass 1: per-neighbor rigid contributions and the weight adjoint mean.
        double g_bar = 0.0;
        for (int c = 0; c < k; ++c) {
            const int gi = idx[c];
            grads.touched[gi] = 1;
            Vec3 phi = g.translation(gi);
            if (xform_rotated) {
                const Vec3 u = x - g.position(gi);
                phi += xform_rot[gi] * u - u;
            }
            phi_dot_a[c] = a.dot(phi);
            g_bar += w[c] * phi_dot_a[c];
        }

        for (int c = 0; c < k; ++c) {
            const int gi = idx[c];
            const double wc = w[c];

            // Direct paths through phi_c.
            if (g.config.transform_translation) {
                grads.translations[3 * gi] += wc * a.x;
                grads.translations[3 * gi + 1] += wc * a.y;
                grads.translations[3 * gi + 2] += wc * a.z;
            }
            if (xform_rotated) {
                const Vec3 u = x - g.position(gi);
                // dL/dR' = w * a u^T
                Mat3 dR;
                for (int r = 0; r < 3; ++r)
                    for (int cc = 0; cc < 3; ++cc) dR(r, cc) = wc * a[r] * u[cc];
                accumulate_rotation_grad(g.transform_rotation_q(gi), dR,
                                         grads.transform_rotations.data() + 4 * gi);
                // dphi/dmu = I - R'  =>  dL/dmu += w * (a - R'^T a)
                const Vec3 rta = xform_rot[gi].transposed_mul(a);
                grads.positions[3 * gi] += wc * (a.x - rta.x);
                grads.positions[3 * gi + 1] += wc * (a.y - rta.y);
                grads.positions[3 * gi + 2] += wc * (a.z - rta.z);
            }

            // Paths through the weights; a uniform fallback row is constant.
            if (batch.fallback[j]) continue;
            const double gamma = wc * (phi_dot_a[c] - g_bar); // dL/d(log w_hat_c)
            if (gamma == 0.0) continue;

            const KernelTerms t =
                kernel_terms(g, gi, x, shape_rotated ? &shape_rot[gi] : nullptr);

            // d(log w_hat)/dmu = Sigma^-1 u  (from the quadratic form).
            const Vec3 dy{t.y.x * t.inv_s2.x, t.y.y * t.inv_s2.y, t.y.z * t.inv_s2.z};
            const Vec3 sig_inv_u = shape_rotated ? shape_rot[gi] * dy : dy;
            grads.positions[3 * gi] += gamma * sig_inv_u.x;
            grads.positions[3 * gi + 1] += gamma * sig_inv_u.y;
            grads.positions[3 * gi + 2] += gamma * sig_inv_u.z;

            // d(log w_hat)/d(log sigma_a) = -1 + y_a^2 / sigma_a^2.
            if (iso) {
                grads.log_scales[gi] += gamma * (t.quad - 3.0);
            } else {
                grads.log_scales[3 * gi] += gamma * (t.y.x * t.y.x * t.inv_s2.x - 1.0);
                grads.log_scales[3 * gi + 1] += gamma * (t.y.y * t.y.y * t.inv_s2.y - 1.0);
                grads.log_scales[3 * gi + 2] += gamma * (t.y.z * t.y.z * t.inv_s2.z - 1.0);
            }

            // d(quad)/dR = 2 u (y / sigma^2)^T; log|Sigma| has no R dependence.
            if (shape_rotated) {
                Mat3 dR;
                for (int r = 0; r < 3; ++r)
                    for (int cc = 0; cc < 3; ++cc) dR(r, cc) = -gamma * t.u[r] * dy[cc];
                accumulate_rotation_grad(g.shape_rotation(gi), dR,
                                         grads.shape_rotations.data() + 4 * gi);
            }
        }
    }
}

} // namespace

void lbs_backward(const GaussianSet& g, const DisplacementBatch& batch,
                  std::span<const Vec3> upstream, ParamGrads& grads) {
    if (batch.weights.empty() && batch.size() > 0)
        throw validation_error("lbs_backward: batch carries no forward tape");
    if (upstream.size() != static_cast<std::size_t>(batch.size()))
        throw validation_error("lbs_backward: upstream adjoint count mismatch");
    if (grads.positions.size() != g.positions.size()) grads.resize_like(g);

    BackwardContext ctx{g,
                        batch,
                        upstream,
                        g.config.gaussian_rotation == RotationMode::quaternion,
                        g.config.transform_rotation == RotationMode::quaternion,
                        g.config.gaussian_scaling == ScalingMode::isotropic,
                        {},
                        {}};
    if (ctx.shape_rotated) {
        ctx.shape_rot.resize(static_cast<std::size_t>(g.n));
        for (int i = 0; i < g.n; ++i) ctx.shape_rot[i] = rotation_matrix(g.shape_rotation(i));
    }
    if (ctx.xform_rotated) {
        ctx.xform_rot.resize(static_cast<std::size_t>(g.n));
        for (int i = 0; i < g.n; ++i) ctx.xform_rot[i] = rotation_matrix(g.transform_rotation_q(i));
    }

    // Fixed-size chunks accumulated in chunk order keep runs reproducible for
    // any thread count.
    const std::size_t m = static_cast<std::size_t>(batch.size());
    constexpr std::size_t kChunk = 2048;
    const std::size_t n_chunks = m == 0 ? 0 : (m + kChunk - 1) / kChunk;
    if (n_chunks <= 1) {
        backward_range(ctx, 0, m, grads);
        return;
    }
    std::vector<ParamGrads> partial(n_chunks);
    parallel_chunks(m, kChunk, [&](std::size_t c, std::size_t b, std::size_t e) {
        partial[c].resize_like(g);
        backward_range(ctx, b, e, partial[c]);
    });
    for (std::size_t c = 0; c < n_chunks; ++c) grads.add(partial[c]);
}

} // namespace gdir
