#include "gdir/synthetic.hpp"

#include "gdir/errors.hpp"
#include "gdir/rng.hpp"

#include <algorithm>
#include <cmath>

namespace gdir {

Vec3 AnalyticField::displacement(const Vec3& p) const {
    switch (kind) {
    case WarpKind::constant_shift:
        return shift;
    case WarpKind::affine:
        return linear * p - p + offset;
    case WarpKind::gaussian_bumps: {
        Vec3 d{};
        for (const Bump& b : bumps) {
            const double r2 = (p - b.center).norm2();
            d += b.direction * std::exp(-0.5 * r2 / (b.radius * b.radius));
        }
        return d;
    }
    }
    return {};
}

Mat3 AnalyticField::jacobian(const Vec3& p) const {
    switch (kind) {
    case WarpKind::constant_shift:
        return Mat3{};
    case WarpKind::affine: {
        Mat3 j = linear;
        j(0, 0) -= 1.0;
        j(1, 1) -= 1.0;
        j(2, 2) -= 1.0;
        return j;
    }
    case WarpKind::gaussian_bumps: {
        Mat3 j{};
        for (const Bump& b : bumps) {
            const Vec3 u = p - b.center;
            const double inv_r2 = 1.0 / (b.radius * b.radius);
            const double e = std::exp(-0.5 * u.norm2() * inv_r2);
            // d/dp [dir * e] = -e * inv_r2 * dir u^T
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) j(r, c) -= e * inv_r2 * b.direction[r] * u[c];
        }
        return j;
    }
    }
    return {};
}

Volume3 make_phantom(std::array<int, 3> dims, const Vec3& spacing, uint64_t seed) {
    for (int a = 0; a < 3; ++a)
        if (dims[a] < 16) throw validation_error("make_phantom: dims must be >= 16 per axis");

    Volume3 v;
    v.meta = GridMeta{dims, spacing, {0, 0, 0}};
    v.data.resize(v.meta.voxel_count());

    Rng rng(seed);
    const Box3 box = v.meta.world_bounds();
    const Vec3 ext = box.extent();
    const double min_ext = std::min({ext.x, ext.y, ext.z});

    // ~20 band-limited sinusoids: wavelengths from 4 voxels up to the volume
    // size keep the texture smooth but informative everywhere.
    struct Component {
        Vec3 k;
        double phase, amp;
    };
    std::vector<Component> comps;
    const double max_spacing = std::max({spacing.x, spacing.y, spacing.z});
    for (int i = 0; i < 20; ++i) {
        const double wavelength = rng.uniform(6.0 * max_spacing, min_ext);
        Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
        const double n = dir.norm();
        dir = n > 1e-12 ? dir / n : Vec3{1, 0, 0};
        comps.push_back({dir * (2.0 * M_PI / wavelength), rng.uniform(0.0, 2.0 * M_PI),
                         rng.uniform(20.0, 60.0)});
    }

    // Ellipsoidal "organ" step in the middle of the volume.
    const Vec3 center = box.lo + 0.5 * ext;
    const Vec3 radii = 0.3 * ext;

    for (int iz = 0; iz < dims[2]; ++iz)
        for (int iy = 0; iy < dims[1]; ++iy)
            for (int ix = 0; ix < dims[0]; ++ix) {
                const Vec3 p = v.meta.voxel_center(ix, iy, iz);
                double val = 100.0;
                for (const Component& c : comps) val += c.amp * std::sin(c.k.dot(p) + c.phase);
                const Vec3 q{(p.x - center.x) / radii.x, (p.y - center.y) / radii.y,
                             (p.z - center.z) / radii.z};
                if (q.norm2() < 1.0) val += 50.0;
                v.data[v.meta.index(ix, iy, iz)] = static_cast<float>(val);
            }
    return v;
}

AnalyticField make_warp(WarpKind kind, double magnitude, const Box3& domain, uint64_t seed) {
    if (!(magnitude > 0.0)) throw validation_error("make_warp: magnitude must be > 0");
    if (domain.degenerate()) throw validation_error("make_warp: degenerate domain");

    Rng rng(seed);
    AnalyticField f;
    f.kind = kind;

    switch (kind) {
    case WarpKind::constant_shift:
        f.shift = {magnitude, 0.0, 0.0};
        break;

    case WarpKind::affine: {
        // A near identity plus an offset, scaled so the peak displacement over
        // the domain corners is `magnitude` (the max of an affine field over a
        // box is attained at a corner).
        Mat3 e{};
        for (int i = 0; i < 9; ++i) e.m[i] = rng.uniform(-1.0, 1.0);
        Vec3 b{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        double peak = 0.0;
        for (int corner = 0; corner < 8; ++corner) {
            const Vec3 p{corner & 1 ? domain.hi.x : domain.lo.x,
                         corner & 2 ? domain.hi.y : domain.lo.y,
                         corner & 4 ? domain.hi.z : domain.lo.z};
            peak = std::max(peak, (e * p + b).norm());
        }
        const double scale = magnitude / peak;
        f.linear = Mat3::identity() + e * scale;
        f.offset = b * scale;
        break;
    }

    case WarpKind::gaussian_bumps: {
        const Vec3 ext = domain.extent();
        const double min_ext = std::min({ext.x, ext.y, ext.z});
        const int n_bumps = 3 + static_cast<int>(rng.uniform_index(3)); // 3..5
        const double radius = 0.12 * min_ext;

        // Centers kept >= 3 radii apart (and off the boundary) so the field
        // peak is the largest single bump peak up to ~1% cross-talk.
        std::vector<Vec3> centers;
        int guard = 0;
        while (static_cast<int>(centers.size()) < n_bumps && guard++ < 10000) {
            Vec3 c{rng.uniform(domain.lo.x + 0.2 * ext.x, domain.hi.x - 0.2 * ext.x),
                   rng.uniform(domain.lo.y + 0.2 * ext.y, domain.hi.y - 0.2 * ext.y),
                   rng.uniform(domain.lo.z + 0.2 * ext.z, domain.hi.z - 0.2 * ext.z)};
            bool ok = true;
            for (const Vec3& prev : centers)
                if ((c - prev).norm() < 3.0 * radius) ok = false;
            if (ok) centers.push_back(c);
        }

        double max_peak = 0.0;
        for (std::size_t i = 0; i < centers.size(); ++i) {
            Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            const double n = dir.norm();
            dir = n > 1e-12 ? dir / n : Vec3{1, 0, 0};
            const double peak = i == 0 ? magnitude : rng.uniform(0.4 * magnitude, magnitude);
            f.bumps.push_back({centers[i], dir * peak, radius});
            max_peak = std::max(max_peak, peak);
        }
        // Normalize the strongest bump peak to exactly `magnitude`.
        for (auto& b : f.bumps) b.direction *= magnitude / max_peak;
        break;
    }
    }
    return f;
}

SyntheticCase make_case(const Volume3& phantom, const AnalyticField& field, int n_landmarks,
                        uint64_t seed) {
    phantom.validate();
    const Box3 box = phantom.meta.world_bounds();
    const Vec3 ext = box.extent();

    // Precondition: peak displacement under a quarter of the volume extent.
    const double min_ext = std::min({ext.x, ext.y, ext.z});
    double peak = 0.0;
    if (field.kind == WarpKind::gaussian_bumps) {
        for (const auto& b : field.bumps) peak = std::max(peak, b.direction.norm());
    } else {
        for (int corner = 0; corner < 8; ++corner) {
            const Vec3 p{corner & 1 ? box.hi.x : box.lo.x, corner & 2 ? box.hi.y : box.lo.y,
                         corner & 4 ? box.hi.z : box.lo.z};
            peak = std::max(peak, field.displacement(p).norm());
        }
    }
    if (!(peak < 0.25 * min_ext))
        throw validation_error("make_case: field peak displacement " + std::to_string(peak) +
                               " mm exceeds a quarter of the volume extent");

    SyntheticCase c;
    c.true_field = field;
    c.moving = phantom;

    // fixed(x) = phantom sampled at x + Phi(x): pull-back through the field,
    // so the true field maps fixed-domain points onto the moving image exactly.
    c.fixed.meta = phantom.meta;
    c.fixed.data.resize(phantom.meta.voxel_count());
    const GridMeta& m = phantom.meta;
    for (int iz = 0; iz < m.dims[2]; ++iz)
        for (int iy = 0; iy < m.dims[1]; ++iy)
            for (int ix = 0; ix < m.dims[0]; ++ix) {
                const Vec3 x = m.voxel_center(ix, iy, iz);
                c.fixed.data[m.index(ix, iy, iz)] =
                    static_cast<float>(sample_trilinear(phantom, x + field.displacement(x)));
            }

    Rng rng(seed);
    c.landmarks_fixed.points.reserve(n_landmarks);
    c.landmarks_moving.points.reserve(n_landmarks);
    const Vec3 margin = 0.1 * ext;
    for (int i = 0; i < n_landmarks; ++i) {
        const Vec3 l{rng.uniform(box.lo.x + margin.x, box.hi.x - margin.x),
                     rng.uniform(box.lo.y + margin.y, box.hi.y - margin.y),
                     rng.uniform(box.lo.z + margin.z, box.hi.z - margin.z)};
        c.landmarks_fixed.points.push_back(l);
        c.landmarks_moving.points.push_back(l + field.displacement(l));
    }
    return c;
}

const char* warp_kind_name(WarpKind k) {
    switch (k) {
    case WarpKind::constant_shift: return "constant_shift";
    case WarpKind::affine: return "affine";
    case WarpKind::gaussian_bumps: return "gaussian_bumps";
    }
    return "?";
}

WarpKind warp_kind_from_name(const std::string& name) {
    if (name == "constant_shift") return WarpKind::constant_shift;
    if (name == "affine") return WarpKind::affine;
    if (name == "gaussian_bumps") return WarpKind::gaussian_bumps;
    throw validation_error("unknown warp kind '" + name +
                           "' (expected constant_shift, affine, gaussian_bumps)");
}

} // namespace gdir
