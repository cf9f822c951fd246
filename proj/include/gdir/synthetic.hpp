#pragma once

#include "gdir/geom.hpp"
#include "gdir/volume.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace gdir {

enum class WarpKind { constant_shift, affine, gaussian_bumps };

// Closed-form displacement field with closed-form spatial derivatives,
// evaluable at any world point.
struct AnalyticField {
    WarpKind kind = WarpKind::constant_shift;
    Vec3 shift;                        // constant_shift
    Mat3 linear = Mat3::identity();    // affine: Phi(x) = (A - I) x + b
    Vec3 offset;                       // affine b
    struct Bump {
        Vec3 center;
        Vec3 direction; // peak displacement vector
        double radius = 1.0;
    };
    std::vector<Bump> bumps;

    Vec3 displacement(const Vec3& p) const;
    Mat3 jacobian(const Vec3& p) const; // dPhi/dp
};

// Smooth textured phantom: band-limited sinusoidal components plus an
// ellipsoidal intensity step, with usable gradient almost everywhere.
Volume3 make_phantom(std::array<int, 3> dims, const Vec3& spacing, uint64_t seed);

// Analytic field over `domain`. gaussian_bumps places up to 5 well-separated
// radial bumps whose global peak magnitude is `magnitude` (within ~1%).
AnalyticField make_warp(WarpKind kind, double magnitude, const Box3& domain, uint64_t seed);

struct SyntheticCase {
    Volume3 fixed;
    Volume3 moving;
    AnalyticField true_field;
    LandmarkSet landmarks_fixed;
    LandmarkSet landmarks_moving;
};

// Moving = the phantom verbatim; fixed(x) = phantom sampled at x + Phi(x).
// Sampling moving at x + Phi_true(x) therefore reproduces fixed at x exactly,
// and landmark pairs satisfy l_moving = l_fixed + Phi_true(l_fixed).
// Landmarks stay >= 10% inside the volume to avoid clamp regions.
SyntheticCase make_case(const Volume3& phantom, const AnalyticField& field, int n_landmarks,
                        uint64_t seed);

const char* warp_kind_name(WarpKind k);
WarpKind warp_kind_from_name(const std::string& name);

} // namespace gdir
