#pragma once

#include "gdir/errors.hpp"

#include <array>
#include <cmath>

namespace gdir {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
    Vec3 operator-() const { return {-x, -y, -z}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }
    static Mat3 diag(const Vec3& d) {
        Mat3 r;
        r.m = {d.x, 0, 0, 0, d.y, 0, 0, 0, d.z};
        return r;
    }

    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
    Mat3 operator+(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
        return r;
    }
    Mat3 operator*(double s) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] * s;
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
    // v^T applied from the left: returns M^T v.
    Vec3 transposed_mul(const Vec3& v) const {
        return {m[0] * v.x + m[3] * v.y + m[6] * v.z,
                m[1] * v.x + m[4] * v.y + m[7] * v.z,
                m[2] * v.x + m[5] * v.y + m[8] * v.z};
    }
    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
};

// Quaternion, scalar-first (w, x, y, z).
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    double& operator[](int i) { return (&w)[i]; }
    double operator[](int i) const { return (&w)[i]; }
    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    static Quat identity() { return {1, 0, 0, 0}; }
};

// Rotation matrix of a unit quaternion. The input is normalized first so the
// result is orthonormal with det +1 for any nonzero quaternion.
inline Mat3 rotation_matrix(const Quat& q) {
    const double n = q.norm();
    if (!(n > 1e-12)) throw validation_error("rotation_matrix: zero quaternion");
    const double w = q.w / n, x = q.x / n, y = q.y / n, z = q.z / n;
    Mat3 r;
    r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
           2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
           2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
    return r;
}

// Chain rule for the quaternion->rotation map above, including the internal
// normalization: adds dL/dq to grad4 given dL/dR.
inline void accumulate_rotation_grad(const Quat& q, const Mat3& dL_dR, double* grad4) {
    const double n = q.norm();
    if (!(n > 1e-12)) throw validation_error("accumulate_rotation_grad: zero quaternion");
    const double w = q.w / n, x = q.x / n, y = q.y / n, z = q.z / n;

    // dR/dq_c of the unit-quaternion formula, c in {w,x,y,z}.
    const std::array<std::array<double, 9>, 4> dR = {{
        {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0},
        {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x},
        {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y},
        {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0},
    }};

    double g_unit[4];
    for (int c = 0; c < 4; ++c) {
        double s = 0.0;
        for (int i = 0; i < 9; ++i) s += dL_dR.m[i] * dR[c][i];
        g_unit[c] = s;
    }

    // Through q_hat = q / |q|:  dq = (I - q_hat q_hat^T) / |q| * g_unit.
    const double qh[4] = {w, x, y, z};
    double proj = 0.0;
    for (int c = 0; c < 4; ++c) proj += qh[c] * g_unit[c];
    for (int c = 0; c < 4; ++c) grad4[c] += (g_unit[c] - proj * qh[c]) / n;
}

// Axis-aligned world-space box.
struct Box3 {
    Vec3 lo, hi;
    Vec3 extent() const { return hi - lo; }
    bool degenerate() const {
        return !(hi.x > lo.x) || !(hi.y > lo.y) || !(hi.z > lo.z);
    }
    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y &&
               p.z >= lo.z && p.z <= hi.z;
    }
};

} // namespace gdir
