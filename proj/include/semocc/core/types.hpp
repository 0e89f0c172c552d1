// ----------------------------------------------------------------------------
// Copyright 2026 The semocc Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

#pragma once

#include <cmath>

#include <Eigen/Core>

#include "semocc/core/errors.hpp"

namespace semocc {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;

// Quaternions are plain 4-vectors in (w, x, y, z) order, scalar first.

inline Vec4 quat_identity() { return Vec4(1.0, 0.0, 0.0, 0.0); }

inline constexpr double kMinQuatNorm = 1e-8;

inline Vec4 quat_normalized(const Vec4& q) {
    const double n = q.norm();
    if (!(n > kMinQuatNorm)) throw DegenerateRotation("quaternion norm below 1e-8");
    return q / n;
}

inline Vec4 quat_from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized() * std::sin(0.5 * angle);
    return Vec4(std::cos(0.5 * angle), a.x(), a.y(), a.z());
}

/// Hamilton product a ⊗ b (apply b first, then a).
inline Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
    return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

inline Vec4 quat_conjugate(const Vec4& q) { return Vec4(q[0], -q[1], -q[2], -q[3]); }

/// Rotation matrix of a unit quaternion. No normalization is applied.
inline Mat3 unit_quat_to_matrix(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Rotation matrix of an arbitrary nonzero quaternion (normalized on use).
inline Mat3 quat_to_matrix(const Vec4& q) { return unit_quat_to_matrix(quat_normalized(q)); }

/// Vector-Jacobian product of R = quat_to_matrix(raw): maps dL/dR to dL/draw.
inline Vec4 quat_to_matrix_vjp(const Vec4& raw, const Mat3& dR) {
    const double n = raw.norm();
    if (!(n > kMinQuatNorm)) throw DegenerateRotation("quaternion norm below 1e-8");
    const Vec4 q = raw / n;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    const Mat3& g = dR;
    Vec4 dq;
    dq[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    dq[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                 w * g(2, 1) - 2 * x * g(2, 2));
    dq[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                 z * g(2, 1) - 2 * y * g(2, 2));
    dq[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
                 x * g(2, 0) + y * g(2, 1));
    // Project through the normalization q = raw / |raw|.
    return (dq - q * q.dot(dq)) / n;
}

/// Rigid transform mapping points from a local frame into a parent frame.
struct Pose {
    Vec4 rotation = quat_identity();
    Vec3 translation = Vec3::Zero();
    double timestamp = 0.0;

    Mat3 matrix() const { return quat_to_matrix(rotation); }
    Vec3 apply(const Vec3& p) const { return matrix() * p + translation; }
    Vec3 rotate(const Vec3& v) const { return matrix() * v; }

    /// (this ∘ other)(p) = this(other(p)). Keeps this pose's timestamp.
    Pose compose(const Pose& other) const {
        Pose out;
        out.rotation = quat_normalized(quat_multiply(rotation, other.rotation));
        out.translation = matrix() * other.translation + translation;
        out.timestamp = timestamp;
        return out;
    }

    Pose inverse() const {
        Pose out;
        out.rotation = quat_conjugate(quat_normalized(rotation));
        out.translation = -(quat_to_matrix(out.rotation) * translation);
        out.timestamp = timestamp;
        return out;
    }

    static Pose identity() { return Pose{}; }
};

/// Transform taking coordinates in frame `from` into frame `to`, both
/// expressed as local-to-world poses.
inline Pose relative_pose(const Pose& to, const Pose& from) { return to.inverse().compose(from); }

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

}  // namespace semocc
