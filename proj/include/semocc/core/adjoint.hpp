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

#include <vector>

#include "semocc/core/gaussian.hpp"

namespace semocc {

/// Gradient of a loss with respect to the constrained quantities a kernel
/// actually consumes: mean, precision matrix Σ⁻¹ (as a full 3x3 adjoint),
/// opacity, log of the density normalizer 1/((2π)^{3/2}|Σ|^{1/2}), and the
/// class (or color) vector.
struct GaussianAdjoint {
    Vec3 mean = Vec3::Zero();
    Mat3 precision = Mat3::Zero();
    double opacity = 0.0;
    double log_norm = 0.0;
    Vec3 velocity = Vec3::Zero();
    VecX attributes;

    GaussianAdjoint& operator+=(const GaussianAdjoint& o) {
        mean += o.mean;
        velocity += o.velocity;
        precision += o.precision;
        opacity += o.opacity;
        log_norm += o.log_norm;
        if (attributes.size() == 0)
            attributes = o.attributes;
        else if (o.attributes.size() != 0)
            attributes += o.attributes;
        return *this;
    }
};

/// Gradient with respect to the raw (optimizable) parameters of one Gaussian,
/// plus the opacity / class adjoints in constrained space so callers can
/// chain through their own parameterization (e.g. query decoding).
struct GaussianGradient {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    VecX class_logits;
    Vec3 velocity = Vec3::Zero();

    double opacity = 0.0;
    VecX classes;

    bool all_finite() const {
        return position.allFinite() && velocity.allFinite() && rotation.allFinite() && log_scale.allFinite() &&
               std::isfinite(opacity_logit) && class_logits.allFinite() && std::isfinite(opacity) &&
               classes.allFinite();
    }
};

/// Chains geometric adjoints (mean, precision, normalizer, opacity) to the raw
/// parameters. `rotation` is the rotation matrix of g.rotation. Class
/// adjoints are left to the caller.
inline void chain_geometry(const SemanticGaussian& g, const Mat3& rotation, const Vec3& mean_adj,
                           const Mat3& precision_adj, double opacity_adj, double log_norm_adj,
                           GaussianGradient& out) {
    const Vec3 inv_s2 = g.scale.array().square().inverse();
    const Mat3 sym = precision_adj + precision_adj.transpose();
    const Mat3 dR = sym * rotation * inv_s2.asDiagonal();
    out.position += mean_adj;
    out.rotation += quat_to_matrix_vjp(g.rotation, dR);
    for (int k = 0; k < 3; ++k) {
        const Vec3 r = rotation.col(k);
        out.log_scale[k] += -2.0 * inv_s2[k] * r.dot(precision_adj * r) - log_norm_adj;
    }
    out.opacity += opacity_adj;
    out.opacity_logit += opacity_adj * g.opacity * (1.0 - g.opacity);
}

inline GaussianGradient finalize_gradient(const SemanticGaussian& g, const Mat3& rotation,
                                          const GaussianAdjoint& adj) {
    GaussianGradient out;
    chain_geometry(g, rotation, adj.mean, adj.precision, adj.opacity, adj.log_norm, out);
    out.velocity = adj.velocity;
    out.classes = adj.attributes.size() ? adj.attributes : VecX::Zero(g.classes.size());
    out.class_logits = g.classes.size() ? softmax_vjp(g.classes, out.classes) : VecX();
    return out;
}

}  // namespace semocc
