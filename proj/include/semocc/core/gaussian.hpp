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

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "semocc/core/types.hpp"

namespace semocc {

inline constexpr double kOpacityEps = 1e-6;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double clamp_opacity(double a) { return std::clamp(a, kOpacityEps, 1.0 - kOpacityEps); }

inline VecX softmax(const VecX& logits) {
    if (logits.size() == 0) return logits;
    const VecX e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

/// dL/dlogits given dL/dprobs, for probs = softmax(logits).
inline VecX softmax_vjp(const VecX& probs, const VecX& dprobs) {
    return (probs.array() * (dprobs.array() - probs.dot(dprobs))).matrix();
}

/// One anisotropic 3D primitive with opacity and a class distribution.
struct SemanticGaussian {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = quat_identity();  // unit, (w, x, y, z)
    Vec3 scale = Vec3::Ones();        // meters, > 0
    double opacity = 1.0;             // [0, 1]
    VecX classes;                     // sums to 1
    Vec3 velocity = Vec3::Zero();     // m/s

    int class_count() const { return static_cast<int>(classes.size()); }
};

/// Unconstrained optimizable form of a SemanticGaussian.
///
/// rotation is normalized on use, log_scale is exponentiated (and floored at
/// scale_min), opacity_logit goes through a clamped sigmoid and class_logits
/// through a softmax.
struct GaussianParams {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = quat_identity();
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    VecX class_logits;
    Vec3 velocity = Vec3::Zero();

    static GaussianParams from(const SemanticGaussian& g) {
        GaussianParams p;
        p.position = g.position;
        p.rotation = g.rotation;
        p.log_scale = g.scale.array().log();
        p.opacity_logit = logit(clamp_opacity(g.opacity));
        p.class_logits = g.classes.array().max(1e-300).log();
        p.velocity = g.velocity;
        return p;
    }

    SemanticGaussian decode(double scale_min = 0.0) const {
        SemanticGaussian g;
        g.position = position;
        g.rotation = quat_normalized(rotation);
        g.scale = log_scale.array().exp().max(scale_min);
        g.opacity = clamp_opacity(sigmoid(opacity_logit));
        g.classes = softmax(class_logits);
        g.velocity = velocity;
        return g;
    }
};

struct QueryChild {
    Vec3 offset = Vec3::Zero();
    Vec4 rotation = quat_identity();
    Vec3 scale = Vec3::Ones();
    double opacity = 1.0;
};

/// Sparse anchor that decodes to children.size() Gaussians sharing the
/// query's class distribution and velocity.
struct SceneQuery {
    Vec3 position = Vec3::Zero();
    Vec3 offset = Vec3::Zero();
    double opacity = 1.0;
    Vec3 velocity = Vec3::Zero();
    std::vector<QueryChild> children;
    VecX classes;

    /// Effective anchor p + o.
    Vec3 anchor() const { return position + offset; }
};

inline std::vector<SemanticGaussian> decode_query(const SceneQuery& q) {
    std::vector<SemanticGaussian> out;
    out.reserve(q.children.size());
    for (const auto& c : q.children) {
        SemanticGaussian g;
        g.position = q.position + q.offset + c.offset;
        g.rotation = c.rotation;
        g.scale = c.scale;
        g.opacity = q.opacity * c.opacity;
        g.classes = q.classes;
        g.velocity = q.velocity;
        out.push_back(std::move(g));
    }
    return out;
}

inline std::vector<SemanticGaussian> decode_queries(std::span<const SceneQuery> queries) {
    std::vector<SemanticGaussian> out;
    for (const auto& q : queries) {
        auto g = decode_query(q);
        out.insert(out.end(), std::make_move_iterator(g.begin()), std::make_move_iterator(g.end()));
    }
    return out;
}

}  // namespace semocc
