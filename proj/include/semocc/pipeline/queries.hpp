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

// Directly optimized scene queries. Each query has a fixed anchor p and a
// learnable block of raw parameters:
//     offset o (3), opacity logit (1), velocity (3), class logits (C),
//     color logits (3), then per child: offset (3), rotation (4),
//     log-scale (3), opacity logit (1).
// Child j decodes to a Gaussian at p + o + offset_j with opacity
// sigmoid(query logit) * sigmoid(child logit), the query's class softmax,
// velocity and sigmoid colors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "semocc/core/adjoint.hpp"
#include "semocc/core/gaussian.hpp"
#include "semocc/core/grid.hpp"
#include "semocc/pipeline/config.hpp"

namespace semocc {

inline constexpr int kChildStride = 11;

struct QuerySet {
    int classes = 0;
    int children = 0;
    std::vector<Vec3> anchors;
    VecX params;

    int header() const { return 10 + classes; }
    int stride() const { return header() + kChildStride * children; }
    std::size_t size() const { return anchors.size(); }

    // Offsets of each field within the flat vector.
    Eigen::Index base(std::size_t q) const { return static_cast<Eigen::Index>(q) * stride(); }
    Eigen::Index offset_at(std::size_t q) const { return base(q); }
    Eigen::Index opacity_at(std::size_t q) const { return base(q) + 3; }
    Eigen::Index velocity_at(std::size_t q) const { return base(q) + 4; }
    Eigen::Index classes_at(std::size_t q) const { return base(q) + 7; }
    Eigen::Index colors_at(std::size_t q) const { return base(q) + 7 + classes; }
    Eigen::Index child_at(std::size_t q, int j) const { return base(q) + header() + kChildStride * j; }

    Vec3 offset(std::size_t q) const { return params.segment<3>(offset_at(q)); }
    Vec3 velocity(std::size_t q) const { return params.segment<3>(velocity_at(q)); }
    double query_opacity(std::size_t q) const { return sigmoid(params[opacity_at(q)]); }
    VecX class_probs(std::size_t q) const { return softmax(params.segment(classes_at(q), classes)); }
    Vec3 color(std::size_t q) const {
        const Vec3 l = params.segment<3>(colors_at(q));
        return Vec3(sigmoid(l[0]), sigmoid(l[1]), sigmoid(l[2]));
    }
};

/// Initial child offsets: evenly spread directions on a sphere of radius
/// `spread` (a single child sits at the anchor).
inline std::vector<Vec3> child_pattern(int children, double spread) {
    std::vector<Vec3> out;
    if (children == 1) return {Vec3::Zero()};
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int j = 0; j < children; ++j) {
        const double z = 1.0 - 2.0 * (j + 0.5) / children;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        out.push_back(spread * Vec3(r * std::cos(golden * j), r * std::sin(golden * j), z));
    }
    return out;
}

/// Queries at the given anchors with default raw parameters.
inline QuerySet make_queries(std::span<const Vec3> anchors, const QueryConfig& cfg, int classes) {
    QuerySet qs;
    qs.classes = classes;
    qs.children = cfg.children;
    qs.anchors.assign(anchors.begin(), anchors.end());
    qs.params = VecX::Zero(static_cast<Eigen::Index>(qs.size()) * qs.stride());
    const auto pattern = child_pattern(cfg.children, cfg.child_spread);
    for (std::size_t q = 0; q < qs.size(); ++q) {
        qs.params[qs.opacity_at(q)] = 2.0;
        for (int j = 0; j < cfg.children; ++j) {
            const auto c = qs.child_at(q, j);
            qs.params.segment<3>(c) = pattern[static_cast<std::size_t>(j)];
            qs.params.segment<4>(c + 3) = quat_identity();
            qs.params.segment<3>(c + 7) = Vec3::Constant(std::log(cfg.init_scale));
            qs.params[c + 10] = 0.0;
        }
    }
    return qs;
}

inline double radical_inverse(std::uint64_t i, std::uint64_t base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

/// Halton points (bases 2, 3, 5) over the grid box with a seeded
/// Cranley-Patterson shift.
inline std::vector<Vec3> halton_anchors(const GridSpec& grid, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 shift(u(rng), u(rng), u(rng));
    const Vec3 ext = grid.extent();
    std::vector<Vec3> out;
    const std::uint64_t bases[3] = {2, 3, 5};
    for (std::size_t i = 0; i < count; ++i) {
        Vec3 p;
        for (int k = 0; k < 3; ++k) {
            const double h = radical_inverse(i + 1, bases[k]) + shift[k];
            p[k] = grid.origin[k] + (h - std::floor(h)) * ext[k];
        }
        out.push_back(p);
    }
    return out;
}

struct DecodedScene {
    std::vector<SemanticGaussian> gaussians;  // query-major, children consecutive
    std::vector<Vec3> colors;
};

inline DecodedScene decode(const QuerySet& qs, double min_scale = 0.0) {
    DecodedScene out;
    out.gaussians.reserve(qs.size() * static_cast<std::size_t>(qs.children));
    for (std::size_t q = 0; q < qs.size(); ++q) {
        const Vec3 center = qs.anchors[q] + qs.offset(q);
        const double qa = qs.query_opacity(q);
        const VecX e = qs.class_probs(q);
        const Vec3 col = qs.color(q);
        for (int j = 0; j < qs.children; ++j) {
            const auto c = qs.child_at(q, j);
            SemanticGaussian g;
            g.position = center + qs.params.segment<3>(c);
            g.rotation = quat_normalized(qs.params.segment<4>(c + 3));
            g.scale = qs.params.segment<3>(c + 7).array().exp().max(min_scale);
            g.opacity = clamp_opacity(qa * sigmoid(qs.params[c + 10]));
            g.classes = e;
            g.velocity = qs.velocity(q);
            out.gaussians.push_back(std::move(g));
            out.colors.push_back(col);
        }
    }
    return out;
}

/// Per-entry base learning rates: geometry entries get lr_geometry, logits
/// get lr_logits.
inline VecX learning_rates(const QuerySet& qs, const OptimizerConfig& cfg) {
    VecX lr = VecX::Constant(qs.params.size(), cfg.lr_geometry);
    for (std::size_t q = 0; q < qs.size(); ++q) {
        lr[qs.opacity_at(q)] = cfg.lr_logits;
        lr.segment(qs.classes_at(q), qs.classes + 3).setConstant(cfg.lr_logits);
        for (int j = 0; j < qs.children; ++j) lr[qs.child_at(q, j) + 10] = cfg.lr_logits;
    }
    return lr;
}

/// Keeps parameters in their valid region after a step: unit child
/// rotations, bounded log-scales and logits.
inline void project(QuerySet& qs, const QueryConfig& cfg) {
    const double lo = std::log(cfg.min_scale), hi = std::log(cfg.max_scale);
    constexpr double kLogitBound = 15.0;
    for (std::size_t q = 0; q < qs.size(); ++q) {
        auto& p = qs.params;
        p[qs.opacity_at(q)] = std::clamp(p[qs.opacity_at(q)], -kLogitBound, kLogitBound);
        for (Eigen::Index k = 0; k < qs.classes + 3; ++k)
            p[qs.classes_at(q) + k] = std::clamp(p[qs.classes_at(q) + k], -kLogitBound, kLogitBound);
        for (int j = 0; j < qs.children; ++j) {
            const auto c = qs.child_at(q, j);
            const Vec4 r = p.segment<4>(c + 3);
            p.segment<4>(c + 3) = r.norm() > kMinQuatNorm ? Vec4(r / r.norm()) : quat_identity();
            for (int k = 0; k < 3; ++k) p[c + 7 + k] = std::clamp(p[c + 7 + k], lo, hi);
            p[c + 10] = std::clamp(p[c + 10], -kLogitBound, kLogitBound);
        }
    }
}

/// Collects per-Gaussian gradients (in decode order) into the flat
/// parameter gradient.
class QueryGradient {
public:
    explicit QueryGradient(const QuerySet& qs)
        : qs_(qs), flat_(VecX::Zero(qs.params.size())), class_adj_(qs.size(), VecX::Zero(qs.classes)),
          color_adj_(qs.size(), Vec3::Zero()) {}

    /// Adds w * g for Gaussian i. Uses the constrained opacity and class
    /// adjoints (g.opacity, g.classes), not g's own logit terms.
    void add(std::size_t i, const GaussianGradient& g, double w = 1.0) {
        const std::size_t q = i / static_cast<std::size_t>(qs_.children);
        const int j = static_cast<int>(i % static_cast<std::size_t>(qs_.children));
        const auto c = qs_.child_at(q, j);
        flat_.segment<3>(qs_.offset_at(q)) += w * g.position;
        flat_.segment<3>(c) += w * g.position;
        flat_.segment<3>(qs_.velocity_at(q)) += w * g.velocity;
        const Vec4 raw = qs_.params.segment<4>(c + 3);
        flat_.segment<4>(c + 3) += w * g.rotation / raw.norm();
        flat_.segment<3>(c + 7) += w * g.log_scale;
        const double sq = qs_.query_opacity(q), sc = sigmoid(qs_.params[c + 10]);
        flat_[qs_.opacity_at(q)] += w * g.opacity * sc * sq * (1.0 - sq);
        flat_[c + 10] += w * g.opacity * sq * sc * (1.0 - sc);
        if (g.classes.size()) class_adj_[q] += w * g.classes;
    }

    void add_color(std::size_t i, const Vec3& dcolor, double w = 1.0) {
        color_adj_[i / static_cast<std::size_t>(qs_.children)] += w * dcolor;
    }

    void add_offset(std::size_t q, const Vec3& d, double w = 1.0) { flat_.segment<3>(qs_.offset_at(q)) += w * d; }

    VecX finish() const {
        VecX out = flat_;
        for (std::size_t q = 0; q < qs_.size(); ++q) {
            out.segment(qs_.classes_at(q), qs_.classes) += softmax_vjp(qs_.class_probs(q), class_adj_[q]);
            const Vec3 col = qs_.color(q);
            out.segment<3>(qs_.colors_at(q)) += color_adj_[q].cwiseProduct(col.cwiseProduct(Vec3::Ones() - col));
        }
        return out;
    }

private:
    const QuerySet& qs_;
    VecX flat_;
    std::vector<VecX> class_adj_;
    std::vector<Vec3> color_adj_;
};

inline std::vector<SceneQuery> to_scene_queries(const QuerySet& qs, double min_scale = 0.0) {
    std::vector<SceneQuery> out;
    for (std::size_t q = 0; q < qs.size(); ++q) {
        SceneQuery s;
        s.position = qs.anchors[q];
        s.offset = qs.offset(q);
        s.opacity = qs.query_opacity(q);
        s.velocity = qs.velocity(q);
        s.classes = qs.class_probs(q);
        for (int j = 0; j < qs.children; ++j) {
            const auto c = qs.child_at(q, j);
            QueryChild ch;
            ch.offset = qs.params.segment<3>(c);
            ch.rotation = quat_normalized(qs.params.segment<4>(c + 3));
            ch.scale = qs.params.segment<3>(c + 7).array().exp().max(min_scale);
            ch.opacity = sigmoid(qs.params[c + 10]);
            s.children.push_back(ch);
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Inverse of to_scene_queries except for colors, which reset to gray.
inline QuerySet from_scene_queries(std::span<const SceneQuery> queries, int classes, int children) {
    QuerySet qs;
    qs.classes = classes;
    qs.children = children;
    qs.params = VecX::Zero(static_cast<Eigen::Index>(queries.size()) * qs.stride());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto& s = queries[q];
        if (static_cast<int>(s.children.size()) != children || s.classes.size() != classes)
            throw ShapeMismatch("query does not match the set layout");
        qs.anchors.push_back(s.position);
        qs.params.segment<3>(qs.offset_at(q)) = s.offset;
        qs.params[qs.opacity_at(q)] = logit(clamp_opacity(s.opacity));
        qs.params.segment<3>(qs.velocity_at(q)) = s.velocity;
        qs.params.segment(qs.classes_at(q), classes) = s.classes.array().max(1e-12).log().matrix();
        for (int j = 0; j < children; ++j) {
            const auto c = qs.child_at(q, j);
            const auto& ch = s.children[static_cast<std::size_t>(j)];
            qs.params.segment<3>(c) = ch.offset;
            qs.params.segment<4>(c + 3) = ch.rotation;
            qs.params.segment<3>(c + 7) = ch.scale.array().log();
            qs.params[c + 10] = logit(clamp_opacity(ch.opacity));
        }
    }
    return qs;
}

inline QuerySet concat(const QuerySet& a, const QuerySet& b) {
    if (a.size() == 0) return b;
    if (b.size() == 0) return a;
    if (a.classes != b.classes || a.children != b.children) throw ShapeMismatch("query layouts differ");
    QuerySet out = a;
    out.anchors.insert(out.anchors.end(), b.anchors.begin(), b.anchors.end());
    out.params.resize(a.params.size() + b.params.size());
    out.params << a.params, b.params;
    return out;
}

inline nlohmann::json to_json(const QuerySet& qs) {
    const auto vec = [](const auto& v) {
        nlohmann::json a = nlohmann::json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
        return a;
    };
    nlohmann::json qj = nlohmann::json::array();
    for (std::size_t q = 0; q < qs.size(); ++q) {
        nlohmann::json children = nlohmann::json::array();
        for (int j = 0; j < qs.children; ++j) {
            const auto c = qs.child_at(q, j);
            children.push_back({{"offset", vec(qs.params.segment<3>(c))},
                                {"rotation", vec(qs.params.segment<4>(c + 3))},
                                {"log_scale", vec(qs.params.segment<3>(c + 7))},
                                {"opacity_logit", qs.params[c + 10]}});
        }
        qj.push_back({{"anchor", vec(qs.anchors[q])},
                      {"offset", vec(qs.offset(q))},
                      {"opacity_logit", qs.params[qs.opacity_at(q)]},
                      {"velocity", vec(qs.velocity(q))},
                      {"class_logits", vec(qs.params.segment(qs.classes_at(q), qs.classes))},
                      {"color_logits", vec(qs.params.segment<3>(qs.colors_at(q)))},
                      {"children", children}});
    }
    return {{"classes", qs.classes}, {"children", qs.children}, {"queries", qj}};
}

}  // namespace semocc
