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

// Independent brute-force reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "semocc/core/gaussian.hpp"
#include "semocc/core/grid.hpp"
#include "semocc/propagation.hpp"

namespace oracle {

using semocc::Mat3;
using semocc::Vec3;
using semocc::Vec4;
using semocc::VecX;

inline Mat3 rot(const Vec4& q_raw) {
    const Vec4 q = q_raw / q_raw.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

inline Mat3 sigma(const semocc::SemanticGaussian& g) {
    const Mat3 R = rot(g.rotation);
    Mat3 S = Mat3::Zero();
    for (int k = 0; k < 3; ++k) S(k, k) = g.scale[k] * g.scale[k];
    return R * S * R.transpose();
}

inline bool in_box(const Vec3& x, const semocc::SemanticGaussian& g, double cutoff) {
    const Vec3 local = rot(g.rotation).transpose() * (x - g.position);
    for (int k = 0; k < 3; ++k)
        if (std::abs(local[k]) > cutoff * g.scale[k]) return false;
    return true;
}

/// All-pairs splat in double: every voxel visits every Gaussian and applies
/// the oriented-box cutoff itself.
inline std::vector<double> splat(const std::vector<semocc::SemanticGaussian>& gs, const semocc::GridSpec& spec,
                                 double cutoff, bool opacity_weighted, int C, double floor = 1e-12) {
    std::vector<Mat3> P;
    std::vector<double> norm;
    for (const auto& g : gs) {
        const Mat3 S = sigma(g);
        P.push_back(S.inverse());
        norm.push_back(1.0 / (std::pow(2 * M_PI, 1.5) * std::sqrt(S.determinant())));
    }
    std::vector<double> out(spec.voxel_count() * static_cast<std::size_t>(C + 1));
    for (std::size_t v = 0; v < spec.voxel_count(); ++v) {
        const Vec3 x = spec.center(v);
        double empty = 1.0, W = 0.0;
        VecX num = VecX::Zero(C);
        for (std::size_t i = 0; i < gs.size(); ++i) {
            if (!in_box(x, gs[i], cutoff)) continue;
            const Vec3 d = x - gs[i].position;
            const double r = std::exp(-0.5 * d.dot(P[i] * d));
            empty *= 1.0 - (opacity_weighted ? gs[i].opacity * r : r);
            const double w = gs[i].opacity * norm[i] * r;
            W += w;
            num += w * gs[i].classes;
        }
        const double a = 1.0 - empty;
        for (int c = 0; c < C; ++c) out[v * (C + 1) + c] = a * (W < floor ? 1.0 / C : num[c] / W);
        out[v * (C + 1) + C] = empty;
    }
    return out;
}

struct Camera {
    double fx, fy, cx, cy;
    int w, h;
    Mat3 R;  // camera-to-world
    Vec3 t;
};

struct Pixel {
    double depth = 0, alpha = 0;
    Vec3 rgb = Vec3::Zero();
};

/// Per-pixel brute force: peak response of every Gaussian along the ray,
/// drop below the floor or behind the near plane, sort by depth, composite.
inline std::vector<Pixel> render(const std::vector<semocc::SemanticGaussian>& gs, const std::vector<Vec3>& colors,
                                 const Camera& cam, double near_clip, double floor, double alpha_floor) {
    std::vector<Pixel> out;
    for (int v = 0; v < cam.h; ++v)
        for (int u = 0; u < cam.w; ++u) {
            const Vec3 d = (cam.R * Vec3((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0)).normalized();
            struct Hit {
                double t, w;
                std::size_t id;
            };
            std::vector<Hit> hits;
            for (std::size_t i = 0; i < gs.size(); ++i) {
                const Mat3 P = sigma(gs[i]).inverse();
                // minimize (o + t d - m)^T P (o + t d - m) over t
                const Vec3 u0 = cam.t - gs[i].position;
                const double t = -d.dot(P * u0) / d.dot(P * d);
                const Vec3 y = u0 + t * d;
                const double w = gs[i].opacity * std::exp(-0.5 * y.dot(P * y));
                if (w < floor || t <= near_clip) continue;
                hits.push_back({t, w, i});
            }
            std::sort(hits.begin(), hits.end(),
                      [](const Hit& a, const Hit& b) { return a.t != b.t ? a.t < b.t : a.id < b.id; });
            double T = 1.0, num = 0.0;
            Vec3 c = Vec3::Zero();
            for (const auto& h : hits) {
                num += T * h.w * h.t;
                if (!colors.empty()) c += T * h.w * colors[h.id];
                T *= 1.0 - h.w;
            }
            Pixel p;
            p.alpha = 1.0 - T;
            p.depth = num / std::max(p.alpha, alpha_floor);
            p.rgb = c;
            out.push_back(p);
        }
    return out;
}

/// Central difference of f at x along every coordinate.
inline VecX central_diff(const std::function<double(const VecX&)>& f, const VecX& x, double h) {
    VecX g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        VecX a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2 * h);
    }
    return g;
}

/// |a - n| <= max(abs_floor, rel * max(|a|, |n|)) per entry; returns the worst ratio (<= 1 passes).
inline double grad_mismatch(const VecX& analytic, const VecX& numeric, double rel = 1e-3, double abs_floor = 1e-5) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double tol = std::max(abs_floor, rel * std::max(std::abs(analytic[i]), std::abs(numeric[i])));
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / tol);
    }
    return worst;
}

/// Raw parameters of one Gaussian flattened: position 3, rotation 4, log-scale 3, opacity logit 1, class logits C.
inline VecX flatten(const semocc::GaussianParams& p) {
    VecX x(11 + p.class_logits.size());
    x << p.position, p.rotation, p.log_scale, p.opacity_logit, p.class_logits;
    return x;
}

inline semocc::GaussianParams unflatten(const VecX& x, const semocc::GaussianParams& like) {
    semocc::GaussianParams p = like;
    p.position = x.segment<3>(0);
    p.rotation = x.segment<4>(3);
    p.log_scale = x.segment<3>(7);
    p.opacity_logit = x[10];
    p.class_logits = x.tail(x.size() - 11);
    return p;
}

/// Greedy max-min selection by exhaustive search (plain distances).
inline std::vector<std::size_t> fps(const std::vector<Vec3>& pts, std::size_t k) {
    std::vector<std::size_t> sel{0};
    while (sel.size() < k) {
        std::size_t best = 0;
        double best_d = -1;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (std::find(sel.begin(), sel.end(), i) != sel.end()) continue;
            double d = INFINITY;
            for (auto s : sel) d = std::min(d, (pts[i] - pts[s]).norm());
            if (d > best_d) {
                best_d = d;
                best = i;
            }
        }
        sel.push_back(best);
    }
    return sel;
}

struct OracleHit {
    int label;
    double depth;
};

// Marches the ray in 1 mm steps and reports the first sample inside an occupied voxel.
inline std::optional<OracleHit> march(const semocc::VoxelGrid& g, const Vec3& o, const Vec3& d, double t_max = 20.0) {
    for (double t = 0; t <= t_max; t += 1e-3) {
        const Vec3 x = o + t * d;
        const Vec3 rel = (x - g.spec.origin).cwiseQuotient(g.spec.voxel_size);
        const int i = static_cast<int>(std::floor(rel.x())), j = static_cast<int>(std::floor(rel.y())),
                  k = static_cast<int>(std::floor(rel.z()));
        if (!g.spec.contains(i, j, k)) continue;
        const auto v = g.spec.linear(i, j, k);
        if (g.occupied(v)) return OracleHit{g.labels[v], t};
    }
    return std::nullopt;
}

// Per-threshold mean class IoU from oracle hits, tallied independently.
inline double ray_miou(const std::vector<std::optional<OracleHit>>& ph, const std::vector<std::optional<OracleHit>>& gh,
                     int C, double tau) {
    std::map<int, std::array<int, 3>> c;  // tp fp fn
    for (std::size_t r = 0; r < ph.size(); ++r) {
        const auto& p = ph[r];
        const auto& g = gh[r];
        if (p && g && p->label == g->label && std::abs(p->depth - g->depth) <= tau) {
            ++c[p->label][0];
            continue;
        }
        if (p) ++c[p->label][1];
        if (g) ++c[g->label][2];
    }
    double sum = 0;
    int n = 0;
    bool fp = false;
    for (int k = 0; k < C; ++k) {
        const auto& t = c[k];
        fp = fp || t[1] > 0;
        if (t[0] + t[2] == 0) continue;
        sum += double(t[0]) / (t[0] + t[1] + t[2]);
        ++n;
    }
    return n ? sum / n : (fp ? 0.0 : 1.0);
}

// Repeatedly take the most opaque unvisited query (lowest index on ties) and
// keep it when it is at least delta away from everything kept so far.
inline std::vector<std::size_t> greedy_select(const std::vector<semocc::SceneQuery>& qs, std::size_t k, double delta) {
    std::vector<bool> seen(qs.size(), false);
    std::vector<std::size_t> kept;
    for (std::size_t round = 0; round < qs.size() && kept.size() < k; ++round) {
        std::size_t best = qs.size();
        for (std::size_t i = 0; i < qs.size(); ++i)
            if (!seen[i] && (best == qs.size() || qs[i].opacity > qs[best].opacity)) best = i;
        seen[best] = true;
        bool ok = true;
        for (auto j : kept) ok = ok && (qs[best].anchor() - qs[j].anchor()).norm() >= delta;
        if (ok) kept.push_back(best);
    }
    return kept;
}

}  // namespace oracle
