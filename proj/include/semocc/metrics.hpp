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
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "semocc/core/grid.hpp"
#include "semocc/core/parallel.hpp"

namespace semocc {

/// Per-class and binary (nonempty) confusion counts. Additive across frames.
struct ConfusionCounts {
    std::vector<std::uint64_t> tp, fp, fn;
    std::uint64_t occ_tp = 0, occ_fp = 0, occ_fn = 0;

    ConfusionCounts() = default;
    explicit ConfusionCounts(int classes) : tp(classes, 0), fp(classes, 0), fn(classes, 0) {}

    int class_count() const { return static_cast<int>(tp.size()); }

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        if (o.class_count() != class_count()) throw ShapeMismatch("class counts differ");
        for (int c = 0; c < class_count(); ++c) {
            tp[c] += o.tp[c];
            fp[c] += o.fp[c];
            fn[c] += o.fn[c];
        }
        occ_tp += o.occ_tp;
        occ_fp += o.occ_fp;
        occ_fn += o.occ_fn;
        return *this;
    }
    bool operator==(const ConfusionCounts&) const = default;
};

struct IouResult {
    double iou = 0;
    double miou = 0;
    std::vector<std::optional<double>> per_class;  // nullopt for classes absent from gt
};

inline double ratio_or(std::uint64_t num, std::uint64_t den, double fallback) {
    return den ? static_cast<double>(num) / static_cast<double>(den) : fallback;
}

/// Mean over classes present in the ground truth (tp + fn > 0). With no such
/// class the score is 1 if nothing was predicted either, else 0.
inline IouResult summarize(const ConfusionCounts& c) {
    IouResult r;
    r.iou = ratio_or(c.occ_tp, c.occ_tp + c.occ_fp + c.occ_fn, 1.0);
    double sum = 0;
    int present = 0;
    bool any_fp = false;
    r.per_class.resize(c.class_count());
    for (int k = 0; k < c.class_count(); ++k) {
        any_fp = any_fp || c.fp[k] > 0;
        if (c.tp[k] + c.fn[k] == 0) continue;
        const double v = ratio_or(c.tp[k], c.tp[k] + c.fp[k] + c.fn[k], 0.0);
        r.per_class[k] = v;
        sum += v;
        ++present;
    }
    r.miou = present ? sum / present : (any_fp ? 0.0 : 1.0);
    return r;
}

inline void check_aligned(const VoxelGrid& pred, const VoxelGrid& gt) {
    if (pred.spec.dims != gt.spec.dims || pred.class_count != gt.class_count ||
        pred.labels.size() != gt.labels.size())
        throw ShapeMismatch("prediction and ground truth grids differ in shape");
}

inline ConfusionCounts voxel_counts(const VoxelGrid& pred, const VoxelGrid& gt) {
    check_aligned(pred, gt);
    ConfusionCounts c(gt.class_count);
    const auto empty = gt.empty_label();
    for (std::size_t v = 0; v < gt.labels.size(); ++v) {
        const auto p = pred.labels[v], g = gt.labels[v];
        const bool po = p != empty, go = g != empty;
        if (po && go) ++c.occ_tp;
        if (po && !go) ++c.occ_fp;
        if (!po && go) ++c.occ_fn;
        if (po && go && p == g) {
            ++c.tp[p];
        } else {
            if (po) ++c.fp[p];
            if (go) ++c.fn[g];
        }
    }
    return c;
}

inline IouResult iou_miou(const VoxelGrid& pred, const VoxelGrid& gt) { return summarize(voxel_counts(pred, gt)); }

// --- Ray casting -----------------------------------------------------------

struct RayHit {
    int label;
    double depth;  // distance to the entry face of the hit voxel (0 if the origin is inside it)
    std::size_t voxel;
};

/// First nonempty voxel along origin + t * direction (t >= 0), by integer
/// voxel traversal.
inline std::optional<RayHit> cast_ray(const VoxelGrid& grid, const Vec3& origin, const Vec3& direction) {
    const auto& s = grid.spec;
    const Vec3 lo = s.origin, hi = s.origin + s.extent();
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (direction[a] == 0.0) {
            if (origin[a] < lo[a] || origin[a] >= hi[a]) return std::nullopt;
            continue;
        }
        double ta = (lo[a] - origin[a]) / direction[a], tb = (hi[a] - origin[a]) / direction[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t0 <= t1)) return std::nullopt;

    const Vec3 entry = origin + t0 * direction;
    std::array<int, 3> idx{}, step{};
    std::array<double, 3> t_max{}, t_delta{};
    for (int a = 0; a < 3; ++a) {
        idx[a] = std::clamp(static_cast<int>(std::floor((entry[a] - lo[a]) / s.voxel_size[a])), 0, s.dims[a] - 1);
        if (direction[a] > 0) {
            step[a] = 1;
            t_max[a] = (lo[a] + (idx[a] + 1) * s.voxel_size[a] - origin[a]) / direction[a];
            t_delta[a] = s.voxel_size[a] / direction[a];
        } else if (direction[a] < 0) {
            step[a] = -1;
            t_max[a] = (lo[a] + idx[a] * s.voxel_size[a] - origin[a]) / direction[a];
            t_delta[a] = -s.voxel_size[a] / direction[a];
        } else {
            step[a] = 0;
            t_max[a] = t_delta[a] = std::numeric_limits<double>::infinity();
        }
    }
    double t_enter = t0;
    for (;;) {
        const std::size_t v = s.linear(idx[0], idx[1], idx[2]);
        if (grid.occupied(v)) return RayHit{grid.labels[v], t_enter, v};
        int axis = 0;
        if (t_max[1] < t_max[axis]) axis = 1;
        if (t_max[2] < t_max[axis]) axis = 2;
        t_enter = t_max[axis];
        idx[axis] += step[axis];
        if (idx[axis] < 0 || idx[axis] >= s.dims[axis]) return std::nullopt;
        t_max[axis] += t_delta[axis];
    }
}

struct RaySet {
    std::vector<Vec3> origins;
    std::vector<Vec3> directions;  // unit
    std::string source = "synthetic-lidar";

    std::size_t size() const { return origins.size(); }
};

/// Spinning-LiDAR pattern: `rings` elevation rings x `azimuths` steps from each origin.
inline RaySet synthetic_lidar_rays(std::span<const Vec3> origins, int rings = 32, int azimuths = 360,
                                   double min_elev_deg = -30.0, double max_elev_deg = 10.0) {
    RaySet rs;
    for (const auto& o : origins)
        for (int r = 0; r < rings; ++r) {
            const double el = (min_elev_deg + (max_elev_deg - min_elev_deg) * (rings > 1 ? double(r) / (rings - 1) : 0.5)) *
                              std::numbers::pi / 180.0;
            for (int a = 0; a < azimuths; ++a) {
                const double az = 2.0 * std::numbers::pi * a / azimuths;
                rs.origins.push_back(o);
                rs.directions.push_back(Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)));
            }
        }
    return rs;
}

struct RayIouResult {
    double rayiou = 0;
    std::vector<double> thresholds;
    std::vector<double> per_threshold;
    std::vector<ConfusionCounts> counts;  // one per threshold
};

inline std::vector<ConfusionCounts> ray_counts(const VoxelGrid& pred, const VoxelGrid& gt, const RaySet& rays,
                                               std::span<const double> thresholds, const Parallelism& par = {}) {
    check_aligned(pred, gt);
    std::vector<std::optional<RayHit>> ph(rays.size()), gh(rays.size());
    parallel_for(rays.size(), par, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            ph[i] = cast_ray(pred, rays.origins[i], rays.directions[i]);
            gh[i] = cast_ray(gt, rays.origins[i], rays.directions[i]);
        }
    });
    std::vector<ConfusionCounts> out(thresholds.size(), ConfusionCounts(gt.class_count));
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        auto& c = out[ti];
        for (std::size_t i = 0; i < rays.size(); ++i) {
            const auto& p = ph[i];
            const auto& g = gh[i];
            if (p && g) {
                ++c.occ_tp;
                if (p->label == g->label && std::abs(p->depth - g->depth) <= thresholds[ti]) {
                    ++c.tp[p->label];
                } else {
                    ++c.fp[p->label];
                    ++c.fn[g->label];
                }
            } else if (p) {
                ++c.occ_fp;
                ++c.fp[p->label];
            } else if (g) {
                ++c.occ_fn;
                ++c.fn[g->label];
            }
        }
    }
    return out;
}

inline RayIouResult summarize_rays(std::vector<ConfusionCounts> counts, std::span<const double> thresholds) {
    RayIouResult r;
    r.thresholds.assign(thresholds.begin(), thresholds.end());
    for (const auto& c : counts) r.per_threshold.push_back(summarize(c).miou);
    double sum = 0;
    for (double v : r.per_threshold) sum += v;
    r.rayiou = r.per_threshold.empty() ? 0.0 : sum / static_cast<double>(r.per_threshold.size());
    r.counts = std::move(counts);
    return r;
}

inline const std::vector<double>& default_ray_thresholds() {
    static const std::vector<double> t{1.0, 2.0, 4.0};
    return t;
}

inline RayIouResult rayiou(const VoxelGrid& pred, const VoxelGrid& gt, const RaySet& rays,
                           std::span<const double> thresholds = default_ray_thresholds(),
                           const Parallelism& par = {}) {
    if (rays.size() == 0) throw EmptyRaySet("no rays to cast");
    return summarize_rays(ray_counts(pred, gt, rays, thresholds, par), thresholds);
}

/// JSON summary: {iou, miou, per_class, rayiou, rayiou_per_threshold}.
inline nlohmann::json metrics_json(const IouResult& vox, const RayIouResult& ray) {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < vox.per_class.size(); ++c)
        if (vox.per_class[c]) per_class[std::to_string(c)] = *vox.per_class[c];
    nlohmann::json per_thr = nlohmann::json::object();
    for (std::size_t i = 0; i < ray.thresholds.size(); ++i) {
        std::ostringstream key;
        key << ray.thresholds[i] << "m";
        per_thr[key.str()] = ray.per_threshold[i];
    }
    return {{"iou", vox.iou}, {"miou", vox.miou}, {"per_class", per_class}, {"rayiou", ray.rayiou},
            {"rayiou_per_threshold", per_thr}};
}

}  // namespace semocc
