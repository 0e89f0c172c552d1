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

// Per-ray depth / color rendering of Gaussians.
//
// Along a ray o + t d each Gaussian contributes once, at the parameter t*
// that maximizes its response, with weight w = a exp(-q(t*)/2). Surviving
// contributions (w >= response_floor, t* > near_clip) are sorted front to
// back and alpha-composited:
//     T_i = prod_{j<i} (1 - w_j),  alpha = 1 - prod_i (1 - w_i),
//     depth = sum_i T_i w_i t*_i / max(alpha, alpha_floor),
//     rgb   = sum_i T_i w_i c_i   (black background).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "semocc/core/adjoint.hpp"
#include "semocc/core/gaussian.hpp"
#include "semocc/core/image.hpp"
#include "semocc/core/parallel.hpp"
#include "semocc/splatting.hpp"

namespace semocc {

/// Pinhole camera. Camera axes: x right, y down, z forward. Pixel (u, v)
/// looks along ((u - cx) / fx, (v - cy) / fy, 1).
struct CameraModel {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    int width = 1, height = 1;
    Pose pose;  // camera-to-world

    void validate() const {
        if (!(fx > 0 && fy > 0)) throw InvalidArgument("focal lengths must be positive");
        if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
            throw InvalidArgument("principal point outside the image");
    }

    static CameraModel from_fov(int width, int height, double hfov_rad, const Pose& pose) {
        CameraModel c;
        c.width = width;
        c.height = height;
        c.fx = c.fy = 0.5 * width / std::tan(0.5 * hfov_rad);
        c.cx = 0.5 * width;
        c.cy = 0.5 * height;
        c.pose = pose;
        return c;
    }
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit
};

/// Row-major rays, index v * width + u.
inline std::vector<Ray> generate_rays(const CameraModel& cam) {
    cam.validate();
    const Mat3 R = cam.pose.matrix();
    std::vector<Ray> rays;
    rays.reserve(static_cast<std::size_t>(cam.width) * cam.height);
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            const Vec3 dc((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
            rays.push_back({cam.pose.translation, (R * dc).normalized()});
        }
    return rays;
}

/// Pixel coordinates and camera-frame depth of a world point, if it is in
/// front of the camera.
inline std::optional<Vec3> project(const CameraModel& cam, const Vec3& world) {
    const Vec3 pc = cam.pose.matrix().transpose() * (world - cam.pose.translation);
    if (!(pc.z() > 0)) return std::nullopt;
    return Vec3(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy, pc.z());
}

struct RenderConfig {
    double near_clip = 0.1;
    double response_floor = 1e-3;
    double alpha_floor = 1e-6;
    double valid_alpha = 0.05;
    Parallelism parallel;
};

struct RenderResult {
    Image depth;                  // 1 channel; meaningful where valid
    Image alpha;                  // 1 channel
    Image rgb;                    // 3 channels, empty when no colors were given
    std::vector<std::uint8_t> valid;  // alpha >= valid_alpha
};

struct RenderUpstream {
    const Image* depth = nullptr;
    const Image* alpha = nullptr;
    const Image* rgb = nullptr;
};

namespace detail {

struct RayGaussian {
    Vec3 mean;
    Mat3 precision;
    double opacity;
    double cull_radius;  // beyond this distance from the mean, w < response_floor
};

inline std::vector<RayGaussian> prepare_for_rays(std::span<const SemanticGaussian> gaussians,
                                                 const RenderConfig& cfg) {
    std::vector<RayGaussian> out;
    out.reserve(gaussians.size());
    for (const auto& g : gaussians) {
        const auto cov = covariance_from(g);
        const double ratio = g.opacity / cfg.response_floor;
        const double k = ratio > 1.0 ? std::sqrt(2.0 * std::log(ratio)) : 0.0;
        out.push_back({g.position, cov.inverse, g.opacity, 1.001 * k * g.scale.maxCoeff()});
    }
    return out;
}

/// Inclusive pixel bounds that contain every ray passing within
/// cull_radius of the mean; nullopt when no pixel can see it.
inline std::optional<std::array<int, 4>> screen_bounds(const RayGaussian& g, const CameraModel& cam,
                                                       const Mat3& cam_R) {
    if (g.cull_radius <= 0) return std::nullopt;
    const Vec3 pc = cam_R.transpose() * (g.mean - cam.pose.translation);
    const double r = g.cull_radius;
    if (pc.z() + r <= 0) return std::nullopt;
    if (pc.z() - r <= 1e-6) return std::array<int, 4>{0, cam.width - 1, 0, cam.height - 1};
    auto range = [&](double lateral, double f, double c, int size) -> std::optional<std::array<int, 2>> {
        const double theta = std::atan2(lateral, pc.z());
        const double beta = std::asin(std::min(1.0, r / std::hypot(lateral, pc.z())));
        const double lo = f * std::tan(theta - beta) + c;
        const double hi = f * std::tan(theta + beta) + c;
        const int a = static_cast<int>(std::max(0.0, std::floor(lo)));
        const int b = static_cast<int>(std::min<double>(size - 1, std::ceil(hi)));
        if (hi < 0 || lo > size - 1 || a > b) return std::nullopt;
        return std::array<int, 2>{a, b};
    };
    const auto ux = range(pc.x(), cam.fx, cam.cx, cam.width);
    const auto vy = range(pc.y(), cam.fy, cam.cy, cam.height);
    if (!ux || !vy) return std::nullopt;
    return std::array<int, 4>{(*ux)[0], (*ux)[1], (*vy)[0], (*vy)[1]};
}

/// Candidate Gaussian/pixel pairs in both directions.
struct PixelCandidates {
    std::vector<std::size_t> pixel_offsets;
    std::vector<std::uint32_t> pixel_gaussians;
    std::vector<std::size_t> gaussian_offsets;
    std::vector<std::uint32_t> gaussian_pixels;
    std::vector<std::size_t> gaussian_slots;  // position of each pair in the pixel-major arrays
};

inline PixelCandidates collect_candidates(std::span<const RayGaussian> gs, const CameraModel& cam) {
    const Mat3 R = cam.pose.matrix();
    const std::size_t np = static_cast<std::size_t>(cam.width) * cam.height;
    PixelCandidates pc;
    pc.gaussian_offsets.assign(gs.size() + 1, 0);
    std::vector<std::size_t> counts(np, 0);
    for (std::size_t i = 0; i < gs.size(); ++i) {
        if (const auto b = screen_bounds(gs[i], cam, R)) {
            for (int v = (*b)[2]; v <= (*b)[3]; ++v)
                for (int u = (*b)[0]; u <= (*b)[1]; ++u) {
                    const std::size_t p = static_cast<std::size_t>(v) * cam.width + u;
                    pc.gaussian_pixels.push_back(static_cast<std::uint32_t>(p));
                    ++counts[p];
                }
        }
        pc.gaussian_offsets[i + 1] = pc.gaussian_pixels.size();
    }
    pc.pixel_offsets.assign(np + 1, 0);
    for (std::size_t p = 0; p < np; ++p) pc.pixel_offsets[p + 1] = pc.pixel_offsets[p] + counts[p];
    pc.pixel_gaussians.resize(pc.gaussian_pixels.size());
    pc.gaussian_slots.resize(pc.gaussian_pixels.size());
    std::vector<std::size_t> cursor(pc.pixel_offsets.begin(), pc.pixel_offsets.end() - 1);
    for (std::size_t i = 0; i < gs.size(); ++i)
        for (std::size_t s = pc.gaussian_offsets[i]; s < pc.gaussian_offsets[i + 1]; ++s) {
            const std::size_t slot = cursor[pc.gaussian_pixels[s]]++;
            pc.pixel_gaussians[slot] = static_cast<std::uint32_t>(i);
            pc.gaussian_slots[s] = slot;
        }
    return pc;
}

struct PeakResponse {
    double t;
    double w;
};

inline PeakResponse peak_on_ray(const RayGaussian& g, const Ray& ray) {
    const Vec3 u = ray.origin - g.mean;
    const Vec3 Pd = g.precision * ray.direction;
    const double c = ray.direction.dot(Pd);
    const double b = Pd.dot(u);
    const double t = -b / c;
    const Vec3 y = u + t * ray.direction;
    const double q = y.dot(g.precision * y);
    return {t, g.opacity * std::exp(-0.5 * q)};
}

struct Contribution {
    std::uint32_t id;
    std::size_t slot;
    double t;
    double w;
};

/// Surviving contributions along one ray, sorted by (t, id).
inline void gather_contributions(std::span<const RayGaussian> gs, const PixelCandidates& pc, std::size_t pixel,
                                 const Ray& ray, const RenderConfig& cfg, std::vector<Contribution>& out) {
    out.clear();
    for (std::size_t s = pc.pixel_offsets[pixel]; s < pc.pixel_offsets[pixel + 1]; ++s) {
        const auto id = pc.pixel_gaussians[s];
        const auto pk = peak_on_ray(gs[id], ray);
        if (pk.w < cfg.response_floor || pk.t <= cfg.near_clip) continue;
        out.push_back({id, s, pk.t, pk.w});
    }
    std::sort(out.begin(), out.end(), [](const Contribution& a, const Contribution& b) {
        return a.t != b.t ? a.t < b.t : a.id < b.id;
    });
}

inline void check_colors(std::span<const SemanticGaussian> gaussians, const std::vector<Vec3>* colors) {
    if (colors && colors->size() != gaussians.size()) throw MissingAttribute("one color per Gaussian required");
}

}  // namespace detail

inline RenderResult render(std::span<const SemanticGaussian> gaussians, const std::vector<Vec3>* colors,
                           const CameraModel& cam, const RenderConfig& cfg) {
    detail::check_colors(gaussians, colors);
    const auto rays = generate_rays(cam);
    const auto gs = detail::prepare_for_rays(gaussians, cfg);
    const auto pc = detail::collect_candidates(gs, cam);

    RenderResult out;
    out.depth = Image(cam.width, cam.height, 1);
    out.alpha = Image(cam.width, cam.height, 1);
    if (colors) out.rgb = Image(cam.width, cam.height, 3);
    out.valid.assign(rays.size(), 0);

    parallel_for(rays.size(), cfg.parallel, [&](std::size_t begin, std::size_t end) {
        std::vector<detail::Contribution> contrib;
        for (std::size_t p = begin; p < end; ++p) {
            detail::gather_contributions(gs, pc, p, rays[p], cfg, contrib);
            double T = 1.0, num = 0.0;
            Vec3 rgb = Vec3::Zero();
            for (const auto& c : contrib) {
                num += T * c.w * c.t;
                if (colors) rgb += T * c.w * (*colors)[c.id];
                T *= 1.0 - c.w;
            }
            const double alpha = 1.0 - T;
            out.alpha.data[p] = static_cast<float>(alpha);
            out.depth.data[p] = static_cast<float>(num / std::max(alpha, cfg.alpha_floor));
            out.valid[p] = alpha >= cfg.valid_alpha ? 1 : 0;
            if (colors)
                for (int k = 0; k < 3; ++k) out.rgb.data[3 * p + static_cast<std::size_t>(k)] = static_cast<float>(rgb[k]);
        }
    });
    return out;
}

inline RenderResult render_depth(std::span<const SemanticGaussian> gaussians, const CameraModel& cam,
                                 const RenderConfig& cfg) {
    return render(gaussians, nullptr, cam, cfg);
}

inline RenderResult render_rgb(std::span<const SemanticGaussian> gaussians, const std::vector<Vec3>* colors,
                               const CameraModel& cam, const RenderConfig& cfg) {
    if (!colors) throw MissingAttribute("render_rgb needs per-Gaussian colors");
    return render(gaussians, colors, cam, cfg);
}

/// Adjoints of a scalar loss with respect to each Gaussian's mean,
/// precision, opacity and color (attributes, 3-vector), given per-pixel
/// upstream gradients of depth, alpha and rgb. Pixel pass first, then one
/// worker per Gaussian over its own pixel contributions.
inline std::vector<GaussianAdjoint> render_backward(std::span<const SemanticGaussian> gaussians,
                                                    const std::vector<Vec3>* colors, const CameraModel& cam,
                                                    const RenderConfig& cfg, const RenderUpstream& up) {
    detail::check_colors(gaussians, colors);
    if (up.rgb && !colors) throw MissingAttribute("rgb upstream without colors");
    const auto rays = generate_rays(cam);
    const auto gs = detail::prepare_for_rays(gaussians, cfg);
    const auto pc = detail::collect_candidates(gs, cam);

    const std::size_t slots = pc.pixel_gaussians.size();
    std::vector<double> d_w(slots, 0.0), d_t(slots, 0.0);
    std::vector<Vec3> d_c(colors ? slots : 0, Vec3::Zero());
    std::vector<std::uint8_t> active(slots, 0);

    parallel_for(rays.size(), cfg.parallel, [&](std::size_t begin, std::size_t end) {
        std::vector<detail::Contribution> contrib;
        std::vector<double> T, Rt, Q;
        std::vector<Vec3> Rc;
        for (std::size_t p = begin; p < end; ++p) {
            const double gD = up.depth ? up.depth->data[p] : 0.0;
            const double gA = up.alpha ? up.alpha->data[p] : 0.0;
            const Vec3 gC = up.rgb ? Vec3(up.rgb->data[3 * p], up.rgb->data[3 * p + 1], up.rgb->data[3 * p + 2])
                                   : Vec3::Zero();
            if (gD == 0.0 && gA == 0.0 && gC.isZero()) continue;
            detail::gather_contributions(gs, pc, p, rays[p], cfg, contrib);
            const std::size_t n = contrib.size();
            if (n == 0) continue;
            T.assign(n + 1, 1.0);
            for (std::size_t k = 0; k < n; ++k) T[k + 1] = T[k] * (1.0 - contrib[k].w);
            double num = 0.0;
            for (std::size_t k = 0; k < n; ++k) num += T[k] * contrib[k].w * contrib[k].t;
            const double alpha = 1.0 - T[n];
            const double denom = std::max(alpha, cfg.alpha_floor);
            const bool unclamped = alpha > cfg.alpha_floor;

            // Suffix recursions: Rt_k = sum_{i>k} prod_{k<j<i}(1 - w_j) w_i t_i,
            // Q_k = prod_{j>k}(1 - w_j), Rc likewise for colors.
            Rt.assign(n, 0.0);
            Q.assign(n, 1.0);
            if (colors) Rc.assign(n, Vec3::Zero());
            for (std::size_t k = n - 1; k-- > 0;) {
                const auto& nx = contrib[k + 1];
                Rt[k] = nx.w * nx.t + (1.0 - nx.w) * Rt[k + 1];
                Q[k] = (1.0 - nx.w) * Q[k + 1];
                if (colors) Rc[k] = nx.w * (*colors)[nx.id] + (1.0 - nx.w) * Rc[k + 1];
            }
            for (std::size_t k = 0; k < n; ++k) {
                const auto& c = contrib[k];
                const double dnum = T[k] * (c.t - Rt[k]);
                const double dalpha = T[k] * Q[k];
                double dw = gD * (dnum / denom - (unclamped ? num / (alpha * alpha) * dalpha : 0.0)) + gA * dalpha;
                if (colors) dw += gC.dot(T[k] * ((*colors)[c.id] - Rc[k]));
                d_w[c.slot] = dw;
                d_t[c.slot] = gD * T[k] * c.w / denom;
                if (colors) d_c[c.slot] = gC * (T[k] * c.w);
                active[c.slot] = 1;
            }
        }
    });

    std::vector<GaussianAdjoint> adj(gaussians.size());
    parallel_for(gaussians.size(), cfg.parallel, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto& a = adj[i];
            if (colors) a.attributes = VecX::Zero(3);
            const auto& g = gs[i];
            for (std::size_t s = pc.gaussian_offsets[i]; s < pc.gaussian_offsets[i + 1]; ++s) {
                const std::size_t slot = pc.gaussian_slots[s];
                if (!active[slot]) continue;
                const Ray& ray = rays[pc.gaussian_pixels[s]];
                const Vec3 u = ray.origin - g.mean;
                const Vec3 Pd = g.precision * ray.direction;
                const double c = ray.direction.dot(Pd);
                const double t = -Pd.dot(u) / c;
                const Vec3 y = u + t * ray.direction;
                const Vec3 Py = g.precision * y;
                const double r = std::exp(-0.5 * y.dot(Py));
                const double w = g.opacity * r;
                const double dw = d_w[slot], dt = d_t[slot];
                a.mean += dw * w * Py + dt * Pd / c;
                a.precision += (-0.5 * dw * w) * (y * y.transpose()) - (dt / c) * (ray.direction * y.transpose());
                a.opacity += dw * r;
                if (colors) a.attributes += d_c[slot];
            }
        }
    });
    return adj;
}

// --- Losses ----------------------------------------------------------------

struct ImageLoss {
    double value = 0.0;
    Image grad;  // dL/dpred
};

namespace detail {

inline ImageLoss masked_mae(const Image& pred, const Image& target, std::span<const std::uint8_t> mask) {
    if (pred.width != target.width || pred.height != target.height || pred.channels != target.channels ||
        mask.size() != pred.pixel_count())
        throw ShapeMismatch("image loss shapes differ");
    std::size_t n = 0;
    for (auto m : mask) n += m ? 1 : 0;
    if (n == 0) throw EmptyMask("no valid pixels");
    const double norm = 1.0 / (static_cast<double>(n) * pred.channels);
    ImageLoss out;
    out.grad = Image(pred.width, pred.height, pred.channels);
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        for (int c = 0; c < pred.channels; ++c) {
            const std::size_t i = p * static_cast<std::size_t>(pred.channels) + static_cast<std::size_t>(c);
            const double diff = static_cast<double>(pred.data[i]) - target.data[i];
            out.value += std::abs(diff) * norm;
            out.grad.data[i] = static_cast<float>(diff > 0 ? norm : diff < 0 ? -norm : 0.0);
        }
    }
    return out;
}

}  // namespace detail

/// Masked mean absolute depth error.
inline ImageLoss depth_loss(const Image& pred, const Image& target, std::span<const std::uint8_t> valid_mask) {
    return detail::masked_mae(pred, target, valid_mask);
}

/// Masked mean absolute color error, averaged over pixels and channels.
inline ImageLoss rgb_loss(const Image& pred, const Image& target, std::span<const std::uint8_t> valid_mask) {
    return detail::masked_mae(pred, target, valid_mask);
}

// --- Warping ---------------------------------------------------------------

/// Moves Gaussians by their velocity over dt, then applies the ego change
/// (current frame -> neighbor frame). Velocities are rotated along.
inline std::vector<SemanticGaussian> warp_gaussians(std::span<const SemanticGaussian> gaussians, double dt,
                                                    const Pose& ego, double window = 0.5) {
    if (std::abs(dt) > window + 1e-12) throw InvalidArgument("warp interval exceeds the neighbor window");
    const Mat3 R = ego.matrix();
    const Vec4 q = quat_normalized(ego.rotation);
    std::vector<SemanticGaussian> out(gaussians.begin(), gaussians.end());
    for (auto& g : out) {
        g.position = R * (g.position + g.velocity * dt) + ego.translation;
        g.rotation = quat_normalized(quat_multiply(q, g.rotation));
        g.velocity = R * g.velocity;
    }
    return out;
}

/// Maps an adjoint taken w.r.t. a warped Gaussian back to the original.
inline GaussianAdjoint unwarp_adjoint(const GaussianAdjoint& warped, double dt, const Pose& ego) {
    const Mat3 R = ego.matrix();
    GaussianAdjoint a = warped;
    a.mean = R.transpose() * warped.mean;
    a.velocity = dt * a.mean + R.transpose() * warped.velocity;
    a.precision = R.transpose() * warped.precision * R;
    return a;
}

/// Same mapping for gradients already chained to raw parameters. The warped
/// rotation is q_ego * q, so its gradient pulls back through the transpose of
/// left multiplication by q_ego.
inline GaussianGradient unwarp_gradient(const GaussianGradient& warped, double dt, const Pose& ego) {
    const Mat3 R = ego.matrix();
    const Vec4 e = quat_normalized(ego.rotation);
    Eigen::Matrix4d L;
    L << e[0], -e[1], -e[2], -e[3],
         e[1], e[0], -e[3], e[2],
         e[2], e[3], e[0], -e[1],
         e[3], -e[2], e[1], e[0];
    GaussianGradient g = warped;
    g.position = R.transpose() * warped.position;
    g.velocity = dt * g.position + R.transpose() * warped.velocity;
    g.rotation = L.transpose() * warped.rotation;
    return g;
}

}  // namespace semocc
