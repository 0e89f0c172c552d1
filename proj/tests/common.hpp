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

#include <random>
#include <vector>

#include "oracles.hpp"
#include "semocc/metrics.hpp"
#include "semocc/random_scene.hpp"
#include "semocc/rendering.hpp"
#include "semocc/splatting.hpp"

namespace testing_support {

struct SmallScene {
    std::vector<semocc::SemanticGaussian> gaussians;
    semocc::GridSpec spec;
    int classes = 3;
};

/// Up to `max_gaussians` Gaussians in a grid of up to `max_dim`^3 voxels.
inline SmallScene small_scene(std::uint64_t seed, int max_gaussians = 50, int max_dim = 16) {
    std::mt19937_64 rng(seed * 7919 + 13);
    SmallScene s;
    std::uniform_int_distribution<int> dim(2, max_dim), count(1, max_gaussians), classes(1, 5);
    s.spec.dims = {dim(rng), dim(rng), dim(rng)};
    s.spec.voxel_size = semocc::Vec3::Constant(0.25 + 0.25 * std::uniform_real_distribution<double>(0, 1)(rng));
    s.spec.origin = semocc::Vec3(-1.0, 0.5, -0.25);
    s.classes = classes(rng);
    semocc::RandomSceneSpec rs;
    rs.gaussian_count = static_cast<std::size_t>(count(rng));
    rs.grid = s.spec;
    rs.class_count = s.classes;
    rs.seed = seed;
    s.gaussians = semocc::random_gaussians(rs);
    return s;
}

using namespace semocc;

inline double weighted_sum(const FieldGradient& up, const basic_occupancy_field<double>& f) {
    double s = 0;
    for (std::size_t i = 0; i < f.data.size(); ++i) s += up.data[i] * f.data[i];
    return s;
}

inline VecX flatten_grad(const GaussianGradient& g) {
    VecX x(11 + g.class_logits.size());
    x << g.position, g.rotation, g.log_scale, g.opacity_logit, g.class_logits;
    return x;
}

inline GridSpec cube_spec(int n, double voxel = 0.5) {
    GridSpec s;
    s.dims = {n, n, n};
    s.voxel_size = Vec3::Constant(voxel);
    s.origin = Vec3::Zero();
    return s;
}

inline VoxelGrid random_grid(const GridSpec& spec, int C, double fill, std::mt19937_64& rng) {
    VoxelGrid g(spec, C);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> cls(0, C - 1);
    for (auto& l : g.labels)
        if (u(rng) < fill) l = static_cast<std::uint8_t>(cls(rng));
    return g;
}

inline RaySet rays_from(const Vec3& origin, int count, std::mt19937_64& rng) {
    RaySet rs;
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < count; ++i) {
        rs.origins.push_back(origin);
        rs.directions.push_back(Vec3(n(rng), n(rng), n(rng)).normalized());
    }
    return rs;
}

inline std::vector<SceneQuery> random_queries(std::size_t n, std::mt19937_64& rng, double extent = 5.0, bool coarse = false) {
    std::uniform_real_distribution<double> u(-extent, extent), a(0, 1);
    std::vector<SceneQuery> qs(n);
    for (auto& q : qs) {
        q.position = Vec3(u(rng), u(rng), 0.3 * u(rng));
        q.offset = Vec3(0.1 * u(rng), 0, 0);
        // Coarse opacities force ties so the index tie-break is exercised.
        q.opacity = coarse ? std::floor(4 * a(rng)) / 4 : a(rng);
        q.velocity = Vec3(a(rng), 0, 0);
        q.classes = VecX::Constant(2, 0.5);
        q.children.resize(2);
        q.children[0].offset = Vec3(0.2, 0, 0);
        q.children[1].rotation = quat_from_axis_angle(Vec3::UnitZ(), 0.3);
    }
    return qs;
}

inline CameraModel small_camera(const Pose& pose = {}) {
    CameraModel cam;
    cam.width = 9;
    cam.height = 7;
    cam.fx = cam.fy = 6.0;
    cam.cx = 4.0;
    cam.cy = 3.0;
    cam.pose = pose;
    return cam;
}

inline oracle::Camera to_oracle(const CameraModel& c) {
    return {c.fx, c.fy, c.cx, c.cy, c.width, c.height, c.pose.matrix(), c.pose.translation};
}

inline RenderConfig fine_config() {
    RenderConfig cfg;
    cfg.response_floor = 1e-7;
    return cfg;
}

inline SemanticGaussian iso(const Vec3& at, double opacity, double scale = 0.3) {
    SemanticGaussian g;
    g.position = at;
    g.scale = Vec3::Constant(scale);
    g.opacity = opacity;
    g.classes = VecX::Ones(1);
    return g;
}

// Gaussians spread in front of a camera at `pose`, all inside its frustum.
inline std::vector<SemanticGaussian> frontal_set(std::size_t n, std::uint64_t seed, const Pose& pose = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<SemanticGaussian> gs(n);
    for (auto& g : gs) {
        const Vec3 local(1.2 * (u(rng) - 0.5), 0.9 * (u(rng) - 0.5), 3.0 + 4.0 * u(rng));
        g.position = pose.apply(local);
        g.rotation = random_unit_quaternion(rng);
        g.scale = Vec3(0.3 + 0.4 * u(rng), 0.3 + 0.4 * u(rng), 0.3 + 0.4 * u(rng));
        g.opacity = 0.3 + 0.6 * u(rng);
        g.classes = VecX::Ones(1);
        g.velocity = Vec3(u(rng) - 0.5, u(rng) - 0.5, 0.2 * (u(rng) - 0.5));
    }
    return gs;
}

inline std::vector<Vec3> random_colors(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Vec3> c(n);
    for (auto& v : c) v = Vec3(u(rng), u(rng), u(rng));
    return c;
}

struct Upstream {
    Image depth, alpha, rgb;
};

inline Upstream random_upstream_images(const CameraModel& cam, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1, 1);
    Upstream up{Image(cam.width, cam.height, 1), Image(cam.width, cam.height, 1), Image(cam.width, cam.height, 3)};
    for (auto* img : {&up.depth, &up.alpha, &up.rgb})
        for (auto& v : img->data) v = u(rng);
    return up;
}

inline double oracle_loss(const std::vector<SemanticGaussian>& gs, const std::vector<Vec3>& colors, const CameraModel& cam,
                   const RenderConfig& cfg, const Upstream& up) {
    const auto px = oracle::render(gs, colors, to_oracle(cam), cfg.near_clip, cfg.response_floor, cfg.alpha_floor);
    double s = 0;
    for (std::size_t p = 0; p < px.size(); ++p) {
        s += up.depth.data[p] * px[p].depth + up.alpha.data[p] * px[p].alpha;
        for (int k = 0; k < 3; ++k) s += up.rgb.data[3 * p + static_cast<std::size_t>(k)] * px[p].rgb[k];
    }
    return s;
}

inline GaussianGradient chain(const SemanticGaussian& g, const GaussianAdjoint& a) {
    GaussianGradient out;
    chain_geometry(g, quat_to_matrix(g.rotation), a.mean, a.precision, a.opacity, a.log_norm, out);
    return out;
}

inline VecX geometry_vector(const GaussianGradient& g) {
    VecX x(11);
    x << g.position, g.rotation, g.log_scale, g.opacity_logit;
    return x;
}

inline Pose tilted_pose() {
    Pose p;
    p.rotation = quat_from_axis_angle(Vec3(0.3, 1.0, -0.2), 0.4);
    p.translation = Vec3(0.5, -1.0, 0.25);
    return p;
}

}  // namespace testing_support
