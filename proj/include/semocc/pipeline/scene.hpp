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

// Analytic synthetic driving scenes: oriented boxes (static or moving at
// constant velocity) seen from an ego vehicle. Everything derived per frame
// (voxel labels, LiDAR points, depth and color images) is computed exactly
// from the box geometry.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "semocc/core/grid.hpp"
#include "semocc/core/image.hpp"
#include "semocc/core/io.hpp"
#include "semocc/metrics.hpp"
#include "semocc/pipeline/json_util.hpp"
#include "semocc/rendering.hpp"

namespace semocc {

inline constexpr int kSceneSchemaVersion = 1;

struct SceneBox {
    int label = 0;
    Vec3 center = Vec3::Zero();  // world, at t = 0
    Vec3 size = Vec3::Ones();    // full edge lengths
    double yaw = 0.0;            // radians about +z
    Vec3 velocity = Vec3::Zero();
    Vec3 color = Vec3::Constant(0.5);

    Vec3 center_at(double t) const { return center + velocity * t; }

    Vec3 to_local(const Vec3& world, double t) const {
        const Vec3 d = world - center_at(t);
        const double c = std::cos(yaw), s = std::sin(yaw);
        return Vec3(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
    }

    bool contains(const Vec3& world, double t) const {
        const Vec3 l = to_local(world, t);
        return std::abs(l.x()) <= 0.5 * size.x() && std::abs(l.y()) <= 0.5 * size.y() &&
               std::abs(l.z()) <= 0.5 * size.z();
    }

    /// Entry distance along a unit ray (t >= 0), if the ray hits.
    std::optional<double> intersect(const Vec3& origin, const Vec3& dir, double time) const {
        const Vec3 o = to_local(origin, time);
        const double c = std::cos(yaw), s = std::sin(yaw);
        const Vec3 d(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(), dir.z());
        double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
            const double h = 0.5 * size[a];
            if (d[a] == 0.0) {
                if (std::abs(o[a]) > h) return std::nullopt;
                continue;
            }
            double ta = (-h - o[a]) / d[a], tb = (h - o[a]) / d[a];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
        if (t0 > t1) return std::nullopt;
        return t0;
    }
};

struct CameraRig {
    int width = 48;
    int height = 32;
    double hfov_deg = 90.0;
    Vec3 position = Vec3::Zero();  // ego frame
    double yaw_deg = 0.0;
    double pitch_deg = -10.0;  // negative looks down

    /// Camera-to-ego pose; ego axes x forward, y left, z up.
    Pose pose() const {
        const double yaw = yaw_deg * std::numbers::pi / 180.0, pitch = pitch_deg * std::numbers::pi / 180.0;
        const Vec3 fwd(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch), std::sin(pitch));
        const Vec3 right = fwd.cross(Vec3::UnitZ()).normalized();
        const Vec3 down = fwd.cross(right);
        Mat3 R;
        R.col(0) = right;
        R.col(1) = down;
        R.col(2) = fwd;
        const Eigen::Quaterniond q(R);
        Pose p;
        p.rotation = Vec4(q.w(), q.x(), q.y(), q.z());
        p.translation = position;
        return p;
    }

    CameraModel model() const {
        return CameraModel::from_fov(width, height, hfov_deg * std::numbers::pi / 180.0, pose());
    }
};

/// {"dims": [nx, ny, nz], "voxel_size": meters, "origin": [x, y, z]}
inline GridSpec grid_from_json(const nlohmann::json& g, const std::string& where) {
    using namespace json_util;
    allow_keys(g, {"dims", "voxel_size", "origin"}, where);
    GridSpec spec;
    if (g.contains("dims")) {
        const auto& d = g["dims"];
        if (!d.is_array() || d.size() != 3) throw SchemaError(where + ".dims: expected 3 integers");
        for (int k = 0; k < 3; ++k) {
            if (!d[k].is_number_integer() || d[k].get<long long>() < 1 || d[k].get<long long>() > 4096)
                throw SchemaError(where + ".dims: expected 3 integers in [1, 4096]");
            spec.dims[static_cast<std::size_t>(k)] = d[k].get<int>();
        }
    }
    spec.voxel_size = Vec3::Constant(number(g, "voxel_size", 0.5, where));
    if (!(spec.voxel_size[0] > 0)) throw SchemaError(where + ".voxel_size: must be positive");
    spec.origin = vec3(g, "origin", Vec3::Zero(), where);
    return spec;
}

inline nlohmann::json grid_to_json(const GridSpec& g) {
    return {{"dims", g.dims}, {"voxel_size", g.voxel_size[0]}, {"origin", json_util::to_json(g.origin)}};
}

/// Declarative scene description (the gen-scene input).
struct SceneSpec {
    GridSpec grid;
    int class_count = 3;
    std::vector<std::string> class_names{"ground", "building", "vehicle"};
    int frames = 3;
    double frame_rate = 2.0;  // Hz
    Vec3 ego_velocity = Vec3(1.0, 0.0, 0.0);
    double ego_yaw_rate = 0.0;  // rad/s
    std::vector<SceneBox> boxes;
    Vec3 lidar_origin = Vec3::Zero();  // ego frame
    int lidar_rings = 32;
    int lidar_azimuths = 360;
    double lidar_min_elev_deg = -30.0;
    double lidar_max_elev_deg = 10.0;
    double lidar_range = 60.0;
    std::vector<CameraRig> cameras;

    static SceneSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

inline SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
    using namespace json_util;
    allow_keys(j, {"schema_version", "grid", "classes", "frames", "frame_rate", "ego", "boxes", "lidar", "cameras"},
               "scene");
    if (integer(j, "schema_version", kSceneSchemaVersion, "scene") != kSceneSchemaVersion)
        throw SchemaError("scene.schema_version: unsupported");
    SceneSpec s;
    if (j.contains("grid")) s.grid = grid_from_json(j["grid"], "scene.grid");
    if (j.contains("classes")) {
        const auto& c = j["classes"];
        if (!c.is_array() || c.empty() || c.size() > 255) throw SchemaError("scene.classes: expected 1..255 names");
        s.class_names.clear();
        for (const auto& n : c) {
            if (!n.is_string()) throw SchemaError("scene.classes: expected strings");
            s.class_names.push_back(n.get<std::string>());
        }
        s.class_count = static_cast<int>(s.class_names.size());
    }
    s.frames = static_cast<int>(integer(j, "frames", s.frames, "scene"));
    if (s.frames < 1) throw SchemaError("scene.frames: must be >= 1");
    s.frame_rate = number(j, "frame_rate", s.frame_rate, "scene");
    if (!(s.frame_rate > 0)) throw SchemaError("scene.frame_rate: must be positive");
    if (j.contains("ego")) {
        const auto& e = j["ego"];
        allow_keys(e, {"velocity", "yaw_rate"}, "scene.ego");
        s.ego_velocity = vec3(e, "velocity", s.ego_velocity, "scene.ego");
        s.ego_yaw_rate = number(e, "yaw_rate", s.ego_yaw_rate, "scene.ego");
    }
    if (j.contains("boxes")) {
        if (!j["boxes"].is_array()) throw SchemaError("scene.boxes: expected an array");
        for (const auto& b : j["boxes"]) {
            const std::string w = "scene.boxes[]";
            allow_keys(b, {"class", "center", "size", "yaw", "velocity", "color"}, w);
            SceneBox box;
            box.label = static_cast<int>(integer(b, "class", 0, w));
            if (box.label < 0 || box.label >= s.class_count) throw SchemaError(w + ".class: out of range");
            box.center = vec3(b, "center", box.center, w);
            box.size = vec3(b, "size", box.size, w);
            if (!(box.size.minCoeff() > 0)) throw SchemaError(w + ".size: must be positive");
            box.yaw = number(b, "yaw", 0.0, w);
            box.velocity = vec3(b, "velocity", box.velocity, w);
            box.color = vec3(b, "color", box.color, w);
            s.boxes.push_back(box);
        }
    }
    if (j.contains("lidar")) {
        const auto& l = j["lidar"];
        allow_keys(l, {"origin", "rings", "azimuths", "min_elev_deg", "max_elev_deg", "range"}, "scene.lidar");
        s.lidar_origin = vec3(l, "origin", s.lidar_origin, "scene.lidar");
        s.lidar_rings = static_cast<int>(integer(l, "rings", s.lidar_rings, "scene.lidar"));
        s.lidar_azimuths = static_cast<int>(integer(l, "azimuths", s.lidar_azimuths, "scene.lidar"));
        s.lidar_min_elev_deg = number(l, "min_elev_deg", s.lidar_min_elev_deg, "scene.lidar");
        s.lidar_max_elev_deg = number(l, "max_elev_deg", s.lidar_max_elev_deg, "scene.lidar");
        s.lidar_range = number(l, "range", s.lidar_range, "scene.lidar");
        if (s.lidar_rings < 1 || s.lidar_azimuths < 1) throw SchemaError("scene.lidar: rings and azimuths >= 1");
    }
    if (j.contains("cameras")) {
        if (!j["cameras"].is_array()) throw SchemaError("scene.cameras: expected an array");
        for (const auto& c : j["cameras"]) {
            const std::string w = "scene.cameras[]";
            allow_keys(c, {"width", "height", "hfov_deg", "position", "yaw_deg", "pitch_deg"}, w);
            CameraRig cam;
            cam.width = static_cast<int>(integer(c, "width", cam.width, w));
            cam.height = static_cast<int>(integer(c, "height", cam.height, w));
            cam.hfov_deg = number(c, "hfov_deg", cam.hfov_deg, w);
            cam.position = vec3(c, "position", cam.position, w);
            cam.yaw_deg = number(c, "yaw_deg", cam.yaw_deg, w);
            cam.pitch_deg = number(c, "pitch_deg", cam.pitch_deg, w);
            if (cam.width < 1 || cam.height < 1 || !(cam.hfov_deg > 0 && cam.hfov_deg < 180))
                throw SchemaError(w + ": bad intrinsics");
            s.cameras.push_back(cam);
        }
    }
    return s;
}

inline nlohmann::json SceneSpec::to_json() const {
    using json_util::to_json;
    nlohmann::json boxes_j = nlohmann::json::array();
    for (const auto& b : boxes)
        boxes_j.push_back({{"class", b.label},
                           {"center", to_json(b.center)},
                           {"size", to_json(b.size)},
                           {"yaw", b.yaw},
                           {"velocity", to_json(b.velocity)},
                           {"color", to_json(b.color)}});
    nlohmann::json cams = nlohmann::json::array();
    for (const auto& c : cameras)
        cams.push_back({{"width", c.width},
                        {"height", c.height},
                        {"hfov_deg", c.hfov_deg},
                        {"position", to_json(c.position)},
                        {"yaw_deg", c.yaw_deg},
                        {"pitch_deg", c.pitch_deg}});
    return {{"schema_version", kSceneSchemaVersion},
            {"grid", grid_to_json(grid)},
            {"classes", class_names},
            {"frames", frames},
            {"frame_rate", frame_rate},
            {"ego", {{"velocity", to_json(ego_velocity)}, {"yaw_rate", ego_yaw_rate}}},
            {"boxes", boxes_j},
            {"lidar",
             {{"origin", to_json(lidar_origin)},
              {"rings", lidar_rings},
              {"azimuths", lidar_azimuths},
              {"min_elev_deg", lidar_min_elev_deg},
              {"max_elev_deg", lidar_max_elev_deg},
              {"range", lidar_range}}},
            {"cameras", cams}};
}

inline std::vector<CameraRig> surround_cameras(int width, int height) {
    std::vector<CameraRig> out;
    for (double yaw : {0.0, 90.0, 180.0, 270.0}) {
        CameraRig c;
        c.width = width;
        c.height = height;
        c.yaw_deg = yaw;
        out.push_back(c);
    }
    return out;
}

/// Ground slab, three static buildings and one moving vehicle on a
/// 64x64x16 grid of 0.5 m voxels around the ego.
inline SceneSpec standard_scene_spec(int frames = 3) {
    SceneSpec s;
    s.grid.dims = {64, 64, 16};
    s.grid.voxel_size = Vec3::Constant(0.5);
    s.grid.origin = Vec3(-16, -16, -2);
    s.frames = frames;
    s.boxes = {
        {0, Vec3(0, 0, -1.75), Vec3(200, 200, 0.5), 0.0, Vec3::Zero(), Vec3(0.35, 0.35, 0.3)},
        {1, Vec3(8, 8, 1.0), Vec3(8, 5, 5), 0.0, Vec3::Zero(), Vec3(0.75, 0.55, 0.4)},
        {1, Vec3(-7, -9, 0.5), Vec3(6, 6, 4), 0.3, Vec3::Zero(), Vec3(0.55, 0.6, 0.75)},
        {1, Vec3(-9, 8, 1.5), Vec3(4, 7, 6), 0.0, Vec3::Zero(), Vec3(0.5, 0.75, 0.5)},
        {2, Vec3(-5, -3.5, -0.75), Vec3(4, 2, 1.5), 0.0, Vec3(4, 0, 0), Vec3(0.9, 0.2, 0.2)},
    };
    s.cameras = surround_cameras(48, 32);
    return s;
}

/// Smaller variant for paired ablation runs: 32x32x8 grid, ground, two
/// buildings and one moving vehicle.
inline SceneSpec small_scene_spec(int frames = 3) {
    SceneSpec s;
    s.grid.dims = {32, 32, 8};
    s.grid.voxel_size = Vec3::Constant(0.5);
    s.grid.origin = Vec3(-8, -8, -2);
    s.frames = frames;
    s.boxes = {
        {0, Vec3(0, 0, -1.75), Vec3(200, 200, 0.5), 0.0, Vec3::Zero(), Vec3(0.35, 0.35, 0.3)},
        {1, Vec3(4.5, 4, 0.0), Vec3(4, 3, 3), 0.0, Vec3::Zero(), Vec3(0.75, 0.55, 0.4)},
        {1, Vec3(-4.5, -4.5, 0.25), Vec3(3, 3, 3.5), 0.4, Vec3::Zero(), Vec3(0.55, 0.6, 0.75)},
        {2, Vec3(-4, 2.5, -0.75), Vec3(3, 1.5, 1.5), 0.0, Vec3(4, 0, 0), Vec3(0.9, 0.2, 0.2)},
    };
    s.lidar_azimuths = 180;
    s.lidar_rings = 24;
    s.cameras = surround_cameras(32, 24);
    return s;
}

struct SceneFrame {
    int index = 0;
    double time = 0.0;
    Pose ego;  // ego-to-world
    VoxelGrid gt;
    std::vector<Vec3> points;  // LiDAR returns, ego frame, inside the grid
    std::vector<Image> depth;  // per camera; 0 where nothing is hit
    std::vector<Image> rgb;
    std::vector<std::vector<std::uint8_t>> mask;  // per camera; 1 where a surface is hit
};

struct SyntheticScene {
    SceneSpec spec;
    std::uint64_t seed = 0;
    std::vector<SceneFrame> frames;
    std::vector<CameraModel> cameras;  // camera-to-ego

    RaySet eval_rays() const {
        const std::vector<Vec3> origins{spec.lidar_origin};
        return synthetic_lidar_rays(origins, spec.lidar_rings, spec.lidar_azimuths, spec.lidar_min_elev_deg,
                                    spec.lidar_max_elev_deg);
    }
};

struct SurfaceHit {
    double t;
    int box;
};

inline std::optional<SurfaceHit> cast_scene(const SceneSpec& s, const Vec3& origin, const Vec3& dir, double time) {
    std::optional<SurfaceHit> best;
    for (std::size_t b = 0; b < s.boxes.size(); ++b) {
        const auto t = s.boxes[b].intersect(origin, dir, time);
        if (t && (!best || *t < best->t)) best = SurfaceHit{*t, static_cast<int>(b)};
    }
    return best;
}

inline Pose ego_pose(const SceneSpec& s, double t) {
    Pose p;
    p.rotation = quat_from_axis_angle(Vec3::UnitZ(), s.ego_yaw_rate * t);
    p.translation = s.ego_velocity * t;
    p.timestamp = t;
    return p;
}

/// Labels voxels whose center lies inside a box; the first listed box wins.
inline VoxelGrid voxelize(const SceneSpec& s, const Pose& ego, double time) {
    VoxelGrid g(s.grid, s.class_count);
    for (std::size_t v = 0; v < s.grid.voxel_count(); ++v) {
        const Vec3 w = ego.apply(s.grid.center(v));
        for (const auto& b : s.boxes)
            if (b.contains(w, time)) {
                g.labels[v] = static_cast<std::uint8_t>(b.label);
                break;
            }
    }
    return g;
}

inline SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    SyntheticScene sc;
    sc.spec = spec;
    sc.seed = seed;
    for (const auto& c : spec.cameras) sc.cameras.push_back(c.model());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 1.0);
    const Vec3 lo = spec.grid.origin, hi = spec.grid.origin + spec.grid.extent();

    for (int f = 0; f < spec.frames; ++f) {
        SceneFrame fr;
        fr.index = f;
        fr.time = f / spec.frame_rate;
        fr.ego = ego_pose(spec, fr.time);
        fr.gt = voxelize(spec, fr.ego, fr.time);
        const Mat3 R = fr.ego.matrix();

        // Azimuth phase jitter per frame keeps point sets seed-dependent.
        const double az0 = phase(rng) * 2.0 * std::numbers::pi / spec.lidar_azimuths;
        for (int r = 0; r < spec.lidar_rings; ++r) {
            const double frac = spec.lidar_rings > 1 ? double(r) / (spec.lidar_rings - 1) : 0.5;
            const double el = (spec.lidar_min_elev_deg + (spec.lidar_max_elev_deg - spec.lidar_min_elev_deg) * frac) *
                              std::numbers::pi / 180.0;
            for (int a = 0; a < spec.lidar_azimuths; ++a) {
                const double az = az0 + 2.0 * std::numbers::pi * a / spec.lidar_azimuths;
                const Vec3 d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
                const auto hit = cast_scene(spec, fr.ego.apply(spec.lidar_origin), R * d, fr.time);
                if (!hit || hit->t > spec.lidar_range) continue;
                const Vec3 p = spec.lidar_origin + hit->t * d;
                if ((p.array() >= lo.array()).all() && (p.array() < hi.array()).all()) fr.points.push_back(p);
            }
        }

        for (const auto& cam : sc.cameras) {
            Image depth(cam.width, cam.height, 1), rgb(cam.width, cam.height, 3);
            std::vector<std::uint8_t> mask(depth.pixel_count(), 0);
            const auto rays = generate_rays(cam);
            for (std::size_t p = 0; p < rays.size(); ++p) {
                const auto hit = cast_scene(spec, fr.ego.apply(rays[p].origin), R * rays[p].direction, fr.time);
                if (!hit || hit->t > spec.lidar_range) continue;
                depth.data[p] = static_cast<float>(hit->t);
                for (int c = 0; c < 3; ++c) rgb.data[3 * p + static_cast<std::size_t>(c)] = static_cast<float>(spec.boxes[hit->box].color[c]);
                mask[p] = 1;
            }
            fr.depth.push_back(std::move(depth));
            fr.rgb.push_back(std::move(rgb));
            fr.mask.push_back(std::move(mask));
        }
        sc.frames.push_back(std::move(fr));
    }
    return sc;
}

inline nlohmann::json pose_json(const Pose& p) {
    return {{"rotation", {p.rotation[0], p.rotation[1], p.rotation[2], p.rotation[3]}},
            {"translation", json_util::to_json(p.translation)},
            {"timestamp", p.timestamp}};
}

/// Writes scene.json (resolved spec and seed), poses.json and per-frame
/// gt.svox, points.spts, depth_<c>.simg, rgb_<c>.simg.
inline void write_scene(const SyntheticScene& sc, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json meta = sc.spec.to_json();
    meta["seed"] = sc.seed;
    const std::string mj = meta.dump(2);
    io::write_file(dir / "scene.json", io::Bytes(mj.begin(), mj.end()));
    nlohmann::json poses = nlohmann::json::array();
    for (const auto& fr : sc.frames) {
        poses.push_back(pose_json(fr.ego));
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03d", fr.index);
        const fs::path fd = dir / name;
        fs::create_directories(fd);
        io::write_grid(fd / "gt.svox", fr.gt);
        io::write_points(fd / "points.spts", fr.points);
        for (std::size_t c = 0; c < fr.depth.size(); ++c) {
            io::write_image(fd / ("depth_" + std::to_string(c) + ".simg"), fr.depth[c]);
            io::write_image(fd / ("rgb_" + std::to_string(c) + ".simg"), fr.rgb[c]);
        }
    }
    const std::string pj = poses.dump(2);
    io::write_file(dir / "poses.json", io::Bytes(pj.begin(), pj.end()));
}

/// Rebuilds a scene from its scene.json (spec plus "seed").
inline SyntheticScene load_scene(const std::filesystem::path& dir) {
    const auto bytes = io::read_file(dir / "scene.json");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("scene.json: ") + e.what());
    }
    std::uint64_t seed = 0;
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw SchemaError("scene.seed: expected a nonnegative integer");
        seed = j["seed"].get<std::uint64_t>();
        j.erase("seed");
    }
    return generate_scene(SceneSpec::from_json(j), seed);
}

}  // namespace semocc
