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

// Command line front end: scene generation, fitting, splatting, evaluation,
// kernel benchmarks and the streaming simulation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "semocc/blocked_splatting.hpp"
#include "semocc/metrics.hpp"
#include "semocc/pipeline/fit.hpp"
#include "semocc/pipeline/scene.hpp"
#include "semocc/random_scene.hpp"

namespace {

using namespace semocc;
using nlohmann::json;

json read_json_file(const std::string& path) {
    const auto bytes = io::read_file(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

std::array<int, 3> parse_dims(const std::string& s) {
    static const std::regex re(R"((\d+)x(\d+)x(\d+))");
    std::smatch m;
    if (!std::regex_match(s, m, re)) throw InvalidArgument("grid must look like NXxNYxNZ, got '" + s + "'");
    return {std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3])};
}

struct Common {
    int threads = 0;
    bool deterministic = false;

    Parallelism parallel() const { return {threads, deterministic}; }
};

FitConfig load_config(const std::string& path, const Common& common) {
    FitConfig cfg = path.empty() ? FitConfig{} : FitConfig::from_json(read_json_file(path));
    if (common.threads > 0) cfg.parallel.threads = common.threads;
    if (common.deterministic) cfg.parallel.deterministic = true;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semocc: Gaussian semantic occupancy toolkit"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--threads", common.threads, "Worker threads (0 = all hardware threads)")->check(CLI::NonNegativeNumber);
    app.add_flag("--deterministic", common.deterministic, "Static work partitioning in every kernel");

    // gen-scene
    auto* gen = app.add_subcommand("gen-scene", "Generate a synthetic scene and write it to disk");
    std::string gen_spec, gen_preset, gen_out;
    std::uint64_t gen_seed = 0;
    int gen_frames = 0;
    gen->add_option("--spec", gen_spec, "Scene spec JSON");
    gen->add_option("--preset", gen_preset, "Built-in scene instead of --spec")->check(CLI::IsMember({"standard", "small"}));
    gen->add_option("--frames", gen_frames, "Override the frame count")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Scene seed");
    gen->add_option("--out", gen_out, "Output directory")->required();

    // fit
    auto* fit = app.add_subcommand("fit", "Run Stage 1 and Stage 2 fitting on a generated scene");
    std::string fit_scene, fit_config, fit_out;
    fit->add_option("--scene", fit_scene, "Scene directory from gen-scene")->required();
    fit->add_option("--config", fit_config, "Fit config JSON (defaults when omitted)");
    fit->add_option("--out", fit_out, "Output directory")->required();

    // splat
    auto* splat = app.add_subcommand("splat", "Splat Gaussians into an argmax-labeled grid");
    std::string sp_gaussians, sp_grid, sp_out;
    double sp_cutoff = 3.0;
    bool sp_unweighted = false, sp_naive = false;
    splat->add_option("--gaussians", sp_gaussians, "Gaussian file (.sgau)")->required();
    splat->add_option("--grid-spec", sp_grid, "Grid spec JSON {dims, voxel_size, origin}")->required();
    splat->add_option("--out", sp_out, "Output grid (.svox)")->required();
    splat->add_option("--cutoff", sp_cutoff, "Cutoff in standard deviations")->check(CLI::PositiveNumber);
    splat->add_flag("--unweighted", sp_unweighted, "Occupancy from raw responses, not opacity-weighted");
    splat->add_flag("--naive", sp_naive, "Use the reference kernel instead of the blocked one");

    // eval
    auto* ev = app.add_subcommand("eval", "Compare a predicted grid with ground truth");
    std::string ev_pred, ev_gt;
    std::vector<double> ev_origin{0.0, 0.0, 0.0};
    ev->add_option("--pred", ev_pred, "Predicted grid (.svox)")->required();
    ev->add_option("--gt", ev_gt, "Ground-truth grid (.svox)")->required();
    ev->add_option("--ray-origin", ev_origin, "Origin of the synthetic LiDAR rays")->expected(3);

    // bench
    auto* bn = app.add_subcommand("bench", "Time naive and blocked splatting kernels");
    std::size_t bn_gaussians = 9000;
    std::string bn_grid = "200x200x16";
    double bn_voxel = 0.4;
    int bn_reps = 5;
    std::uint64_t bn_seed = 0;
    bn->add_option("--gaussians", bn_gaussians, "Gaussian count")->check(CLI::PositiveNumber);
    bn->add_option("--grid", bn_grid, "Grid dims NXxNYxNZ");
    bn->add_option("--voxel", bn_voxel, "Voxel size in meters")->check(CLI::PositiveNumber);
    bn->add_option("--reps", bn_reps, "Repetitions per timing (median)")->check(CLI::Range(3, 1000));
    bn->add_option("--seed", bn_seed, "Scene seed");

    // stream-sim
    auto* ss = app.add_subcommand("stream-sim", "Per-frame fitting with query propagation");
    std::string ss_scene, ss_config, ss_out, ss_mode;
    ss->add_option("--scene", ss_scene, "Scene directory from gen-scene")->required();
    ss->add_option("--config", ss_config, "Fit config JSON");
    ss->add_option("--mode", ss_mode, "Override propagation mode")->check(CLI::IsMember({"delta", "topk", "none"}));
    ss->add_option("--out", ss_out, "Write the metric rows to this JSON file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*gen) {
            if (gen_spec.empty() == gen_preset.empty()) throw InvalidArgument("give exactly one of --spec or --preset");
            SceneSpec spec;
            if (!gen_preset.empty())
                spec = gen_preset == "standard" ? standard_scene_spec() : small_scene_spec();
            else
                spec = SceneSpec::from_json(read_json_file(gen_spec));
            if (gen_frames > 0) spec.frames = gen_frames;
            const auto scene = generate_scene(spec, gen_seed);
            write_scene(scene, gen_out);
            json summary = {{"frames", scene.frames.size()}, {"out", gen_out}};
            json occ = json::array();
            for (const auto& f : scene.frames) occ.push_back(f.gt.occupied_count());
            summary["occupied_voxels"] = occ;
            print_json(summary);
        } else if (*fit) {
            const auto cfg = load_config(fit_config, common);
            const auto scene = load_scene(fit_scene);
            const auto result = run_fit(scene, cfg);
            write_fit_outputs(result, cfg, fit_out);
            write_json(std::filesystem::path(fit_out) / "config.json", cfg.to_json());
            print_json(result.metrics_json());
        } else if (*splat) {
            const auto set = io::read_gaussians(sp_gaussians);
            const auto spec = grid_from_json(read_json_file(sp_grid), "grid");
            SplatConfig cfg;
            cfg.cutoff_sigma = sp_cutoff;
            cfg.opacity_weighted = !sp_unweighted;
            cfg.parallel = common.parallel();
            const auto field = sp_naive ? splat_forward<double>(set.gaussians, spec, cfg, set.class_count)
                                        : splat_forward_blocked<double>(set.gaussians, spec, cfg, set.class_count);
            const auto grid = argmax_labels(field, spec);
            io::write_grid(sp_out, grid);
            print_json({{"voxels", spec.voxel_count()}, {"occupied", grid.occupied_count()}, {"out", sp_out}});
        } else if (*ev) {
            const auto pred = io::read_grid(ev_pred);
            const auto gt = io::read_grid(ev_gt);
            const std::vector<Vec3> origins{Vec3(ev_origin[0], ev_origin[1], ev_origin[2])};
            const auto rays = synthetic_lidar_rays(origins);
            print_json(metrics_json(iou_miou(pred, gt),
                                    rayiou(pred, gt, rays, default_ray_thresholds(), common.parallel())));
        } else if (*bn) {
            RandomSceneSpec rs;
            rs.gaussian_count = bn_gaussians;
            rs.grid.dims = parse_dims(bn_grid);
            rs.grid.voxel_size = Vec3::Constant(bn_voxel);
            rs.grid.origin = -0.5 * rs.grid.extent();
            rs.seed = bn_seed;
            const auto gs = random_gaussians(rs);
            SplatConfig cfg;
            cfg.parallel = common.parallel();
            const auto up = random_upstream(rs.grid.voxel_count(), rs.class_count + 1, bn_seed + 1);
            print_json(bench(gs, rs.grid, cfg, rs.class_count, up, bn_reps).to_json());
        } else if (*ss) {
            auto cfg = load_config(ss_config, common);
            if (!ss_mode.empty()) cfg.propagation.mode = ss_mode;
            const auto scene = load_scene(ss_scene);
            const auto report = stream_json(stream_sim(scene, cfg), cfg);
            if (!ss_out.empty()) write_json(ss_out, report);
            print_json(report);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
