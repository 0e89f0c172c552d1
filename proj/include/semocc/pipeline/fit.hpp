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

// Desk-scale two-stage fitting. Stage 1 pretrains queries placed at noised
// FPS samples of the LiDAR points with a denoising term plus masked depth and
// color losses (optionally on warped neighbor frames). Stage 2 fits the
// occupancy field to the labeled grid with class-balanced cross-entropy.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semocc/blocked_splatting.hpp"
#include "semocc/metrics.hpp"
#include "semocc/pipeline/config.hpp"
#include "semocc/pipeline/optimizer.hpp"
#include "semocc/pipeline/queries.hpp"
#include "semocc/pipeline/scene.hpp"
#include "semocc/propagation.hpp"
#include "semocc/rendering.hpp"
#include "semocc/sampling_denoise.hpp"

namespace semocc {

inline constexpr double kDivergenceLimit = 1e6;

inline void check_divergence(const char* stage, int step, double loss, const QuerySet& qs) {
    if (std::isfinite(loss) && loss <= kDivergenceLimit) return;
    std::ostringstream msg;
    msg << stage << " diverged at step " << step << ": loss " << loss << ", parameter norm " << qs.params.norm()
        << ", queries " << qs.size();
    throw DivergenceError(msg.str());
}

/// Frames adjacent to `frame` that exist in the scene.
inline std::vector<int> neighbor_frames(const SyntheticScene& sc, int frame) {
    std::vector<int> out;
    if (frame - 1 >= 0) out.push_back(frame - 1);
    if (frame + 1 < static_cast<int>(sc.frames.size())) out.push_back(frame + 1);
    return out;
}

/// Time offset and ego change taking frame `from` coordinates to frame `to`.
struct FrameWarp {
    double dt = 0.0;
    Pose ego;
};

inline FrameWarp frame_warp(const SyntheticScene& sc, int from, int to) {
    const auto& a = sc.frames[static_cast<std::size_t>(from)];
    const auto& b = sc.frames[static_cast<std::size_t>(to)];
    return {b.time - a.time, relative_pose(b.ego, a.ego)};
}

inline RenderConfig render_config(const FitConfig& cfg) {
    RenderConfig r;
    r.parallel = cfg.parallel;
    return r;
}

inline SplatConfig splat_config(const FitConfig& cfg) {
    SplatConfig s;
    s.cutoff_sigma = cfg.stage2.cutoff_sigma;
    s.opacity_weighted = cfg.stage2.opacity_weighted;
    s.parallel = cfg.parallel;
    return s;
}

// --- Stage 1 ---------------------------------------------------------------

struct RenderTerms {
    double loss = 0.0;   // weighted depth + rgb
    double depth = 0.0;  // mean depth MAE over cameras with valid pixels
};

/// Depth and color losses of one frame, averaged over cameras. With `grad`
/// set, adds `weight` times their gradient. `warp` moves the Gaussians into
/// that frame first.
inline RenderTerms render_terms(const DecodedScene& dec, const SyntheticScene& sc, int frame,
                                const std::optional<FrameWarp>& warp, const LossWeights& lw, const RenderConfig& rcfg,
                                double weight, QueryGradient* grad) {
    const auto& fr = sc.frames[static_cast<std::size_t>(frame)];
    std::vector<SemanticGaussian> moved;
    const std::vector<SemanticGaussian>* gs = &dec.gaussians;
    if (warp) {
        moved = warp_gaussians(dec.gaussians, warp->dt, warp->ego, std::abs(warp->dt));
        gs = &moved;
    }
    RenderTerms out;
    int used = 0;
    std::vector<GaussianAdjoint> total(gs->size());
    for (std::size_t c = 0; c < sc.cameras.size(); ++c) {
        const auto& mask = fr.mask[c];
        if (std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; })) continue;
        const auto res = render(*gs, &dec.colors, sc.cameras[c], rcfg);
        auto dl = depth_loss(res.depth, fr.depth[c], mask);
        auto cl = rgb_loss(res.rgb, fr.rgb[c], mask);
        out.depth += dl.value;
        out.loss += lw.depth * dl.value + lw.rgb * cl.value;
        ++used;
        if (!grad) continue;
        for (auto& v : dl.grad.data) v *= static_cast<float>(lw.depth);
        for (auto& v : cl.grad.data) v *= static_cast<float>(lw.rgb);
        RenderUpstream up;
        up.depth = &dl.grad;
        up.rgb = &cl.grad;
        const auto adj = render_backward(*gs, &dec.colors, sc.cameras[c], rcfg, up);
        for (std::size_t i = 0; i < adj.size(); ++i) total[i] += adj[i];
    }
    if (used == 0) return out;
    out.depth /= used;
    out.loss /= used;
    if (!grad) return out;
    const double w = weight / used;
    for (std::size_t i = 0; i < total.size(); ++i) {
        GaussianAdjoint a = warp ? unwarp_adjoint(total[i], warp->dt, warp->ego) : total[i];
        const auto& g = dec.gaussians[i];
        GaussianGradient gg;
        chain_geometry(g, g.rotation.size() ? unit_quat_to_matrix(g.rotation) : Mat3::Identity(), a.mean,
                       a.precision, a.opacity, a.log_norm, gg);
        gg.velocity = a.velocity;
        grad->add(i, gg, w);
        if (a.attributes.size() == 3) grad->add_color(i, a.attributes, w);
    }
    return out;
}

struct Stage1Result {
    QuerySet queries;
    DenoiseBatch batch;
    std::vector<double> loss_curve;
    double denoise_residual = 0.0;  // mean distance of p + o to the clean sample
    double depth_mae = 0.0;         // over the key frame and its neighbors
};

inline double mean_residual(const DenoiseBatch& b, const QuerySet& qs) {
    double s = 0.0;
    for (std::size_t i = 0; i < qs.size(); ++i) s += (qs.anchors[i] + qs.offset(i) - b.clean_targets[i]).norm();
    return qs.size() ? s / static_cast<double>(qs.size()) : 0.0;
}

/// Depth MAE averaged over the key frame and its neighbors, rendering
/// neighbors through the velocity warp.
inline double multi_frame_depth_mae(const QuerySet& qs, const SyntheticScene& sc, int key, const FitConfig& cfg) {
    const auto dec = decode(qs, cfg.queries.min_scale);
    const auto rcfg = render_config(cfg);
    double s = render_terms(dec, sc, key, std::nullopt, {}, rcfg, 0.0, nullptr).depth;
    const auto nb = neighbor_frames(sc, key);
    for (int n : nb) s += render_terms(dec, sc, n, frame_warp(sc, key, n), {}, rcfg, 0.0, nullptr).depth;
    return s / static_cast<double>(1 + nb.size());
}

inline void require_frame(const SyntheticScene& sc, int frame) {
    if (frame < 0 || frame >= static_cast<int>(sc.frames.size()))
        throw InvalidArgument("frame index outside the scene");
}

inline Stage1Result fit_stage1(const SyntheticScene& sc, const FitConfig& cfg) {
    const int key = cfg.stage1.key_frame;
    require_frame(sc, key);
    const auto& fr = sc.frames[static_cast<std::size_t>(key)];
    if (fr.points.empty()) throw InvalidSampleCount("key frame has no surface points");
    Stage1Result out;
    out.batch = DenoiseBatch::make(fr.points, static_cast<std::size_t>(cfg.queries.count), cfg.stage1.noise_bound,
                                   cfg.seed);
    out.queries = make_queries(out.batch.noised_init, cfg.queries, sc.spec.class_count);
    auto& qs = out.queries;
    OptimizerState opt(learning_rates(qs, cfg.optimizer), cfg.stage1.steps, cfg.optimizer);
    const auto rcfg = render_config(cfg);
    const auto& lw = cfg.stage1.weights;
    const auto nb = cfg.stage1.warp ? neighbor_frames(sc, key) : std::vector<int>{};
    const double frames = static_cast<double>(1 + nb.size());
    const double k = static_cast<double>(qs.size());

    for (int step = 0; step < cfg.stage1.steps; ++step) {
        const auto dec = decode(qs, cfg.queries.min_scale);
        QueryGradient grad(qs);
        std::vector<Vec3> offsets;
        for (std::size_t q = 0; q < qs.size(); ++q) offsets.push_back(qs.offset(q));
        const auto dn = denoise_loss(out.batch, offsets);
        for (std::size_t q = 0; q < qs.size(); ++q) grad.add_offset(q, dn.grad[q], lw.denoise / k);
        double render_loss = 0.0;
        if (lw.depth > 0 || lw.rgb > 0) {
            render_loss += render_terms(dec, sc, key, std::nullopt, lw, rcfg, 1.0 / frames, &grad).loss;
            for (int n : nb)
                render_loss += render_terms(dec, sc, n, frame_warp(sc, key, n), lw, rcfg, 1.0 / frames, &grad).loss;
            render_loss /= frames;
        }
        const double loss = pretrain_loss(lw, dn.value / k, 0.0, 0.0) + render_loss;
        out.loss_curve.push_back(loss);
        check_divergence("stage 1", step, loss, qs);
        opt.apply(qs.params, grad.finish());
        project(qs, cfg.queries);
    }
    out.denoise_residual = mean_residual(out.batch, qs);
    out.depth_mae = multi_frame_depth_mae(qs, sc, key, cfg);
    return out;
}

// --- Stage 2 ---------------------------------------------------------------

/// Voxels supervised at one step: every occupied voxel plus each empty one
/// with probability `fraction`.
inline std::vector<std::uint32_t> sample_voxels(const VoxelGrid& gt, double fraction, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution keep(fraction);
    std::vector<std::uint32_t> out;
    for (std::size_t v = 0; v < gt.labels.size(); ++v)
        if (gt.occupied(v) || keep(rng)) out.push_back(static_cast<std::uint32_t>(v));
    return out;
}

/// Per-label weights (empty is label C): inverse label frequency over the
/// whole grid relative to the most frequent label, capped at `clip`. Sampled
/// empty voxels are scaled by 1 / fraction so the expected loss matches
/// supervising every voxel.
inline std::vector<double> class_weights(const VoxelGrid& gt, double clip, double empty_fraction) {
    std::vector<double> n(static_cast<std::size_t>(gt.class_count) + 1, 0.0);
    for (auto l : gt.labels) n[l] += 1.0;
    const double most = *std::max_element(n.begin(), n.end());
    std::vector<double> w(n.size(), 0.0);
    for (std::size_t c = 0; c < n.size(); ++c) w[c] = n[c] > 0 ? std::min(clip, most / n[c]) : 0.0;
    w.back() /= empty_fraction;
    return w;
}

/// Weighted mean cross-entropy of the sampled voxels and its field gradient.
inline double occupancy_ce(const basic_occupancy_field<double>& field, const VoxelGrid& gt,
                           std::span<const std::uint32_t> voxels, std::span<const double> weights,
                           FieldGradient* upstream) {
    constexpr double kProbFloor = 1e-6;
    double wsum = 0.0;
    for (auto v : voxels) wsum += weights[gt.labels[v]];
    if (!(wsum > 0)) return 0.0;
    double loss = 0.0;
    for (auto v : voxels) {
        const auto y = gt.labels[v];
        const double p = std::max(field.row(v)[y], kProbFloor);
        loss -= weights[y] * std::log(p);
        if (upstream) upstream->row(v)[y] = -weights[y] / (p * wsum);
    }
    return loss / wsum;
}

/// Cross-entropy of one frame's grid; adds `weight` times its gradient.
inline double occupancy_term(const std::vector<SemanticGaussian>& gs, const VoxelGrid& gt, const FitConfig& cfg,
                             std::uint64_t sample_seed, double weight, const std::optional<FrameWarp>& warp,
                             QueryGradient& grad) {
    const auto scfg = splat_config(cfg);
    const int C = gt.class_count;
    std::vector<SemanticGaussian> moved;
    const std::vector<SemanticGaussian>* use = &gs;
    if (warp) {
        moved = warp_gaussians(gs, warp->dt, warp->ego, std::abs(warp->dt));
        use = &moved;
    }
    const auto voxels = sample_voxels(gt, cfg.stage2.empty_fraction, sample_seed);
    const auto weights = class_weights(gt, cfg.stage2.class_weight_clip, cfg.stage2.empty_fraction);
    const auto index = neighbor_pairs(*use, gt.spec, scfg.cutoff_sigma);
    const auto part = partition(gt.spec, index, scfg.parallel);
    const auto field = splat_forward_blocked<double>(*use, gt.spec, scfg, index, part, C);
    FieldGradient up(field.voxels, field.channels);
    const double loss = occupancy_ce(field, gt, voxels, weights, &up);
    for (auto& u : up.data) u *= weight;
    const auto g = splat_backward_blocked(*use, gt.spec, scfg, up, index, part, C);
    for (std::size_t i = 0; i < g.gaussians.size(); ++i)
        grad.add(i, warp ? unwarp_gradient(g.gaussians[i], warp->dt, warp->ego) : g.gaussians[i]);
    return weight * loss;
}

struct EvalResult {
    VoxelGrid pred;
    IouResult voxel;
    RayIouResult ray;
};

inline EvalResult evaluate_frame(const QuerySet& qs, const SyntheticScene& sc, int frame, const FitConfig& cfg) {
    const auto& gt = sc.frames[static_cast<std::size_t>(frame)].gt;
    const auto dec = decode(qs, cfg.queries.min_scale);
    const auto scfg = splat_config(cfg);
    const auto field = splat_forward_blocked<double>(dec.gaussians, gt.spec, scfg, gt.class_count);
    EvalResult e;
    e.pred = argmax_labels(field, gt.spec);
    e.voxel = iou_miou(e.pred, gt);
    e.ray = rayiou(e.pred, gt, sc.eval_rays(), default_ray_thresholds(), cfg.parallel);
    return e;
}

struct Stage2Result {
    QuerySet queries;
    std::vector<double> loss_curve;
    EvalResult eval;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Fits queries to frame `frame`'s grid for `steps` steps. With neighbors
/// on, each step also supervises one adjacent frame (alternating) through
/// the velocity warp.
inline Stage2Result fit_stage2(const SyntheticScene& sc, int frame, QuerySet init, const FitConfig& cfg, int steps,
                               bool neighbors) {
    require_frame(sc, frame);
    Stage2Result out;
    out.queries = std::move(init);
    auto& qs = out.queries;
    OptimizerState opt(learning_rates(qs, cfg.optimizer), steps, cfg.optimizer);
    const auto nb = neighbors ? neighbor_frames(sc, frame) : std::vector<int>{};
    const auto& gt = sc.frames[static_cast<std::size_t>(frame)].gt;

    for (int step = 0; step < steps; ++step) {
        const auto dec = decode(qs, cfg.queries.min_scale);
        QueryGradient grad(qs);
        double loss = occupancy_term(dec.gaussians, gt, cfg, mix_seed(cfg.seed, static_cast<std::uint64_t>(frame),
                                                                      static_cast<std::uint64_t>(step)),
                                     1.0, std::nullopt, grad);
        if (!nb.empty()) {
            const int n = nb[static_cast<std::size_t>(step) % nb.size()];
            loss += occupancy_term(dec.gaussians, sc.frames[static_cast<std::size_t>(n)].gt, cfg,
                                   mix_seed(cfg.seed, static_cast<std::uint64_t>(n) + 1000u,
                                            static_cast<std::uint64_t>(step)),
                                   cfg.stage2.neighbor_weight, frame_warp(sc, frame, n), grad);
        }
        out.loss_curve.push_back(loss);
        check_divergence("stage 2", step, loss, qs);
        opt.apply(qs.params, grad.finish());
        project(qs, cfg.queries);
    }
    out.eval = evaluate_frame(qs, sc, frame, cfg);
    return out;
}

// --- Full fit ----------------------------------------------------------------

struct FitResult {
    std::optional<Stage1Result> stage1;
    Stage2Result stage2;
    int key_frame = 0;
    int total_steps = 0;

    nlohmann::json metrics_json() const {
        nlohmann::json j = semocc::metrics_json(stage2.eval.voxel, stage2.eval.ray);
        j["key_frame"] = key_frame;
        j["total_steps"] = total_steps;
        j["stage2_final_loss"] = stage2.loss_curve.empty() ? 0.0 : stage2.loss_curve.back();
        if (stage1) {
            j["stage1"] = {{"denoise_residual", stage1->denoise_residual},
                           {"depth_mae", stage1->depth_mae},
                           {"final_loss", stage1->loss_curve.empty() ? 0.0 : stage1->loss_curve.back()}};
        }
        return j;
    }
};

inline FitResult run_fit(const SyntheticScene& sc, const FitConfig& cfg) {
    FitResult r;
    r.key_frame = cfg.stage1.key_frame;
    require_frame(sc, r.key_frame);
    QuerySet init;
    if (cfg.queries.init == "pretrained") {
        r.stage1 = fit_stage1(sc, cfg);
        init = r.stage1->queries;
        r.total_steps += cfg.stage1.steps;
    } else {
        init = make_queries(halton_anchors(sc.spec.grid, static_cast<std::size_t>(cfg.queries.count), cfg.seed),
                            cfg.queries, sc.spec.class_count);
    }
    r.stage2 = fit_stage2(sc, r.key_frame, std::move(init), cfg, cfg.stage2.steps, cfg.stage2.neighbors);
    r.total_steps += cfg.stage2.steps;
    return r;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    const std::string s = j.dump(2) + "\n";
    io::write_file(path, io::Bytes(s.begin(), s.end()));
}

/// gaussians.sgau, queries.json, pred.svox, metrics.json, loss_curve.json.
inline void write_fit_outputs(const FitResult& r, const FitConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto& qs = r.stage2.queries;
    io::write_gaussians(dir / "gaussians.sgau", decode(qs, cfg.queries.min_scale).gaussians, qs.classes);
    write_json(dir / "queries.json", to_json(qs));
    io::write_grid(dir / "pred.svox", r.stage2.eval.pred);
    write_json(dir / "metrics.json", r.metrics_json());
    nlohmann::json curve = {{"stage2", r.stage2.loss_curve}};
    curve["stage1"] = r.stage1 ? nlohmann::json(r.stage1->loss_curve) : nlohmann::json::array();
    write_json(dir / "loss_curve.json", curve);
}

// --- Streaming ---------------------------------------------------------------

struct StreamRow {
    int frame = 0;
    std::size_t propagated = 0;
    double iou = 0, miou = 0, rayiou = 0;
};

/// Fresh queries: the first `count` points of the seeded Halton layout,
/// the same in every frame's ego coordinates.
inline QuerySet fresh_queries(const SyntheticScene& sc, std::size_t count, const FitConfig& cfg) {
    if (count == 0) return {};
    return make_queries(halton_anchors(sc.spec.grid, count, cfg.seed), cfg.queries, sc.spec.class_count);
}

/// Per-frame Stage-2 fitting over the whole sequence. Each frame starts from
/// up to fraction * K queries propagated through the queue (mode delta or
/// topk) topped up with fresh queries; mode none never propagates.
inline std::vector<StreamRow> stream_sim(const SyntheticScene& sc, const FitConfig& cfg) {
    const auto& pc = cfg.propagation;
    const std::size_t K = static_cast<std::size_t>(cfg.queries.count);
    const std::size_t budget = static_cast<std::size_t>(std::llround(pc.fraction * static_cast<double>(K)));
    const bool propagate = pc.mode != "none" && budget > 0;
    const double delta = pc.mode == "delta" ? pc.delta : 0.0;
    QueryQueue queue(static_cast<std::size_t>(pc.queue));
    std::vector<StreamRow> rows;
    for (int f = 0; f < static_cast<int>(sc.frames.size()); ++f) {
        const auto& fr = sc.frames[static_cast<std::size_t>(f)];
        std::vector<SceneQuery> carried;
        if (propagate) {
            carried = gather_history(queue, fr.ego);
            if (carried.size() > budget) carried.resize(budget);
        }
        QuerySet init = concat(from_scene_queries(carried, sc.spec.class_count, cfg.queries.children),
                               fresh_queries(sc, K - carried.size(), cfg));
        auto res = fit_stage2(sc, f, std::move(init), cfg, pc.steps_per_frame, false);
        rows.push_back({f, carried.size(), res.eval.voxel.iou, res.eval.voxel.miou, res.eval.ray.rayiou});
        if (propagate) {
            const auto current = to_scene_queries(res.queries, cfg.queries.min_scale);
            queue.push_frame(f, select_queries(current, budget, delta), fr.ego, budget);
        }
    }
    return rows;
}

inline nlohmann::json stream_json(const std::vector<StreamRow>& rows, const FitConfig& cfg) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows)
        arr.push_back({{"frame", r.frame}, {"propagated", r.propagated}, {"iou", r.iou}, {"miou", r.miou},
                       {"rayiou", r.rayiou}});
    return {{"mode", cfg.propagation.mode},
            {"frames", arr},
            {"final_miou", rows.empty() ? 0.0 : rows.back().miou}};
}

}  // namespace semocc
