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

// Cache-blocked splatting.
//
// Forward: voxels are tiled into 4x4x4 blocks. Each block stages the packed
// parameters of every Gaussian touching any of its voxels into a contiguous
// buffer, then evaluates its voxels against that buffer. Blocks write
// disjoint output rows.
//
// Backward: a voxel-parallel pass reduces the upstream gradient to a few
// per-voxel coefficients; a Gaussian-parallel pass then walks each
// Gaussian's touched voxels and accumulates that Gaussian's adjoint in
// registers, so no two workers ever write the same gradient row.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "semocc/splatting.hpp"

namespace semocc {

struct VoxelBlockPartition {
    static constexpr int kBlockEdge = 4;

    struct Block {
        std::array<int, 3> lo{};  // inclusive voxel index
        std::array<int, 3> hi{};  // exclusive voxel index
        std::size_t staged_begin = 0;
        std::size_t staged_end = 0;
    };

    std::array<int, 3> block_dims{kBlockEdge, kBlockEdge, kBlockEdge};
    std::array<int, 3> blocks_per_axis{0, 0, 0};
    std::vector<Block> blocks;
    std::vector<std::uint32_t> staged;  // per-block sorted unique Gaussian ids, concatenated

    std::size_t block_count() const { return blocks.size(); }
    std::span<const std::uint32_t> gaussians_of(std::size_t b) const {
        return {staged.data() + blocks[b].staged_begin, blocks[b].staged_end - blocks[b].staged_begin};
    }
};

/// Built from the Gaussian-major lists in O(pairs): Gaussians are visited
/// in ascending order, so every block list comes out sorted and unique.
inline VoxelBlockPartition partition(const GridSpec& spec, const NeighborIndex& index,
                                     const Parallelism& par = {}) {
    (void)par;
    VoxelBlockPartition p;
    for (int a = 0; a < 3; ++a) p.blocks_per_axis[a] = (spec.dims[a] + p.block_dims[a] - 1) / p.block_dims[a];
    const auto bx = static_cast<std::size_t>(p.blocks_per_axis[0]);
    const auto by = static_cast<std::size_t>(p.blocks_per_axis[1]);
    const std::size_t count = bx * by * static_cast<std::size_t>(p.blocks_per_axis[2]);
    p.blocks.resize(count);
    for (std::size_t b = 0; b < count; ++b) {
        const std::array<std::size_t, 3> bi{b % bx, (b / bx) % by, b / (bx * by)};
        for (int a = 0; a < 3; ++a) {
            p.blocks[b].lo[a] = static_cast<int>(bi[a]) * p.block_dims[a];
            p.blocks[b].hi[a] = std::min(spec.dims[a], p.blocks[b].lo[a] + p.block_dims[a]);
        }
    }
    const std::size_t gaussians = index.gaussian_offsets.empty() ? 0 : index.gaussian_offsets.size() - 1;
    std::vector<std::uint32_t> voxel_block(spec.voxel_count());
    for (std::size_t b = 0; b < count; ++b) {
        const auto& blk = p.blocks[b];
        for (int k = blk.lo[2]; k < blk.hi[2]; ++k)
            for (int j = blk.lo[1]; j < blk.hi[1]; ++j)
                for (int i = blk.lo[0]; i < blk.hi[0]; ++i)
                    voxel_block[spec.linear(i, j, k)] = static_cast<std::uint32_t>(b);
    }
    std::vector<std::uint32_t> stamp(count, 0);
    std::vector<std::size_t> sizes(count + 1, 0);
    for (std::size_t g = 0; g < gaussians; ++g)
        for (auto v : index.voxels_of(g)) {
            const std::size_t b = voxel_block[v];
            if (stamp[b] == g + 1) continue;
            stamp[b] = static_cast<std::uint32_t>(g + 1);
            ++sizes[b + 1];
        }
    for (std::size_t b = 0; b < count; ++b) {
        sizes[b + 1] += sizes[b];
        p.blocks[b].staged_begin = sizes[b];
        p.blocks[b].staged_end = sizes[b + 1];
    }
    p.staged.resize(sizes[count]);
    std::fill(stamp.begin(), stamp.end(), 0);
    std::vector<std::size_t> cursor(sizes.begin(), sizes.end() - 1);
    for (std::size_t g = 0; g < gaussians; ++g)
        for (auto v : index.voxels_of(g)) {
            const std::size_t b = voxel_block[v];
            if (stamp[b] == g + 1) continue;
            stamp[b] = static_cast<std::uint32_t>(g + 1);
            p.staged[cursor[b]++] = static_cast<std::uint32_t>(g);
        }
    return p;
}

/// Counters for checking that both passes visit exactly the indexed pairs.
struct KernelStats {
    std::size_t forward_pair_visits = 0;
    std::size_t backward_pair_visits = 0;
};

namespace detail {

/// Packed per-Gaussian record: mean, upper triangle of Sigma^-1, opacity,
/// density normalizer.
struct PackedGaussian {
    double m[3];
    double p[6];  // p00 p01 p02 p11 p12 p22
    double opacity;
    double norm;
};

inline PackedGaussian pack(const SemanticGaussian& g, const Covariance& cov) {
    PackedGaussian pg{};
    for (int k = 0; k < 3; ++k) pg.m[k] = g.position[k];
    const Mat3& P = cov.inverse;
    pg.p[0] = P(0, 0);
    pg.p[1] = P(0, 1);
    pg.p[2] = P(0, 2);
    pg.p[3] = P(1, 1);
    pg.p[4] = P(1, 2);
    pg.p[5] = P(2, 2);
    pg.opacity = g.opacity;
    pg.norm = cov.density_norm();
    return pg;
}

struct PairEval {
    double d[3];
    double r;  // exp(-q/2)
};

inline PairEval evaluate(const PackedGaussian& g, const double x[3]) {
    PairEval e;
    e.d[0] = x[0] - g.m[0];
    e.d[1] = x[1] - g.m[1];
    e.d[2] = x[2] - g.m[2];
    const double q = g.p[0] * e.d[0] * e.d[0] + g.p[3] * e.d[1] * e.d[1] + g.p[5] * e.d[2] * e.d[2] +
                     2.0 * (g.p[1] * e.d[0] * e.d[1] + g.p[2] * e.d[0] * e.d[2] + g.p[4] * e.d[1] * e.d[2]);
    e.r = std::exp(-0.5 * q);
    return e;
}

struct PackedSet {
    std::vector<PackedGaussian> params;
    std::vector<double> classes;  // C per Gaussian
    std::vector<Covariance> covs;
};

inline PackedSet pack_all(std::span<const SemanticGaussian> gaussians, int class_count) {
    PackedSet s;
    s.covs = covariances_of(gaussians);
    s.params.reserve(gaussians.size());
    s.classes.resize(gaussians.size() * static_cast<std::size_t>(class_count));
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        s.params.push_back(pack(gaussians[i], s.covs[i]));
        for (int c = 0; c < class_count; ++c) s.classes[i * class_count + c] = gaussians[i].classes[c];
    }
    return s;
}

/// Per-block staging buffer, reused across blocks by one worker.
struct Stage {
    std::vector<PackedGaussian> params;
    std::vector<double> classes;
    std::vector<std::uint32_t> slot;   // global id -> staged position, valid for the current block
    std::vector<std::uint32_t> local;  // staged positions of the current voxel's neighbors

    void load(const PackedSet& set, std::span<const std::uint32_t> ids, int class_count) {
        if (slot.size() < set.params.size()) slot.resize(set.params.size());
        params.resize(ids.size());
        classes.resize(ids.size() * static_cast<std::size_t>(class_count));
        for (std::size_t n = 0; n < ids.size(); ++n) {
            params[n] = set.params[ids[n]];
            slot[ids[n]] = static_cast<std::uint32_t>(n);
            std::copy_n(set.classes.data() + static_cast<std::size_t>(ids[n]) * class_count, class_count,
                        classes.data() + n * class_count);
        }
    }

    void map(std::span<const std::uint32_t> voxel_ids) {
        local.resize(voxel_ids.size());
        for (std::size_t n = 0; n < voxel_ids.size(); ++n) local[n] = slot[voxel_ids[n]];
    }
};

/// Visits every voxel that has at least one neighbor, block by block, with
/// the block's Gaussians staged. Blocks without Gaussians are skipped.
template <typename Fn>
void for_each_staged_voxel(const GridSpec& spec, const NeighborIndex& index, const VoxelBlockPartition& part,
                           const PackedSet& set, int class_count, const Parallelism& par, Fn&& fn) {
    parallel_for(
        part.block_count(), par,
        [&](std::size_t begin, std::size_t end) {
            Stage stage;
            for (std::size_t b = begin; b < end; ++b) {
                const auto& blk = part.blocks[b];
                const auto block_ids = part.gaussians_of(b);
                if (block_ids.empty()) continue;
                stage.load(set, block_ids, class_count);
                for (int k = blk.lo[2]; k < blk.hi[2]; ++k)
                    for (int j = blk.lo[1]; j < blk.hi[1]; ++j)
                        for (int i = blk.lo[0]; i < blk.hi[0]; ++i) {
                            const std::size_t v = spec.linear(i, j, k);
                            const auto ids = index.gaussians_of(v);
                            if (ids.empty()) continue;
                            stage.map(ids);
                            const Vec3 c = spec.center(i, j, k);
                            const double x[3] = {c[0], c[1], c[2]};
                            fn(v, x, stage);
                        }
            }
        },
        8);
}

}  // namespace detail

template <typename Scalar = float>
basic_occupancy_field<Scalar> splat_forward_blocked(std::span<const SemanticGaussian> gaussians,
                                                    const GridSpec& spec, const SplatConfig& cfg,
                                                    const NeighborIndex& index, const VoxelBlockPartition& part,
                                                    int class_count, KernelStats* stats = nullptr) {
    detail::check_classes(gaussians, class_count);
    const auto set = detail::pack_all(gaussians, class_count);
    basic_occupancy_field<Scalar> field(spec.voxel_count(), class_count + 1);
    for (std::size_t v = 0; v < spec.voxel_count(); ++v) field.row(v)[static_cast<std::size_t>(class_count)] = Scalar(1);
    const bool weighted = cfg.opacity_weighted;
    const double uniform = class_count ? 1.0 / class_count : 0.0;

    detail::for_each_staged_voxel(
        spec, index, part, set, class_count, cfg.parallel,
        [&](std::size_t v, const double* x, const detail::Stage& st) {
            double num[256];
            std::fill_n(num, class_count, 0.0);
            double empty = 1.0, den = 0.0;
            for (auto l : st.local) {
                const auto& g = st.params[l];
                const auto pe = detail::evaluate(g, x);
                empty *= 1.0 - (weighted ? g.opacity * pe.r : pe.r);
                const double w = g.opacity * g.norm * pe.r;
                den += w;
                const double* c = st.classes.data() + static_cast<std::size_t>(l) * class_count;
                for (int k = 0; k < class_count; ++k) num[k] += w * c[k];
            }
            const double alpha = 1.0 - empty;
            const bool floored = den < cfg.weight_floor;
            auto row = field.row(v);
            for (int k = 0; k < class_count; ++k)
                row[static_cast<std::size_t>(k)] = static_cast<Scalar>(alpha * (floored ? uniform : num[k] / den));
            row[static_cast<std::size_t>(class_count)] = static_cast<Scalar>(1.0 - alpha);
        });
    if (stats) stats->forward_pair_visits += index.pair_count();
    return field;
}

template <typename Scalar = float>
basic_occupancy_field<Scalar> splat_forward_blocked(std::span<const SemanticGaussian> gaussians,
                                                    const GridSpec& spec, const SplatConfig& cfg, int class_count) {
    const auto index = neighbor_pairs(gaussians, spec, cfg.cutoff_sigma);
    return splat_forward_blocked<Scalar>(gaussians, spec, cfg, index, partition(spec, index, cfg.parallel),
                                         class_count);
}

inline SplatGradients splat_backward_blocked(std::span<const SemanticGaussian> gaussians, const GridSpec& spec,
                                             const SplatConfig& cfg, const FieldGradient& upstream,
                                             const NeighborIndex& index, const VoxelBlockPartition& part,
                                             int class_count, KernelStats* stats = nullptr) {
    detail::check_classes(gaussians, class_count);
    detail::check_upstream(upstream, spec.voxel_count(), class_count + 1);
    const auto set = detail::pack_all(gaussians, class_count);
    const bool weighted = cfg.opacity_weighted;
    const std::size_t nv = spec.voxel_count();
    const auto C = static_cast<std::size_t>(class_count);

    // Pass 1, voxel-parallel. For every pair, a record stored at its
    // gaussian-major position so pass 2 streams through its own pairs.
    // Per voxel: B = alpha * upstream[0..C). Only voxels with neighbors are
    // written and read.
    struct PairRecord {
        double r;      // raw response
        double dresp;  // dL/d(response)
        double dw;     // dL/d(mixture weight)
        double share;  // weight / W, 0 when floored
    };
    const std::size_t pairs = index.pair_count();
    const auto rec = std::make_unique_for_overwrite<PairRecord[]>(pairs);
    const auto bvec = std::make_unique_for_overwrite<double[]>(nv * C);

    detail::for_each_staged_voxel(
        spec, index, part, set, class_count, cfg.parallel,
        [&](std::size_t v, const double* x, const detail::Stage& st) {
            const std::size_t base = index.voxel_offsets[v];
            const std::size_t n = st.local.size();
            double num[256];
            std::fill_n(num, class_count, 0.0);
            double pnz = 1.0, den = 0.0, empty = 1.0;
            std::uint32_t zeros = 0;
            double r_local[512];
            double* rs = n <= 512 ? r_local : nullptr;
            std::vector<double> r_heap;
            if (!rs) {
                r_heap.resize(n);
                rs = r_heap.data();
            }
            for (std::size_t s = 0; s < n; ++s) {
                const auto& g = st.params[st.local[s]];
                const double r = detail::evaluate(g, x).r;
                rs[s] = r;
                const double f = 1.0 - (weighted ? g.opacity * r : r);
                empty *= f;
                if (f == 0.0)
                    ++zeros;
                else
                    pnz *= f;
                const double w = g.opacity * g.norm * r;
                den += w;
                const double* c = st.classes.data() + static_cast<std::size_t>(st.local[s]) * C;
                for (std::size_t k = 0; k < C; ++k) num[k] += w * c[k];
            }
            const double alpha = 1.0 - empty;
            const bool floored = den < cfg.weight_floor;
            const double iw = floored ? 0.0 : 1.0 / den;
            const auto up = upstream.row(v);
            double* b = bvec.get() + v * C;
            double dalpha = -up[C], b_e = 0.0;
            for (std::size_t k = 0; k < C; ++k) {
                const double e = floored ? 1.0 / class_count : num[k] * iw;
                dalpha += up[k] * e;
                b[k] = alpha * up[k];
                b_e += b[k] * e;
            }
            for (std::size_t s = 0; s < n; ++s) {
                const auto& g = st.params[st.local[s]];
                const double r = rs[s];
                const double f = 1.0 - (weighted ? g.opacity * r : r);
                // product of the other factors
                const double others = zeros == 0 ? pnz / f : (zeros == 1 && f == 0.0) ? pnz : 0.0;
                const double* c = st.classes.data() + static_cast<std::size_t>(st.local[s]) * C;
                double bc = 0.0;
                for (std::size_t k = 0; k < C; ++k) bc += b[k] * c[k];
                rec[index.pair_rank[base + s]] = {r, dalpha * others, (bc - b_e) * iw, g.opacity * g.norm * r * iw};
            }
        });

    // Pass 2: one worker per Gaussian over its own pairs; no shared writes.
    const auto centers = std::make_unique_for_overwrite<double[]>(3 * nv);
    parallel_for(nv, cfg.parallel, [&](std::size_t begin, std::size_t end) {
        for (std::size_t v = begin; v < end; ++v) {
            const Vec3 c = spec.center(v);
            for (int a = 0; a < 3; ++a) centers[3 * v + static_cast<std::size_t>(a)] = c[a];
        }
    });
    SplatGradients out;
    out.gaussians.resize(gaussians.size());
    parallel_for(
        gaussians.size(), cfg.parallel,
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t gi = begin; gi < end; ++gi) {
                const auto& g = set.params[gi];
                double mean_adj[3] = {0, 0, 0};
                double prec_adj[6] = {0, 0, 0, 0, 0, 0};
                double op_adj = 0.0, norm_adj = 0.0;
                VecX cls_adj = VecX::Zero(class_count);
                for (std::size_t s = index.gaussian_offsets[gi]; s < index.gaussian_offsets[gi + 1]; ++s) {
                    const std::size_t v = index.gaussian_voxels[s];
                    const auto [r, dresp, dw, share] = rec[s];
                    const double* c = centers.get() + 3 * v;
                    const double d[3] = {c[0] - g.m[0], c[1] - g.m[1], c[2] - g.m[2]};
                    const double w = g.opacity * g.norm * r;

                    const double dr = dresp * (weighted ? g.opacity : 1.0) + dw * g.opacity * g.norm;
                    op_adj += (weighted ? dresp * r : 0.0) + dw * g.norm * r;
                    norm_adj += dw * w;
                    const double dq = -0.5 * r * dr;
                    const double pd0 = g.p[0] * d[0] + g.p[1] * d[1] + g.p[2] * d[2];
                    const double pd1 = g.p[1] * d[0] + g.p[3] * d[1] + g.p[4] * d[2];
                    const double pd2 = g.p[2] * d[0] + g.p[4] * d[1] + g.p[5] * d[2];
                    mean_adj[0] -= 2.0 * dq * pd0;
                    mean_adj[1] -= 2.0 * dq * pd1;
                    mean_adj[2] -= 2.0 * dq * pd2;
                    prec_adj[0] += dq * d[0] * d[0];
                    prec_adj[1] += dq * d[0] * d[1];
                    prec_adj[2] += dq * d[0] * d[2];
                    prec_adj[3] += dq * d[1] * d[1];
                    prec_adj[4] += dq * d[1] * d[2];
                    prec_adj[5] += dq * d[2] * d[2];
                    const double* b = bvec.get() + v * C;
                    for (std::size_t k = 0; k < C; ++k) cls_adj[static_cast<Eigen::Index>(k)] += share * b[k];
                }
                GaussianAdjoint adj;
                adj.mean = Vec3(mean_adj[0], mean_adj[1], mean_adj[2]);
                adj.precision << prec_adj[0], prec_adj[1], prec_adj[2], prec_adj[1], prec_adj[3], prec_adj[4],
                    prec_adj[2], prec_adj[4], prec_adj[5];
                adj.opacity = op_adj;
                adj.log_norm = norm_adj;
                adj.attributes = std::move(cls_adj);
                out.gaussians[gi] = finalize_gradient(gaussians[gi], set.covs[gi].rotation, adj);
            }
        },
        16);
    if (stats) stats->backward_pair_visits += pairs;
    return out;
}

inline SplatGradients splat_backward_blocked(std::span<const SemanticGaussian> gaussians, const GridSpec& spec,
                                             const SplatConfig& cfg, const FieldGradient& upstream,
                                             int class_count) {
    const auto index = neighbor_pairs(gaussians, spec, cfg.cutoff_sigma);
    return splat_backward_blocked(gaussians, spec, cfg, upstream, index, partition(spec, index, cfg.parallel),
                                  class_count);
}

// --- Benchmark harness -----------------------------------------------------

struct BenchReport {
    double naive_fwd_ms = 0, blocked_fwd_ms = 0, naive_bwd_ms = 0, blocked_bwd_ms = 0;
    double fwd_speedup = 0, bwd_speedup = 0;
    int threads = 0;
    unsigned hardware_threads = 0;
    std::array<int, 3> dims{};
    std::size_t gaussians = 0;
    std::size_t pairs = 0;
    int repetitions = 0;
    bool deterministic = true;

    nlohmann::json to_json() const {
        return {{"naive_fwd_ms", naive_fwd_ms},
                {"blocked_fwd_ms", blocked_fwd_ms},
                {"naive_bwd_ms", naive_bwd_ms},
                {"blocked_bwd_ms", blocked_bwd_ms},
                {"speedups", {{"forward", fwd_speedup}, {"backward", bwd_speedup}}},
                {"threads", threads},
                {"hardware_threads", hardware_threads},
                {"grid", dims},
                {"voxels", static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]},
                {"gaussians", gaussians},
                {"pairs", pairs},
                {"repetitions", repetitions},
                {"deterministic", deterministic}};
    }
};

namespace detail {

template <typename Fn>
double median_ms(int repetitions, Fn&& fn) {
    std::vector<double> t;
    for (int r = 0; r < repetitions; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(t.begin(), t.end());
    return t.size() % 2 ? t[t.size() / 2] : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
}

}  // namespace detail

/// Times naive and blocked passes on the same scene; medians of
/// `repetitions` runs. The neighbor index is shared; block partitioning is
/// charged to the blocked timings.
inline BenchReport bench(std::span<const SemanticGaussian> gaussians, const GridSpec& spec, const SplatConfig& cfg,
                         int class_count, const FieldGradient& upstream, int repetitions) {
    if (repetitions < 3) throw InvalidArgument("bench needs at least 3 repetitions");
    const auto index = neighbor_pairs(gaussians, spec, cfg.cutoff_sigma);
    BenchReport rep;
    rep.naive_fwd_ms = detail::median_ms(repetitions, [&] {
        auto f = splat_forward<float>(gaussians, spec, cfg, index, class_count);
        (void)f;
    });
    rep.blocked_fwd_ms = detail::median_ms(repetitions, [&] {
        auto f = splat_forward_blocked<float>(gaussians, spec, cfg, index, partition(spec, index, cfg.parallel),
                                              class_count);
        (void)f;
    });
    rep.naive_bwd_ms = detail::median_ms(repetitions, [&] {
        auto g = splat_backward(gaussians, spec, cfg, upstream, index, class_count);
        (void)g;
    });
    rep.blocked_bwd_ms = detail::median_ms(repetitions, [&] {
        auto g = splat_backward_blocked(gaussians, spec, cfg, upstream, index, partition(spec, index, cfg.parallel),
                                        class_count);
        (void)g;
    });
    rep.fwd_speedup = rep.naive_fwd_ms / rep.blocked_fwd_ms;
    rep.bwd_speedup = rep.naive_bwd_ms / rep.blocked_bwd_ms;
    rep.threads = cfg.parallel.resolved_threads();
    rep.hardware_threads = std::thread::hardware_concurrency();
    rep.dims = spec.dims;
    rep.gaussians = gaussians.size();
    rep.pairs = index.pair_count();
    rep.repetitions = repetitions;
    rep.deterministic = cfg.parallel.deterministic;
    return rep;
}

}  // namespace semocc
