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

// Denoising pretraining targets and losses: furthest point sampling,
// uniform-noise query initialization, the denoising term and the weighted
// pretraining objective.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "semocc/core/types.hpp"

namespace semocc {

struct FpsOptions {
    /// Pick the first point uniformly at random with this seed instead of index 0.
    std::optional<std::uint64_t> random_start_seed;
};

/// Greedy max-min sampling. Returns indices into `points` in selection
/// order. Ties go to the lowest index.
inline std::vector<std::size_t> fps_indices(std::span<const Vec3> points, std::size_t k, FpsOptions opts = {}) {
    const std::size_t n = points.size();
    if (n == 0 || k == 0 || k > n) throw InvalidSampleCount("fps requires 1 <= K <= N");
    std::size_t first = 0;
    if (opts.random_start_seed) {
        std::mt19937_64 rng(*opts.random_start_seed);
        first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    std::vector<std::size_t> picked{first};
    picked.reserve(k);
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<bool> taken(n, false);
    taken[first] = true;
    std::size_t last = first;
    while (picked.size() < k) {
        std::size_t best = 0;
        double best_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            dist[i] = std::min(dist[i], (points[i] - points[last]).squaredNorm());
            if (dist[i] > best_d) {
                best_d = dist[i];
                best = i;
            }
        }
        picked.push_back(best);
        taken[best] = true;
        last = best;
    }
    return picked;
}

inline std::vector<Vec3> fps(std::span<const Vec3> points, std::size_t k, FpsOptions opts = {}) {
    std::vector<Vec3> out;
    for (auto i : fps_indices(points, k, opts)) out.push_back(points[i]);
    return out;
}

inline std::vector<Vec3> noise_init(std::span<const Vec3> targets, double bound, std::uint64_t seed) {
    if (!(bound >= 0)) throw InvalidArgument("noise bound must be nonnegative");
    std::vector<Vec3> out(targets.begin(), targets.end());
    if (bound == 0) return out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& p : out)
        for (int c = 0; c < 3; ++c) p[c] += u(rng);
    return out;
}

struct DenoiseBatch {
    std::vector<Vec3> clean_targets;
    std::vector<Vec3> noised_init;
    double noise_bound = 0.0;

    static DenoiseBatch make(std::span<const Vec3> points, std::size_t k, double bound, std::uint64_t seed,
                             FpsOptions opts = {}) {
        DenoiseBatch b;
        b.clean_targets = fps(points, k, opts);
        b.noised_init = noise_init(b.clean_targets, bound, seed);
        b.noise_bound = bound;
        return b;
    }
};

struct LossWeights {
    double denoise = 1.0;
    double depth = 1.0;
    double rgb = 1.0;

    void validate() const {
        if (denoise < 0 || depth < 0 || rgb < 0) throw InvalidArgument("loss weights must be nonnegative");
        if (!(denoise > 0 || depth > 0 || rgb > 0)) throw InvalidArgument("at least one loss weight must be positive");
    }
};

struct DenoiseLoss {
    double value = 0.0;
    std::vector<Vec3> grad;  // w.r.t. offsets
};

/// Sum over i of |target_i - (init_i + offset_i)|, index-aligned. The
/// subgradient at exact coincidence is zero.
inline DenoiseLoss denoise_loss(const DenoiseBatch& batch, std::span<const Vec3> offsets) {
    const std::size_t k = batch.clean_targets.size();
    if (batch.noised_init.size() != k || offsets.size() != k) throw ShapeMismatch("denoise batch shape mismatch");
    DenoiseLoss out;
    out.grad.assign(k, Vec3::Zero());
    for (std::size_t i = 0; i < k; ++i) {
        const Vec3 r = batch.noised_init[i] + offsets[i] - batch.clean_targets[i];
        const double n = r.norm();
        out.value += n;
        if (n > 0) out.grad[i] = r / n;
    }
    return out;
}

inline double pretrain_loss(const LossWeights& w, double denoise, double depth, double rgb) {
    if (!std::isfinite(denoise) || !std::isfinite(depth) || !std::isfinite(rgb))
        throw InvalidLoss("non-finite loss component");
    return w.denoise * denoise + w.depth * depth + w.rgb * rgb;
}

}  // namespace semocc
