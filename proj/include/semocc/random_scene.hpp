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

// Seeded random Gaussian sets and upstream gradients for tests and benches.

#include <cstdint>
#include <random>
#include <vector>

#include "semocc/core/gaussian.hpp"
#include "semocc/core/grid.hpp"

namespace semocc {

struct RandomSceneSpec {
    std::size_t gaussian_count = 10;
    GridSpec grid;
    int class_count = 3;
    double min_scale = 0.2;
    double max_scale = 0.8;
    double min_opacity = 0.05;
    double max_opacity = 0.95;
    std::uint64_t seed = 0;
};

inline Vec4 random_unit_quaternion(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q;
    do {
        q = Vec4(n(rng), n(rng), n(rng), n(rng));
    } while (q.norm() < 1e-3);
    q.normalize();
    if (q[0] < 0) q = -q;
    return q;
}

inline std::vector<SemanticGaussian> random_gaussians(const RandomSceneSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const Vec3 ext = spec.grid.extent();
    std::vector<SemanticGaussian> out(spec.gaussian_count);
    for (auto& g : out) {
        for (int k = 0; k < 3; ++k) g.position[k] = spec.grid.origin[k] + u01(rng) * ext[k];
        g.rotation = random_unit_quaternion(rng);
        const double lmin = std::log(spec.min_scale), lmax = std::log(spec.max_scale);
        for (int k = 0; k < 3; ++k) g.scale[k] = std::exp(lmin + (lmax - lmin) * u01(rng));
        g.opacity = spec.min_opacity + (spec.max_opacity - spec.min_opacity) * u01(rng);
        VecX logits(spec.class_count);
        for (int c = 0; c < spec.class_count; ++c) logits[c] = 3.0 * (u01(rng) - 0.5);
        g.classes = softmax(logits);
        for (int k = 0; k < 3; ++k) g.velocity[k] = 2.0 * (u01(rng) - 0.5);
    }
    return out;
}

inline FieldGradient random_upstream(std::size_t voxels, int channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    FieldGradient g(voxels, channels);
    for (auto& v : g.data) v = u(rng);
    return g;
}

}  // namespace semocc
