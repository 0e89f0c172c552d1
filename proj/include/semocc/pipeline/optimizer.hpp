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
#include <numbers>

#include "semocc/core/types.hpp"
#include "semocc/pipeline/config.hpp"

namespace semocc {

/// Adam over one flat parameter vector. Each entry has its own base
/// learning rate; the schedule scales all of them together. Bias
/// correction uses 1 - beta^t with t counted from 1.
struct OptimizerState {
    VecX m;
    VecX v;
    VecX base_lr;
    long step = 0;
    long total_steps = 1;
    OptimizerConfig cfg;

    OptimizerState() = default;
    OptimizerState(VecX lr, long total, const OptimizerConfig& c)
        : m(VecX::Zero(lr.size())), v(VecX::Zero(lr.size())), base_lr(std::move(lr)),
          total_steps(std::max(1L, total)), cfg(c) {}

    /// Multiplier applied to base_lr at the current step.
    double schedule() const {
        if (cfg.schedule == "constant") return 1.0;
        const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
        const double lo = cfg.min_lr_fraction;
        return lo + (1.0 - lo) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }

    void apply(VecX& params, const VecX& grad) {
        if (grad.size() != params.size() || params.size() != m.size())
            throw ShapeMismatch("optimizer state does not match the parameters");
        if (!grad.allFinite()) throw InvalidGradient("non-finite gradient");
        const double s = schedule();
        ++step;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        for (Eigen::Index i = 0; i < params.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            params[i] -= s * base_lr[i] * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
        }
    }

    bool moments_finite() const { return m.allFinite() && v.allFinite(); }
};

}  // namespace semocc
