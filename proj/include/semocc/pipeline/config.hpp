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

// Versioned fitting configuration. Every section and key is optional;
// unknown keys are rejected.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "semocc/core/parallel.hpp"
#include "semocc/pipeline/json_util.hpp"
#include "semocc/sampling_denoise.hpp"

namespace semocc {

inline constexpr int kConfigSchemaVersion = 1;

struct QueryConfig {
    int count = 100;
    int children = 4;
    double init_scale = 0.6;     // meters
    double child_spread = 0.5;   // meters, initial child offsets
    double min_scale = 0.05;
    double max_scale = 1.2;
    std::string init = "pretrained";  // pretrained | random
};

struct Stage1Config {
    int steps = 200;
    double noise_bound = 0.5;
    LossWeights weights;
    bool warp = true;
    int key_frame = 1;
};

struct Stage2Config {
    int steps = 1800;
    bool opacity_weighted = true;
    double cutoff_sigma = 3.0;
    double empty_fraction = 0.1;
    double class_weight_clip = 10.0;
    double neighbor_weight = 0.5;
    bool neighbors = true;
};

struct OptimizerConfig {
    double lr_geometry = 1e-2;
    double lr_logits = 1e-1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::string schedule = "cosine";  // cosine | constant
    double min_lr_fraction = 0.05;
};

struct PropagationConfig {
    std::string mode = "delta";  // delta | topk | none
    double delta = 1.6;
    double fraction = 0.5;
    int queue = 4;
    int steps_per_frame = 120;
};

struct FitConfig {
    std::uint64_t seed = 0;
    QueryConfig queries;
    Stage1Config stage1;
    Stage2Config stage2;
    OptimizerConfig optimizer;
    PropagationConfig propagation;
    Parallelism parallel;

    static FitConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

inline FitConfig FitConfig::from_json(const nlohmann::json& j) {
    using namespace json_util;
    allow_keys(j, {"schema_version", "seed", "queries", "stage1", "stage2", "optimizer", "propagation", "parallel"},
               "config");
    if (integer(j, "schema_version", kConfigSchemaVersion, "config") != kConfigSchemaVersion)
        throw SchemaError("config.schema_version: unsupported");
    FitConfig c;
    const long long seed = integer(j, "seed", 0, "config");
    if (seed < 0) throw SchemaError("config.seed: must be nonnegative");
    c.seed = static_cast<std::uint64_t>(seed);

    const json empty = json::object();
    const auto section = [&](const char* name) -> const json& { return j.contains(name) ? j[name] : empty; };

    {
        const auto& q = section("queries");
        const std::string w = "config.queries";
        allow_keys(q, {"count", "children", "init_scale", "child_spread", "min_scale", "max_scale", "init"}, w);
        c.queries.count = static_cast<int>(integer(q, "count", c.queries.count, w));
        c.queries.children = static_cast<int>(integer(q, "children", c.queries.children, w));
        c.queries.init_scale = number(q, "init_scale", c.queries.init_scale, w);
        c.queries.child_spread = number(q, "child_spread", c.queries.child_spread, w);
        c.queries.min_scale = number(q, "min_scale", c.queries.min_scale, w);
        c.queries.max_scale = number(q, "max_scale", c.queries.max_scale, w);
        c.queries.init = string(q, "init", c.queries.init, w);
        if (c.queries.count < 1 || c.queries.children < 1) throw SchemaError(w + ": count and children must be >= 1");
        if (!(c.queries.min_scale > 0 && c.queries.min_scale <= c.queries.init_scale &&
              c.queries.init_scale <= c.queries.max_scale))
            throw SchemaError(w + ": need 0 < min_scale <= init_scale <= max_scale");
        if (c.queries.init != "pretrained" && c.queries.init != "random")
            throw SchemaError(w + ".init: expected 'pretrained' or 'random'");
    }
    {
        const auto& s = section("stage1");
        const std::string w = "config.stage1";
        allow_keys(s, {"steps", "noise_bound", "weights", "warp", "key_frame"}, w);
        c.stage1.steps = static_cast<int>(integer(s, "steps", c.stage1.steps, w));
        c.stage1.noise_bound = number(s, "noise_bound", c.stage1.noise_bound, w);
        c.stage1.warp = boolean(s, "warp", c.stage1.warp, w);
        c.stage1.key_frame = static_cast<int>(integer(s, "key_frame", c.stage1.key_frame, w));
        if (s.contains("weights")) {
            const auto& lw = s["weights"];
            allow_keys(lw, {"denoise", "depth", "rgb"}, w + ".weights");
            c.stage1.weights.denoise = number(lw, "denoise", 1.0, w + ".weights");
            c.stage1.weights.depth = number(lw, "depth", 1.0, w + ".weights");
            c.stage1.weights.rgb = number(lw, "rgb", 1.0, w + ".weights");
        }
        if (c.stage1.steps < 0 || c.stage1.noise_bound < 0 || c.stage1.key_frame < 0)
            throw SchemaError(w + ": steps, noise_bound and key_frame must be nonnegative");
        try {
            c.stage1.weights.validate();
        } catch (const InvalidArgument& e) {
            throw SchemaError(w + ".weights: " + e.what());
        }
    }
    {
        const auto& s = section("stage2");
        const std::string w = "config.stage2";
        allow_keys(s, {"steps", "opacity_weighted", "cutoff_sigma", "empty_fraction", "class_weight_clip",
                       "neighbor_weight", "neighbors"},
                   w);
        c.stage2.steps = static_cast<int>(integer(s, "steps", c.stage2.steps, w));
        c.stage2.opacity_weighted = boolean(s, "opacity_weighted", c.stage2.opacity_weighted, w);
        c.stage2.cutoff_sigma = number(s, "cutoff_sigma", c.stage2.cutoff_sigma, w);
        c.stage2.empty_fraction = number(s, "empty_fraction", c.stage2.empty_fraction, w);
        c.stage2.class_weight_clip = number(s, "class_weight_clip", c.stage2.class_weight_clip, w);
        c.stage2.neighbor_weight = number(s, "neighbor_weight", c.stage2.neighbor_weight, w);
        c.stage2.neighbors = boolean(s, "neighbors", c.stage2.neighbors, w);
        if (c.stage2.steps < 0 || !(c.stage2.cutoff_sigma > 0) || !(c.stage2.empty_fraction > 0) ||
            c.stage2.empty_fraction > 1 || !(c.stage2.class_weight_clip >= 1) || c.stage2.neighbor_weight < 0)
            throw SchemaError(w + ": value out of range");
    }
    {
        const auto& o = section("optimizer");
        const std::string w = "config.optimizer";
        allow_keys(o, {"lr_geometry", "lr_logits", "beta1", "beta2", "eps", "schedule", "min_lr_fraction"}, w);
        c.optimizer.lr_geometry = number(o, "lr_geometry", c.optimizer.lr_geometry, w);
        c.optimizer.lr_logits = number(o, "lr_logits", c.optimizer.lr_logits, w);
        c.optimizer.beta1 = number(o, "beta1", c.optimizer.beta1, w);
        c.optimizer.beta2 = number(o, "beta2", c.optimizer.beta2, w);
        c.optimizer.eps = number(o, "eps", c.optimizer.eps, w);
        c.optimizer.schedule = string(o, "schedule", c.optimizer.schedule, w);
        c.optimizer.min_lr_fraction = number(o, "min_lr_fraction", c.optimizer.min_lr_fraction, w);
        if (!(c.optimizer.lr_geometry >= 0 && c.optimizer.lr_logits >= 0 && c.optimizer.beta1 >= 0 &&
              c.optimizer.beta1 < 1 && c.optimizer.beta2 >= 0 && c.optimizer.beta2 < 1 && c.optimizer.eps > 0 &&
              c.optimizer.min_lr_fraction >= 0 && c.optimizer.min_lr_fraction <= 1))
            throw SchemaError(w + ": value out of range");
        if (c.optimizer.schedule != "cosine" && c.optimizer.schedule != "constant")
            throw SchemaError(w + ".schedule: expected 'cosine' or 'constant'");
    }
    {
        const auto& p = section("propagation");
        const std::string w = "config.propagation";
        allow_keys(p, {"mode", "delta", "fraction", "queue", "steps_per_frame"}, w);
        c.propagation.mode = string(p, "mode", c.propagation.mode, w);
        c.propagation.delta = number(p, "delta", c.propagation.delta, w);
        c.propagation.fraction = number(p, "fraction", c.propagation.fraction, w);
        c.propagation.queue = static_cast<int>(integer(p, "queue", c.propagation.queue, w));
        c.propagation.steps_per_frame = static_cast<int>(integer(p, "steps_per_frame", c.propagation.steps_per_frame, w));
        if (c.propagation.mode != "delta" && c.propagation.mode != "topk" && c.propagation.mode != "none")
            throw SchemaError(w + ".mode: expected 'delta', 'topk' or 'none'");
        if (!(c.propagation.delta >= 0) || !(c.propagation.fraction >= 0 && c.propagation.fraction <= 1) ||
            c.propagation.queue < 1 || c.propagation.steps_per_frame < 0)
            throw SchemaError(w + ": value out of range");
    }
    {
        const auto& p = section("parallel");
        const std::string w = "config.parallel";
        allow_keys(p, {"threads", "deterministic"}, w);
        c.parallel.threads = static_cast<int>(integer(p, "threads", 0, w));
        c.parallel.deterministic = boolean(p, "deterministic", true, w);
        if (c.parallel.threads < 0) throw SchemaError(w + ".threads: must be nonnegative");
    }
    return c;
}

inline nlohmann::json FitConfig::to_json() const {
    return {{"schema_version", kConfigSchemaVersion},
            {"seed", seed},
            {"queries",
             {{"count", queries.count},
              {"children", queries.children},
              {"init_scale", queries.init_scale},
              {"child_spread", queries.child_spread},
              {"min_scale", queries.min_scale},
              {"max_scale", queries.max_scale},
              {"init", queries.init}}},
            {"stage1",
             {{"steps", stage1.steps},
              {"noise_bound", stage1.noise_bound},
              {"weights", {{"denoise", stage1.weights.denoise}, {"depth", stage1.weights.depth}, {"rgb", stage1.weights.rgb}}},
              {"warp", stage1.warp},
              {"key_frame", stage1.key_frame}}},
            {"stage2",
             {{"steps", stage2.steps},
              {"opacity_weighted", stage2.opacity_weighted},
              {"cutoff_sigma", stage2.cutoff_sigma},
              {"empty_fraction", stage2.empty_fraction},
              {"class_weight_clip", stage2.class_weight_clip},
              {"neighbor_weight", stage2.neighbor_weight},
              {"neighbors", stage2.neighbors}}},
            {"optimizer",
             {{"lr_geometry", optimizer.lr_geometry},
              {"lr_logits", optimizer.lr_logits},
              {"beta1", optimizer.beta1},
              {"beta2", optimizer.beta2},
              {"eps", optimizer.eps},
              {"schedule", optimizer.schedule},
              {"min_lr_fraction", optimizer.min_lr_fraction}}},
            {"propagation",
             {{"mode", propagation.mode},
              {"delta", propagation.delta},
              {"fraction", propagation.fraction},
              {"queue", propagation.queue},
              {"steps_per_frame", propagation.steps_per_frame}}},
            {"parallel", {{"threads", parallel.threads}, {"deterministic", parallel.deterministic}}}};
}

}  // namespace semocc
