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

// Everything: core types and I/O, splatting kernels, rendering, sampling,
// propagation, metrics and the fitting pipeline.

#include "semocc/blocked_splatting.hpp"
#include "semocc/metrics.hpp"
#include "semocc/pipeline/config.hpp"
#include "semocc/pipeline/fit.hpp"
#include "semocc/pipeline/optimizer.hpp"
#include "semocc/pipeline/queries.hpp"
#include "semocc/pipeline/scene.hpp"
#include "semocc/propagation.hpp"
#include "semocc/random_scene.hpp"
#include "semocc/rendering.hpp"
#include "semocc/sampling_denoise.hpp"
#include "semocc/splatting.hpp"
