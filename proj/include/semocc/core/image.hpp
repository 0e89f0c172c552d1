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

#include <cstddef>
#include <vector>

namespace semocc {

/// Row-major float image with interleaved channels.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.0f)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t index(int u, int v, int c = 0) const {
        return (static_cast<std::size_t>(v) * width + u) * channels + c;
    }
    float& at(int u, int v, int c = 0) { return data[index(u, v, c)]; }
    float at(int u, int v, int c = 0) const { return data[index(u, v, c)]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

}  // namespace semocc
