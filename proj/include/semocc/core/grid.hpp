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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "semocc/core/types.hpp"

namespace semocc {

/// Geometry of a dense voxel grid. Index (i, j, k) is stored at
/// i + dims[0] * (j + dims[1] * k), x fastest.
struct GridSpec {
    Vec3 origin = Vec3::Zero();  // min corner
    Vec3 voxel_size = Vec3::Constant(0.5);
    std::array<int, 3> dims{1, 1, 1};

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }
    std::size_t linear(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
    }
    std::array<int, 3> unravel(std::size_t v) const {
        const auto nx = static_cast<std::size_t>(dims[0]);
        const auto ny = static_cast<std::size_t>(dims[1]);
        return {static_cast<int>(v % nx), static_cast<int>((v / nx) % ny), static_cast<int>(v / (nx * ny))};
    }
    Vec3 center(int i, int j, int k) const {
        return origin + Vec3(i + 0.5, j + 0.5, k + 0.5).cwiseProduct(voxel_size);
    }
    Vec3 center(std::size_t v) const {
        const auto [i, j, k] = unravel(v);
        return center(i, j, k);
    }
    Vec3 extent() const { return Vec3(dims[0], dims[1], dims[2]).cwiseProduct(voxel_size); }
    bool contains(int i, int j, int k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
    }
    bool same_shape(const GridSpec& o) const {
        return dims == o.dims && origin.isApprox(o.origin, 1e-9) && voxel_size.isApprox(o.voxel_size, 1e-9);
    }
};

/// Dense labeled grid. Label `class_count` marks an empty voxel.
struct VoxelGrid {
    GridSpec spec;
    int class_count = 0;
    std::vector<std::uint8_t> labels;

    VoxelGrid() = default;
    VoxelGrid(GridSpec s, int classes)
        : spec(s), class_count(classes), labels(s.voxel_count(), static_cast<std::uint8_t>(classes)) {}

    std::uint8_t empty_label() const { return static_cast<std::uint8_t>(class_count); }
    bool occupied(std::size_t v) const { return labels[v] != empty_label(); }
    std::size_t occupied_count() const {
        std::size_t n = 0;
        for (std::size_t v = 0; v < labels.size(); ++v) n += occupied(v) ? 1 : 0;
        return n;
    }
};

/// Per-voxel (C+1)-vectors [alpha * e ; 1 - alpha], voxel-major.
template <typename Scalar>
struct basic_occupancy_field {
    std::size_t voxels = 0;
    int channels = 0;
    std::vector<Scalar> data;

    basic_occupancy_field() = default;
    basic_occupancy_field(std::size_t n, int c) : voxels(n), channels(c), data(n * static_cast<std::size_t>(c), 0) {}

    std::span<Scalar> row(std::size_t v) {
        return {data.data() + v * static_cast<std::size_t>(channels), static_cast<std::size_t>(channels)};
    }
    std::span<const Scalar> row(std::size_t v) const {
        return {data.data() + v * static_cast<std::size_t>(channels), static_cast<std::size_t>(channels)};
    }
    int class_count() const { return channels - 1; }
};

using OccupancyField = basic_occupancy_field<float>;
using FieldGradient = basic_occupancy_field<double>;

/// Labels every voxel with the argmax channel (lowest index wins ties);
/// channel C is the empty label.
template <typename Scalar>
VoxelGrid argmax_labels(const basic_occupancy_field<Scalar>& field, const GridSpec& spec) {
    VoxelGrid grid(spec, field.class_count());
    for (std::size_t v = 0; v < field.voxels; ++v) {
        const auto r = field.row(v);
        int best = 0;
        for (int c = 1; c < field.channels; ++c)
            if (r[static_cast<std::size_t>(c)] > r[static_cast<std::size_t>(best)]) best = c;
        grid.labels[v] = static_cast<std::uint8_t>(best);
    }
    return grid;
}

}  // namespace semocc
