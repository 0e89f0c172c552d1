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

// Little-endian binary formats:
//
//   SGAU  u32 version=1, u32 count, u32 C, then per Gaussian f32
//         pos[3] rot[4] scale[3] opacity classes[C] velocity[3]
//   SVOX  u32 version=1, u32 dims[3], f32 origin[3], f32 voxel_size[3], u32 C,
//         then dims-product u8 labels (x fastest)
//   SPTS  u32 version=1, u32 count, then f32 xyz triples
//   SIMG  u32 version=1, u32 width, height, channels, f32 data row-major

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semocc/core/gaussian.hpp"
#include "semocc/core/grid.hpp"
#include "semocc/core/image.hpp"

namespace semocc::io {

inline constexpr std::uint32_t kFormatVersion = 1;

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
public:
    void magic(std::string_view m) { out_.insert(out_.end(), m.begin(), m.end()); }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int s = 0; s < 32; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void f32(double v) {
        const auto f = static_cast<float>(v);
        if (!std::isfinite(f)) throw NonFiniteValue("refusing to write a non-finite value");
        u32(std::bit_cast<std::uint32_t>(f));
    }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void expect_header(std::string_view magic) {
        need(magic.size());
        if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0)
            throw BadMagic("expected magic " + std::string(magic));
        pos_ += magic.size();
        const std::uint32_t version = u32();
        if (version != kFormatVersion)
            throw VersionMismatch("unsupported version " + std::to_string(version) + " for " + std::string(magic));
    }
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int s = 0; s < 4; ++s) v |= static_cast<std::uint32_t>(bytes_[pos_ + s]) << (8 * s);
        pos_ += 4;
        return v;
    }
    double f32() {
        const float f = std::bit_cast<float>(u32());
        if (!std::isfinite(f)) throw NonFiniteValue("non-finite value in payload");
        return f;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    void need(std::size_t n) const {
        if (remaining() < n) throw TruncatedPayload("payload truncated");
    }
    void expect_end() const {
        if (remaining() != 0) throw FormatError("trailing bytes after payload");
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const Bytes& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// --- Gaussian sets ---------------------------------------------------------

inline Bytes encode_gaussians(std::span<const SemanticGaussian> gaussians, int class_count) {
    ByteWriter w;
    w.magic("SGAU");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(gaussians.size()));
    w.u32(static_cast<std::uint32_t>(class_count));
    for (const auto& g : gaussians) {
        if (g.class_count() != class_count) throw ShapeMismatch("Gaussian class count differs from set");
        for (int k = 0; k < 3; ++k) w.f32(g.position[k]);
        for (int k = 0; k < 4; ++k) w.f32(g.rotation[k]);
        for (int k = 0; k < 3; ++k) w.f32(g.scale[k]);
        w.f32(g.opacity);
        for (int k = 0; k < class_count; ++k) w.f32(g.classes[k]);
        for (int k = 0; k < 3; ++k) w.f32(g.velocity[k]);
    }
    return w.take();
}

struct GaussianSet {
    int class_count = 0;
    std::vector<SemanticGaussian> gaussians;
};

inline GaussianSet decode_gaussians(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_header("SGAU");
    const std::uint32_t count = r.u32();
    GaussianSet set;
    set.class_count = static_cast<int>(r.u32());
    r.need(static_cast<std::size_t>(count) * 4u * (14u + static_cast<std::size_t>(set.class_count)));
    set.gaussians.resize(count);
    for (auto& g : set.gaussians) {
        for (int k = 0; k < 3; ++k) g.position[k] = r.f32();
        for (int k = 0; k < 4; ++k) g.rotation[k] = r.f32();
        for (int k = 0; k < 3; ++k) g.scale[k] = r.f32();
        g.opacity = r.f32();
        g.classes.resize(set.class_count);
        for (int k = 0; k < set.class_count; ++k) g.classes[k] = r.f32();
        for (int k = 0; k < 3; ++k) g.velocity[k] = r.f32();
    }
    r.expect_end();
    return set;
}

inline void write_gaussians(const std::filesystem::path& path, std::span<const SemanticGaussian> g, int class_count) {
    write_file(path, encode_gaussians(g, class_count));
}
inline GaussianSet read_gaussians(const std::filesystem::path& path) { return decode_gaussians(read_file(path)); }

// --- Voxel grids -----------------------------------------------------------

inline Bytes encode_grid(const VoxelGrid& grid) {
    if (grid.labels.size() != grid.spec.voxel_count()) throw ShapeMismatch("label count differs from dims");
    ByteWriter w;
    w.magic("SVOX");
    w.u32(kFormatVersion);
    for (int k = 0; k < 3; ++k) w.u32(static_cast<std::uint32_t>(grid.spec.dims[k]));
    for (int k = 0; k < 3; ++k) w.f32(grid.spec.origin[k]);
    for (int k = 0; k < 3; ++k) w.f32(grid.spec.voxel_size[k]);
    w.u32(static_cast<std::uint32_t>(grid.class_count));
    for (auto l : grid.labels) w.u8(l);
    return w.take();
}

inline VoxelGrid decode_grid(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_header("SVOX");
    GridSpec spec;
    for (int k = 0; k < 3; ++k) spec.dims[k] = static_cast<int>(r.u32());
    for (int k = 0; k < 3; ++k) spec.origin[k] = r.f32();
    for (int k = 0; k < 3; ++k) spec.voxel_size[k] = r.f32();
    const int classes = static_cast<int>(r.u32());
    if (classes > 255) throw FormatError("class count exceeds u8 label range");
    r.need(spec.voxel_count());
    VoxelGrid grid(spec, classes);
    for (auto& l : grid.labels) {
        l = r.u8();
        if (l > classes) throw FormatError("label out of range");
    }
    r.expect_end();
    return grid;
}

inline void write_grid(const std::filesystem::path& path, const VoxelGrid& grid) { write_file(path, encode_grid(grid)); }
inline VoxelGrid read_grid(const std::filesystem::path& path) { return decode_grid(read_file(path)); }

// --- Point clouds ----------------------------------------------------------

inline Bytes encode_points(std::span<const Vec3> points) {
    ByteWriter w;
    w.magic("SPTS");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(points.size()));
    for (const auto& p : points)
        for (int k = 0; k < 3; ++k) w.f32(p[k]);
    return w.take();
}

inline std::vector<Vec3> decode_points(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_header("SPTS");
    const std::uint32_t count = r.u32();
    r.need(static_cast<std::size_t>(count) * 12u);
    std::vector<Vec3> pts(count);
    for (auto& p : pts)
        for (int k = 0; k < 3; ++k) p[k] = r.f32();
    r.expect_end();
    return pts;
}

inline void write_points(const std::filesystem::path& path, std::span<const Vec3> pts) {
    write_file(path, encode_points(pts));
}
inline std::vector<Vec3> read_points(const std::filesystem::path& path) { return decode_points(read_file(path)); }

// --- Images ----------------------------------------------------------------

inline Bytes encode_image(const Image& img) {
    ByteWriter w;
    w.magic("SIMG");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(img.width));
    w.u32(static_cast<std::uint32_t>(img.height));
    w.u32(static_cast<std::uint32_t>(img.channels));
    for (float v : img.data) w.f32(v);
    return w.take();
}

inline Image decode_image(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_header("SIMG");
    const int w = static_cast<int>(r.u32());
    const int h = static_cast<int>(r.u32());
    const int c = static_cast<int>(r.u32());
    Image img(w, h, c);
    r.need(img.data.size() * 4u);
    for (auto& v : img.data) v = static_cast<float>(r.f32());
    r.expect_end();
    return img;
}

inline void write_image(const std::filesystem::path& path, const Image& img) { write_file(path, encode_image(img)); }
inline Image read_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }

}  // namespace semocc::io
