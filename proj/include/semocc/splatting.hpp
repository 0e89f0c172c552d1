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

// Reference Gaussian-to-voxel splatting.
//
// A voxel center x is occupied with probability
//     alpha(x) = 1 - prod_i (1 - alpha(x; G_i)),
//     alpha(x; G) = [a] * exp(-1/2 (x - m)^T Sigma^-1 (x - m)),
// (the opacity factor a only in opacity-weighted mode) and its class
// distribution is the opacity-weighted mixture of normalized Gaussian
// densities. The per-voxel output is [alpha * e ; 1 - alpha].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "semocc/core/adjoint.hpp"
#include "semocc/core/gaussian.hpp"
#include "semocc/core/grid.hpp"
#include "semocc/core/parallel.hpp"

namespace semocc {

struct SplatConfig {
    double cutoff_sigma = 3.0;
    bool opacity_weighted = true;
    double weight_floor = 1e-12;
    Parallelism parallel;
};

inline const double kInvSqrtTwoPiCubed = 1.0 / std::pow(2.0 * std::numbers::pi, 1.5);

/// Sigma = R S S^T R^T with cached inverse and determinant.
struct Covariance {
    Mat3 sigma;
    Mat3 inverse;
    double determinant = 1.0;
    Mat3 rotation;
    Vec3 scale;

    /// 1 / ((2 pi)^{3/2} |Sigma|^{1/2})
    double density_norm() const { return kInvSqrtTwoPiCubed / (scale[0] * scale[1] * scale[2]); }
};

inline Covariance covariance_from(const Vec4& rotation, const Vec3& scale) {
    Covariance c;
    c.rotation = quat_to_matrix(rotation);
    c.scale = scale;
    c.sigma = c.rotation * scale.array().square().matrix().asDiagonal() * c.rotation.transpose();
    c.inverse = c.rotation * scale.array().square().inverse().matrix().asDiagonal() * c.rotation.transpose();
    const double sdet = scale[0] * scale[1] * scale[2];
    c.determinant = sdet * sdet;
    return c;
}

inline Covariance covariance_from(const SemanticGaussian& g) { return covariance_from(g.rotation, g.scale); }

inline std::vector<Covariance> covariances_of(std::span<const SemanticGaussian> gaussians) {
    std::vector<Covariance> out;
    out.reserve(gaussians.size());
    for (const auto& g : gaussians) out.push_back(covariance_from(g));
    return out;
}

inline double mahalanobis_sq(const Vec3& x, const Vec3& mean, const Mat3& precision) {
    const Vec3 d = x - mean;
    return d.dot(precision * d);
}

inline double gaussian_response(const Vec3& x, const SemanticGaussian& g, const Covariance& cov,
                                bool opacity_weighted) {
    const double r = std::exp(-0.5 * mahalanobis_sq(x, g.position, cov.inverse));
    return opacity_weighted ? g.opacity * r : r;
}

inline double gaussian_response(const Vec3& x, const SemanticGaussian& g, bool opacity_weighted) {
    return gaussian_response(x, g, covariance_from(g), opacity_weighted);
}

inline double occupancy_prob(const Vec3& x, std::span<const SemanticGaussian> neighbors, bool opacity_weighted) {
    double empty = 1.0;
    for (const auto& g : neighbors) empty *= 1.0 - gaussian_response(x, g, opacity_weighted);
    return 1.0 - empty;
}

struct ClassMixture {
    VecX distribution;
    bool floored = false;  // denominator under weight_floor; distribution is uniform
};

inline ClassMixture class_mixture(const Vec3& x, std::span<const SemanticGaussian> neighbors, int class_count,
                                  double weight_floor = 1e-12) {
    VecX num = VecX::Zero(class_count);
    double den = 0.0;
    for (const auto& g : neighbors) {
        const Covariance cov = covariance_from(g);
        const double w =
            g.opacity * cov.density_norm() * std::exp(-0.5 * mahalanobis_sq(x, g.position, cov.inverse));
        num += w * g.classes;
        den += w;
    }
    if (den < weight_floor || class_count == 0)
        return {VecX::Constant(class_count, class_count ? 1.0 / class_count : 0.0), true};
    return {num / den, false};
}

/// Gaussian/voxel interaction pairs in both directions (CSR).
struct NeighborIndex {
    std::vector<std::size_t> voxel_offsets;  // voxel_count + 1
    std::vector<std::uint32_t> voxel_gaussians;
    std::vector<std::size_t> gaussian_offsets;  // gaussian_count + 1
    std::vector<std::uint32_t> gaussian_voxels;
    std::vector<std::size_t> pair_rank;  // gaussian-major position of each voxel-major pair

    std::size_t pair_count() const { return voxel_gaussians.size(); }
    std::span<const std::uint32_t> gaussians_of(std::size_t v) const {
        return {voxel_gaussians.data() + voxel_offsets[v], voxel_offsets[v + 1] - voxel_offsets[v]};
    }
    std::span<const std::uint32_t> voxels_of(std::size_t g) const {
        return {gaussian_voxels.data() + gaussian_offsets[g], gaussian_offsets[g + 1] - gaussian_offsets[g]};
    }
};

/// True iff x lies in the box of half-extent cutoff_sigma * s_k along each
/// principal axis k of the Gaussian.
inline bool inside_cutoff_box(const Vec3& x, const Vec3& mean, const Mat3& rotation, const Vec3& scale,
                              double cutoff_sigma) {
    const Vec3 local = rotation.transpose() * (x - mean);
    for (int k = 0; k < 3; ++k)
        if (std::abs(local[k]) > cutoff_sigma * scale[k]) return false;
    return true;
}

inline NeighborIndex neighbor_pairs(std::span<const SemanticGaussian> gaussians, const GridSpec& spec,
                                    double cutoff_sigma) {
    if (!(cutoff_sigma > 0)) throw InvalidArgument("cutoff_sigma must be positive");
    NeighborIndex idx;
    idx.gaussian_offsets.assign(gaussians.size() + 1, 0);
    std::vector<std::size_t> voxel_counts(spec.voxel_count(), 0);

    for (std::size_t gi = 0; gi < gaussians.size(); ++gi) {
        const auto& g = gaussians[gi];
        const Mat3 rot = quat_to_matrix(g.rotation);
        // World-axis half-extent of the oriented box.
        const Vec3 half = cutoff_sigma * (rot.cwiseAbs() * g.scale);
        std::array<int, 3> lo{}, hi{};
        bool empty = false;
        for (int a = 0; a < 3; ++a) {
            const double l = (g.position[a] - half[a] - spec.origin[a]) / spec.voxel_size[a] - 0.5;
            const double h = (g.position[a] + half[a] - spec.origin[a]) / spec.voxel_size[a] - 0.5;
            // One voxel of slack on each side; the exact test below decides.
            if (!(h >= -1.0) || !(l <= spec.dims[a])) {
                empty = true;
                break;
            }
            lo[a] = static_cast<int>(std::max(0.0, std::floor(l)));
            hi[a] = static_cast<int>(std::min<double>(spec.dims[a] - 1, std::ceil(h)));
            if (lo[a] > hi[a]) empty = true;
        }
        if (!empty) {
            for (int k = lo[2]; k <= hi[2]; ++k)
                for (int j = lo[1]; j <= hi[1]; ++j)
                    for (int i = lo[0]; i <= hi[0]; ++i)
                        if (inside_cutoff_box(spec.center(i, j, k), g.position, rot, g.scale, cutoff_sigma)) {
                            const std::size_t v = spec.linear(i, j, k);
                            idx.gaussian_voxels.push_back(static_cast<std::uint32_t>(v));
                            ++voxel_counts[v];
                        }
        }
        idx.gaussian_offsets[gi + 1] = idx.gaussian_voxels.size();
    }

    // Transpose. Gaussians are visited in ascending order, so every voxel
    // list comes out sorted.
    idx.voxel_offsets.assign(spec.voxel_count() + 1, 0);
    for (std::size_t v = 0; v < voxel_counts.size(); ++v) idx.voxel_offsets[v + 1] = idx.voxel_offsets[v] + voxel_counts[v];
    idx.voxel_gaussians.resize(idx.gaussian_voxels.size());
    idx.pair_rank.resize(idx.gaussian_voxels.size());
    std::vector<std::size_t> cursor(idx.voxel_offsets.begin(), idx.voxel_offsets.end() - 1);
    for (std::size_t gi = 0; gi < gaussians.size(); ++gi)
        for (std::size_t s = idx.gaussian_offsets[gi]; s < idx.gaussian_offsets[gi + 1]; ++s) {
            const std::size_t slot = cursor[idx.gaussian_voxels[s]]++;
            idx.voxel_gaussians[slot] = static_cast<std::uint32_t>(gi);
            idx.pair_rank[slot] = s;
        }
    return idx;
}

struct SplatGradients {
    std::vector<GaussianGradient> gaussians;
};

namespace detail {

inline void check_upstream(const FieldGradient& upstream, std::size_t voxels, int channels) {
    if (upstream.voxels != voxels || upstream.channels != channels)
        throw ShapeMismatch("upstream gradient is not shaped like the occupancy field");
    for (double u : upstream.data)
        if (!std::isfinite(u)) throw InvalidGradient("non-finite upstream gradient");
}

inline void check_classes(std::span<const SemanticGaussian> gaussians, int class_count) {
    if (class_count < 1 || class_count > 255) throw InvalidArgument("class count must be in [1, 255]");
    for (const auto& g : gaussians)
        if (g.class_count() != class_count) throw ShapeMismatch("Gaussians disagree on class count");
}

}  // namespace detail

inline int class_count_of(std::span<const SemanticGaussian> gaussians, int fallback = 0) {
    return gaussians.empty() ? fallback : gaussians.front().class_count();
}

/// Reference forward pass over a precomputed neighbor index.
template <typename Scalar = float>
basic_occupancy_field<Scalar> splat_forward(std::span<const SemanticGaussian> gaussians, const GridSpec& spec,
                                            const SplatConfig& cfg, const NeighborIndex& index, int class_count) {
    detail::check_classes(gaussians, class_count);
    const auto covs = covariances_of(gaussians);
    basic_occupancy_field<Scalar> field(spec.voxel_count(), class_count + 1);
    parallel_for(spec.voxel_count(), cfg.parallel, [&](std::size_t begin, std::size_t end) {
        VecX num(class_count);
        for (std::size_t v = begin; v < end; ++v) {
            const Vec3 x = spec.center(v);
            const auto ids = index.gaussians_of(v);
            double empty = 1.0;
            for (auto id : ids) empty *= 1.0 - gaussian_response(x, gaussians[id], covs[id], cfg.opacity_weighted);
            const double alpha = 1.0 - empty;

            num.setZero();
            double den = 0.0;
            for (auto id : ids) {
                const double w = gaussians[id].opacity * covs[id].density_norm() *
                                 std::exp(-0.5 * mahalanobis_sq(x, gaussians[id].position, covs[id].inverse));
                num += w * gaussians[id].classes;
                den += w;
            }
            auto row = field.row(v);
            const bool floored = den < cfg.weight_floor;
            for (int c = 0; c < class_count; ++c)
                row[static_cast<std::size_t>(c)] =
                    static_cast<Scalar>(alpha * (floored ? 1.0 / class_count : num[c] / den));
            row[static_cast<std::size_t>(class_count)] = static_cast<Scalar>(1.0 - alpha);
        }
    });
    return field;
}

template <typename Scalar = float>
basic_occupancy_field<Scalar> splat_forward(std::span<const SemanticGaussian> gaussians, const GridSpec& spec,
                                            const SplatConfig& cfg, int class_count) {
    return splat_forward<Scalar>(gaussians, spec, cfg, neighbor_pairs(gaussians, spec, cfg.cutoff_sigma),
                                 class_count);
}

/// Reference backward pass: gradient of L = sum_v <upstream_v, field_v> with
/// respect to every raw Gaussian parameter. Single-threaded, voxel-major, and
/// chains each Gaussian/voxel pair all the way to the raw parameters.
inline SplatGradients splat_backward(std::span<const SemanticGaussian> gaussians, const GridSpec& spec,
                                     const SplatConfig& cfg, const FieldGradient& upstream,
                                     const NeighborIndex& index, int class_count) {
    detail::check_classes(gaussians, class_count);
    detail::check_upstream(upstream, spec.voxel_count(), class_count + 1);
    const auto covs = covariances_of(gaussians);

    SplatGradients out;
    out.gaussians.resize(gaussians.size());
    for (auto& g : out.gaussians) g.classes = VecX::Zero(class_count);

    std::vector<double> raw, resp, dens, prefix, suffix;
    VecX e(class_count), B(class_count);
    for (std::size_t v = 0; v < spec.voxel_count(); ++v) {
        const auto ids = index.gaussians_of(v);
        if (ids.empty()) continue;
        const Vec3 x = spec.center(v);
        const auto up = upstream.row(v);

        raw.assign(ids.size(), 0.0);
        resp.assign(ids.size(), 0.0);
        dens.assign(ids.size(), 0.0);
        double W = 0.0;
        e.setZero();
        for (std::size_t n = 0; n < ids.size(); ++n) {
            const auto& g = gaussians[ids[n]];
            const auto& cov = covs[ids[n]];
            const double r = std::exp(-0.5 * mahalanobis_sq(x, g.position, cov.inverse));
            raw[n] = r;
            resp[n] = cfg.opacity_weighted ? g.opacity * r : r;
            dens[n] = g.opacity * cov.density_norm() * r;
            W += dens[n];
            e += dens[n] * g.classes;
        }
        const bool floored = W < cfg.weight_floor;
        e = floored ? VecX::Constant(class_count, 1.0 / class_count) : VecX(e / W);
        // prefix[n] * suffix[n + 1] = prod_{m != n} (1 - resp[m]).
        prefix.assign(ids.size() + 1, 1.0);
        suffix.assign(ids.size() + 1, 1.0);
        for (std::size_t n = 0; n < ids.size(); ++n) prefix[n + 1] = prefix[n] * (1.0 - resp[n]);
        for (std::size_t n = ids.size(); n-- > 0;) suffix[n] = suffix[n + 1] * (1.0 - resp[n]);
        const double alpha = 1.0 - prefix[ids.size()];

        double dalpha = -up[static_cast<std::size_t>(class_count)];
        for (int c = 0; c < class_count; ++c) {
            dalpha += up[static_cast<std::size_t>(c)] * e[c];
            B[c] = alpha * up[static_cast<std::size_t>(c)];
        }
        const double Be = B.dot(e);

        for (std::size_t n = 0; n < ids.size(); ++n) {
            const auto& g = gaussians[ids[n]];
            const auto& cov = covs[ids[n]];
            const double dresp = dalpha * prefix[n] * suffix[n + 1];
            const double dw = floored ? 0.0 : (B.dot(g.classes) - Be) / W;

            const double r = raw[n];
            const double kappa = cov.density_norm();
            const double dr = dresp * (cfg.opacity_weighted ? g.opacity : 1.0) + dw * g.opacity * kappa;
            const double da = (cfg.opacity_weighted ? dresp * r : 0.0) + dw * kappa * r;
            const double dq = -0.5 * r * dr;
            const Vec3 d = x - g.position;
            const Vec3 Pd = cov.inverse * d;

            auto& grad = out.gaussians[ids[n]];
            chain_geometry(g, cov.rotation, -2.0 * dq * Pd, dq * d * d.transpose(), da, dw * dens[n], grad);
            if (!floored) grad.classes += (dens[n] / W) * B;
        }
    }
    for (std::size_t i = 0; i < gaussians.size(); ++i)
        out.gaussians[i].class_logits = softmax_vjp(gaussians[i].classes, out.gaussians[i].classes);
    return out;
}

inline SplatGradients splat_backward(std::span<const SemanticGaussian> gaussians, const GridSpec& spec,
                                     const SplatConfig& cfg, const FieldGradient& upstream, int class_count) {
    return splat_backward(gaussians, spec, cfg, upstream, neighbor_pairs(gaussians, spec, cfg.cutoff_sigma),
                          class_count);
}

}  // namespace semocc
