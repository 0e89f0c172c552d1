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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "common.hpp"
#include "oracles.hpp"
#include "semocc/random_scene.hpp"
#include "semocc/rendering.hpp"

using namespace semocc;
using namespace testing_support;

TEST(Rays, PrincipalPixelLooksForward) {
    const auto cam = small_camera(tilted_pose());
    const auto rays = generate_rays(cam);
    ASSERT_EQ(rays.size(), 63u);
    const auto& r = rays[3 * 9 + 4];
    EXPECT_LT((r.direction - cam.pose.matrix().col(2)).norm(), 1e-12);
    for (const auto& ray : rays) EXPECT_NEAR(ray.direction.norm(), 1.0, 1e-6);
}

TEST(Rays, IdentityPoseOriginsAtZero) {
    for (const auto& r : generate_rays(small_camera())) EXPECT_EQ(r.origin, Vec3::Zero());
}

TEST(Rays, ProjectionRoundTrip) {
    const auto cam = small_camera(tilted_pose());
    const auto rays = generate_rays(cam);
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            const auto& r = rays[static_cast<std::size_t>(v * cam.width + u)];
            const auto px = project(cam, r.origin + 3.7 * r.direction);
            ASSERT_TRUE(px);
            EXPECT_NEAR((*px)[0], u, 1e-4);
            EXPECT_NEAR((*px)[1], v, 1e-4);
        }
    EXPECT_FALSE(project(cam, cam.pose.apply(Vec3(0, 0, -1))));
}

TEST(Rays, InvalidCamera) {
    auto cam = small_camera();
    cam.fx = 0;
    EXPECT_THROW(generate_rays(cam), InvalidArgument);
    cam = small_camera();
    cam.cx = 9;
    EXPECT_THROW(generate_rays(cam), InvalidArgument);
}

TEST(RenderDepth, SingleGaussianOnRay) {
    const auto cam = small_camera();
    const auto r = render_depth(std::vector{iso(Vec3(0, 0, 5), 1.0)}, cam, RenderConfig{});
    const std::size_t p = 3 * 9 + 4;
    EXPECT_NEAR(r.depth.data[p], 5.0, 1e-5);
    EXPECT_NEAR(r.alpha.data[p], 1.0, 1e-6);
    EXPECT_TRUE(r.valid[p]);
}

TEST(RenderDepth, TwoGaussiansComposite) {
    const auto cam = small_camera();
    const std::vector gs{iso(Vec3(0, 0, 8), 1.0), iso(Vec3(0, 0, 4), 0.5)};
    const auto r = render_depth(gs, cam, RenderConfig{});
    const std::size_t p = 3 * 9 + 4;
    EXPECT_NEAR(r.alpha.data[p], 1.0, 1e-6);
    EXPECT_NEAR(r.depth.data[p], 6.0, 1e-5);
}

TEST(RenderDepth, EmptySceneIsInvalid) {
    const auto r = render_depth(std::vector<SemanticGaussian>{}, small_camera(), RenderConfig{});
    for (std::size_t p = 0; p < r.valid.size(); ++p) {
        EXPECT_EQ(r.alpha.data[p], 0.0f);
        EXPECT_FALSE(r.valid[p]);
    }
}

TEST(RenderDepth, BehindNearClipIsDropped) {
    const auto r = render_depth(std::vector{iso(Vec3(0, 0, 0.05), 1.0, 0.01)}, small_camera(), RenderConfig{});
    EXPECT_EQ(r.alpha.data[3 * 9 + 4], 0.0f);
}

TEST(RenderDepth, MatchesOracle) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Pose pose = seed % 2 ? tilted_pose() : Pose{};
        const auto cam = small_camera(pose);
        const auto gs = frontal_set(12, seed, pose);
        const auto colors = random_colors(gs.size(), seed + 50);
        RenderConfig cfg;
        const auto r = render(gs, &colors, cam, cfg);
        const auto px = oracle::render(gs, colors, to_oracle(cam), cfg.near_clip, cfg.response_floor, cfg.alpha_floor);
        for (std::size_t p = 0; p < px.size(); ++p) {
            EXPECT_NEAR(r.alpha.data[p], px[p].alpha, 1e-5);
            EXPECT_NEAR(r.depth.data[p], px[p].depth, 1e-4 * std::max(1.0, px[p].depth));
            for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.rgb.data[3 * p + static_cast<std::size_t>(k)], px[p].rgb[k], 1e-5);
        }
    }
}

TEST(RenderDepth, InputOrderDoesNotMatter) {
    const auto cam = small_camera();
    auto gs = frontal_set(15, 3);
    const auto a = render_depth(gs, cam, RenderConfig{});
    std::reverse(gs.begin(), gs.end());
    const auto b = render_depth(gs, cam, RenderConfig{});
    for (std::size_t p = 0; p < a.depth.data.size(); ++p) {
        EXPECT_NEAR(a.depth.data[p], b.depth.data[p], 1e-5);
        EXPECT_NEAR(a.alpha.data[p], b.alpha.data[p], 1e-6);
    }
}

TEST(RenderRgb, OpaqueRedAndBackground) {
    const auto cam = small_camera();
    const std::vector<Vec3> red{Vec3(1, 0, 0)};
    const auto r = render_rgb(std::vector{iso(Vec3(0, 0, 5), 1.0, 0.1)}, &red, cam, RenderConfig{});
    const std::size_t p = 3 * 9 + 4;
    EXPECT_NEAR(r.rgb.data[3 * p], 1.0, 1e-6);
    EXPECT_NEAR(r.rgb.data[3 * p + 1], 0.0, 1e-6);
    EXPECT_EQ(r.rgb.data[0], 0.0f);  // corner pixel misses the Gaussian
}

TEST(RenderRgb, MissingColors) {
    const std::vector gs{iso(Vec3(0, 0, 5), 1.0)};
    EXPECT_THROW(render_rgb(gs, nullptr, small_camera(), RenderConfig{}), MissingAttribute);
    const std::vector<Vec3> wrong(2);
    EXPECT_THROW(render(gs, &wrong, small_camera(), RenderConfig{}), MissingAttribute);
}

TEST(RenderBackward, MatchesFiniteDifferences) {
    const auto cfg = fine_config();
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const Pose pose = seed % 2 ? tilted_pose() : Pose{};
        const auto cam = small_camera(pose);
        const auto gs = frontal_set(5, 100 + seed, pose);
        const auto colors = random_colors(gs.size(), 200 + seed);
        const auto up = random_upstream_images(cam, 300 + seed);
        const auto adj = render_backward(gs, &colors, cam, cfg, {&up.depth, &up.alpha, &up.rgb});
        ASSERT_EQ(adj.size(), gs.size());
        for (std::size_t i = 0; i < gs.size(); ++i) {
            const auto params = GaussianParams::from(gs[i]);
            const auto f = [&](const VecX& x) {
                auto moved = gs;
                moved[i] = oracle::unflatten(x, params).decode();
                return oracle_loss(moved, colors, cam, cfg, up);
            };
            const VecX numeric = oracle::central_diff(f, oracle::flatten(params), 1e-4).head(11);
            EXPECT_LT(oracle::grad_mismatch(geometry_vector(chain(gs[i], adj[i])), numeric, 1e-3, 1e-5), 1.0)
                << "seed " << seed << " gaussian " << i;

            const auto fc = [&](const VecX& c) {
                auto cs = colors;
                cs[i] = c;
                return oracle_loss(gs, cs, cam, cfg, up);
            };
            EXPECT_LT(oracle::grad_mismatch(adj[i].attributes, oracle::central_diff(fc, VecX(colors[i]), 1e-4)), 1.0);
        }
    }
}

TEST(RenderBackward, ColorGradientIsCompositingWeight) {
    // Two Gaussians on the principal ray: the color adjoint of each equals its T_i w_i.
    const auto cam = small_camera();
    const std::vector gs{iso(Vec3(0, 0, 4), 0.5), iso(Vec3(0, 0, 8), 0.8)};
    const std::vector<Vec3> colors(2, Vec3(0.5, 0.5, 0.5));
    Image up(cam.width, cam.height, 3);
    const std::size_t p = 3 * 9 + 4;
    up.data[3 * p] = 1.0f;
    const auto adj = render_backward(gs, &colors, cam, RenderConfig{}, {nullptr, nullptr, &up});
    EXPECT_NEAR(adj[0].attributes[0], 0.5, 1e-9);
    EXPECT_NEAR(adj[1].attributes[0], 0.5 * 0.8, 1e-9);
}

TEST(ImageLosses, Examples) {
    Image a(2, 1, 1), b(2, 1, 1);
    a.data = {1.0f, 3.0f};
    b.data = {1.0f, 5.0f};
    EXPECT_DOUBLE_EQ(depth_loss(a, a, std::vector<std::uint8_t>{1, 1}).value, 0.0);
    const auto l = depth_loss(a, b, std::vector<std::uint8_t>{0, 1});
    EXPECT_DOUBLE_EQ(l.value, 2.0);
    EXPECT_FLOAT_EQ(l.grad.data[1], -1.0f);
    EXPECT_FLOAT_EQ(l.grad.data[0], 0.0f);
    EXPECT_THROW(depth_loss(a, b, std::vector<std::uint8_t>{0, 0}), EmptyMask);
    EXPECT_THROW(depth_loss(a, Image(3, 1, 1), std::vector<std::uint8_t>{1, 1}), ShapeMismatch);
}

TEST(ImageLosses, GradientMatchesFiniteDifferences) {
    Image pred(4, 3, 3), target(4, 3, 3);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& v : pred.data) v = u(rng);
    for (auto& v : target.data) v = u(rng);
    std::vector<std::uint8_t> mask(12);
    for (std::size_t i = 0; i < 12; ++i) mask[i] = i % 3 != 0;
    const auto l = rgb_loss(pred, target, mask);
    for (std::size_t i = 0; i < pred.data.size(); i += 5) {
        Image hi = pred, lo = pred;
        hi.data[i] += 1e-3f;
        lo.data[i] -= 1e-3f;
        const double fd = (rgb_loss(hi, target, mask).value - rgb_loss(lo, target, mask).value) / 2e-3;
        EXPECT_NEAR(fd, l.grad.data[i], 1e-3);
    }
}

TEST(Warp, IdentityAndTranslation) {
    auto gs = frontal_set(6, 11);
    const auto same = warp_gaussians(gs, 0.0, Pose{});
    for (std::size_t i = 0; i < gs.size(); ++i) {
        EXPECT_TRUE(same[i].position.isApprox(gs[i].position, 1e-15));
        EXPECT_TRUE(same[i].rotation.isApprox(gs[i].rotation, 1e-15));
    }
    SemanticGaussian g = iso(Vec3(1, 2, 3), 0.7);
    g.velocity = Vec3(1, 0, 0);
    const auto moved = warp_gaussians(std::vector{g}, 0.5, Pose{});
    EXPECT_TRUE(moved[0].position.isApprox(Vec3(1.5, 2, 3), 1e-15));
    EXPECT_EQ(moved[0].opacity, g.opacity);
    EXPECT_EQ(moved[0].scale, g.scale);
    EXPECT_THROW(warp_gaussians(std::vector{g}, 0.6, Pose{}), InvalidArgument);
}

TEST(Warp, ComposesOverTime) {
    const auto gs = frontal_set(10, 12);
    const auto twice = warp_gaussians(warp_gaussians(gs, 0.2, Pose{}), 0.3, Pose{});
    const auto once = warp_gaussians(gs, 0.5, Pose{});
    for (std::size_t i = 0; i < gs.size(); ++i) EXPECT_LT((twice[i].position - once[i].position).norm(), 1e-12);
}

TEST(Warp, ZeroVelocityIsRigid) {
    auto gs = frontal_set(10, 13);
    for (auto& g : gs) g.velocity.setZero();
    const Pose ego = tilted_pose();
    const auto w = warp_gaussians(gs, 0.4, ego);
    for (std::size_t i = 0; i < gs.size(); ++i) {
        EXPECT_LT((w[i].position - ego.apply(gs[i].position)).norm(), 1e-12);
        const Mat3 expect = ego.matrix() * quat_to_matrix(gs[i].rotation);
        EXPECT_LT((quat_to_matrix(w[i].rotation) - expect).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Warp, UnwarpAdjointMatchesFiniteDifferences) {
    const auto cfg = fine_config();
    const auto cam = small_camera();
    Pose ego;
    ego.rotation = quat_from_axis_angle(Vec3::UnitY(), 0.05);
    ego.translation = Vec3(0.1, 0.0, -0.2);
    const double dt = 0.4;
    const auto gs = frontal_set(4, 14);
    const std::vector<Vec3> colors = random_colors(gs.size(), 15);
    const auto up = random_upstream_images(cam, 16);
    const auto warped = warp_gaussians(gs, dt, ego);
    const auto adj = render_backward(warped, &colors, cam, cfg, {&up.depth, &up.alpha, &up.rgb});
    for (std::size_t i = 0; i < gs.size(); ++i) {
        const auto a = unwarp_adjoint(adj[i], dt, ego);
        const auto params = GaussianParams::from(gs[i]);
        const auto f = [&](const VecX& x) {
            auto moved = gs;
            moved[i] = oracle::unflatten(x, params).decode();
            moved[i].velocity = gs[i].velocity;
            return oracle_loss(warp_gaussians(moved, dt, ego), colors, cam, cfg, up);
        };
        const VecX numeric = oracle::central_diff(f, oracle::flatten(params), 1e-4).head(11);
        EXPECT_LT(oracle::grad_mismatch(geometry_vector(chain(gs[i], a)), numeric), 1.0) << i;

        const auto fv = [&](const VecX& v) {
            auto moved = gs;
            moved[i].velocity = v;
            return oracle_loss(warp_gaussians(moved, dt, ego), colors, cam, cfg, up);
        };
        EXPECT_LT(oracle::grad_mismatch(VecX(a.velocity), oracle::central_diff(fv, VecX(gs[i].velocity), 1e-4)), 1.0);
    }
}

TEST(Warp, UnwarpGradientMatchesFiniteDifferences) {
    const auto cfg = fine_config();
    const auto cam = small_camera();
    Pose ego;
    ego.rotation = quat_from_axis_angle(Vec3(0.2, 1.0, 0.1), -0.07);
    ego.translation = Vec3(-0.1, 0.05, 0.3);
    const double dt = -0.5;
    const auto gs = frontal_set(4, 17);
    const auto up = random_upstream_images(cam, 18);
    const auto warped = warp_gaussians(gs, dt, ego);
    const auto adj = render_backward(warped, nullptr, cam, cfg, {&up.depth, &up.alpha, nullptr});
    for (std::size_t i = 0; i < gs.size(); ++i) {
        auto wg = chain(warped[i], adj[i]);
        wg.velocity = adj[i].velocity;
        const auto g = unwarp_gradient(wg, dt, ego);
        const auto params = GaussianParams::from(gs[i]);
        const auto f = [&](const VecX& x) {
            auto moved = gs;
            moved[i] = oracle::unflatten(x, params).decode();
            moved[i].velocity = gs[i].velocity;
            return oracle_loss(warp_gaussians(moved, dt, ego), {}, cam, cfg, up);
        };
        const VecX numeric = oracle::central_diff(f, oracle::flatten(params), 1e-4).head(11);
        EXPECT_LT(oracle::grad_mismatch(geometry_vector(g), numeric), 1.0) << i;

        const auto fv = [&](const VecX& v) {
            auto moved = gs;
            moved[i].velocity = v;
            return oracle_loss(warp_gaussians(moved, dt, ego), {}, cam, cfg, up);
        };
        EXPECT_LT(oracle::grad_mismatch(VecX(g.velocity), oracle::central_diff(fv, VecX(gs[i].velocity), 1e-4)), 1.0);
    }
}
