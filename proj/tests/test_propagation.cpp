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
#include "semocc/propagation.hpp"

using namespace semocc;
using namespace testing_support;

namespace {

Pose random_pose(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-3, 3);
    Pose p;
    p.rotation = quat_from_axis_angle(Vec3(u(rng), u(rng), u(rng)), u(rng));
    p.translation = Vec3(u(rng), u(rng), u(rng));
    return p;
}

}  // namespace

TEST(SelectQueries, ZeroDeltaIsTopK) {
    std::mt19937_64 rng(1);
    auto qs = random_queries(30, rng);
    const auto idx = select_query_indices(qs, 7, 0.0);
    ASSERT_EQ(idx.size(), 7u);
    std::vector<double> op;
    for (const auto& q : qs) op.push_back(q.opacity);
    std::sort(op.rbegin(), op.rend());
    for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(qs[idx[i]].opacity, op[i]);
}

TEST(SelectQueries, CoincidentQueriesKeepTheMostOpaque) {
    std::vector<SceneQuery> qs(2);
    qs[0].opacity = 0.8;
    qs[1].opacity = 0.9;
    const auto out = select_query_indices(qs, 2, 1.0);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0], 1u);
}

TEST(SelectQueries, MatchesGreedyOracle) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> n(1, 60);
    std::uniform_real_distribution<double> d(0, 3);
    for (int t = 0; t < 1000; ++t) {
        const auto qs = random_queries(n(rng), rng, 5.0, t % 2 == 0);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(1, qs.size() + 3)(rng);
        const double delta = d(rng);
        const auto idx = select_query_indices(qs, k, delta);
        EXPECT_EQ(idx, oracle::greedy_select(qs, k, delta)) << "case " << t;
        EXPECT_LE(idx.size(), k);
        for (std::size_t a = 0; a < idx.size(); ++a) {
            if (a > 0) {
                EXPECT_LE(qs[idx[a]].opacity, qs[idx[a - 1]].opacity);
            }
            for (std::size_t b = a + 1; b < idx.size(); ++b)
                EXPECT_GE((qs[idx[a]].anchor() - qs[idx[b]].anchor()).norm(), delta);
        }
    }
}

TEST(SelectQueries, LargerDeltaNeverSelectsMore) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const auto qs = random_queries(40, rng);
        std::size_t prev = qs.size() + 1;
        for (double delta : {0.0, 0.5, 1.0, 1.6, 2.5, 4.0}) {
            const auto n = select_query_indices(qs, 40, delta).size();
            EXPECT_LE(n, prev);
            prev = n;
        }
    }
}

TEST(SelectQueries, PermutationInvariant) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
        auto qs = random_queries(25, rng);
        const auto a = select_queries(qs, 10, 1.6);
        std::shuffle(qs.begin(), qs.end(), rng);
        const auto b = select_queries(qs, 10, 1.6);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].position, b[i].position);
    }
}

TEST(SelectQueries, InvalidArguments) {
    std::vector<SceneQuery> qs(3);
    EXPECT_THROW(select_queries(qs, 0, 1.0), InvalidArgument);
    EXPECT_THROW(select_queries(qs, 1, -1.0), InvalidArgument);
    EXPECT_TRUE(select_queries({}, 3, 1.0).empty());
}

TEST(QueryQueue, EvictsOldestFrame) {
    QueryQueue q(4);
    for (int f = 1; f <= 5; ++f) q.push_frame(f, std::vector<SceneQuery>(static_cast<std::size_t>(f)), Pose{});
    ASSERT_EQ(q.size(), 4u);
    std::int64_t expect = 2;
    for (const auto& e : q.entries()) {
        EXPECT_EQ(e.frame_id, expect);
        EXPECT_EQ(e.queries.size(), static_cast<std::size_t>(expect));
        ++expect;
    }
}

TEST(QueryQueue, RejectsOutOfOrderFrames) {
    QueryQueue q;
    q.push_frame(3, {}, Pose{});
    EXPECT_THROW(q.push_frame(3, {}, Pose{}), OutOfOrderFrame);
    EXPECT_THROW(q.push_frame(2, {}, Pose{}), OutOfOrderFrame);
    EXPECT_THROW(q.push_frame(4, std::vector<SceneQuery>(5), Pose{}, 4), InvalidArgument);
    EXPECT_THROW(QueryQueue(0), InvalidArgument);
}

TEST(GatherHistory, IdenticalPosesAreIdentity) {
    std::mt19937_64 rng(5);
    const auto qs = random_queries(5, rng);
    const Pose pose = random_pose(rng);
    QueryQueue q;
    q.push_frame(0, qs, pose);
    const auto out = gather_history(q, pose);
    ASSERT_EQ(out.size(), qs.size());
    for (std::size_t i = 0; i < qs.size(); ++i) {
        EXPECT_LT((out[i].position - qs[i].position).norm(), 1e-9);
        EXPECT_LT((out[i].velocity - qs[i].velocity).norm(), 1e-9);
        EXPECT_EQ(out[i].opacity, qs[i].opacity);
    }
}

TEST(GatherHistory, PureTranslationShiftsPositions) {
    std::mt19937_64 rng(6);
    const auto qs = random_queries(5, rng);
    QueryQueue q;
    q.push_frame(0, qs, Pose{});
    Pose now;
    now.translation = Vec3(2, -1, 0.5);
    const auto out = gather_history(q, now);
    for (std::size_t i = 0; i < qs.size(); ++i) {
        EXPECT_LT((out[i].position - (qs[i].position - now.translation)).norm(), 1e-12);
        EXPECT_EQ(out[i].offset, qs[i].offset);
    }
}

TEST(GatherHistory, NewestFrameFirst) {
    std::mt19937_64 rng(7);
    QueryQueue q;
    auto a = random_queries(1, rng), b = random_queries(1, rng);
    a[0].opacity = 0.1;
    b[0].opacity = 0.2;
    q.push_frame(0, a, Pose{});
    q.push_frame(1, b, Pose{});
    const auto out = gather_history(q, Pose{});
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].opacity, 0.2);
}

TEST(GatherHistory, RoundTripThroughTwoFrames) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 100; ++t) {
        const auto qs = random_queries(4, rng);
        const Pose a = random_pose(rng), b = random_pose(rng);
        QueryQueue q1;
        q1.push_frame(0, qs, a);
        const auto in_b = gather_history(q1, b);
        QueryQueue q2;
        q2.push_frame(1, in_b, b);
        const auto back = gather_history(q2, a);
        for (std::size_t i = 0; i < qs.size(); ++i) {
            EXPECT_LT((back[i].position - qs[i].position).norm(), 1e-6);
            EXPECT_LT((back[i].anchor() - qs[i].anchor()).norm(), 1e-6);
            EXPECT_LT((back[i].velocity - qs[i].velocity).norm(), 1e-6);
            EXPECT_LT((back[i].children[0].offset - qs[i].children[0].offset).norm(), 1e-6);
        }
        // World positions of decoded children are preserved by the transform.
        const auto w0 = decode_query(qs[0]);
        const auto w1 = decode_query(in_b[0]);
        for (std::size_t j = 0; j < w0.size(); ++j)
            EXPECT_LT((a.apply(w0[j].position) - b.apply(w1[j].position)).norm(), 1e-6);
    }
}
