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

#include <algorithm>
#include <cstdint>
#include <deque>
#include <numeric>
#include <span>
#include <vector>

#include "semocc/core/gaussian.hpp"

namespace semocc {

/// Indices of the accepted queries, in acceptance order: highest opacity
/// first (ties by index), each anchor p + o at least `delta` meters from
/// every previously accepted one. May return fewer than k.
inline std::vector<std::size_t> select_query_indices(std::span<const SceneQuery> queries, std::size_t k,
                                                     double delta) {
    if (k < 1) throw InvalidArgument("select_queries needs k >= 1");
    if (!(delta >= 0)) throw InvalidArgument("delta must be nonnegative");
    std::vector<std::size_t> order(queries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return queries[a].opacity > queries[b].opacity;
    });
    const double d2 = delta * delta;
    std::vector<std::size_t> accepted;
    std::vector<Vec3> anchors;
    for (auto i : order) {
        if (accepted.size() >= k) break;
        const Vec3 p = queries[i].anchor();
        bool ok = true;
        for (const auto& a : anchors)
            if ((p - a).squaredNorm() < d2) {
                ok = false;
                break;
            }
        if (!ok) continue;
        accepted.push_back(i);
        anchors.push_back(p);
    }
    return accepted;
}

inline std::vector<SceneQuery> select_queries(std::span<const SceneQuery> queries, std::size_t k, double delta) {
    std::vector<SceneQuery> out;
    for (auto i : select_query_indices(queries, k, delta)) out.push_back(queries[i]);
    return out;
}

/// Fixed-capacity FIFO of propagated queries from past frames.
class QueryQueue {
public:
    struct Entry {
        std::int64_t frame_id;
        std::vector<SceneQuery> queries;
        Pose pose;  // ego-to-world at that frame
    };

    explicit QueryQueue(std::size_t capacity = 4) : capacity_(capacity) {
        if (capacity_ == 0) throw InvalidArgument("queue capacity must be positive");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::deque<Entry>& entries() const { return entries_; }

    /// Appends a frame, evicting the oldest when over capacity. At most
    /// `max_queries` queries may be stored per frame.
    void push_frame(std::int64_t frame_id, std::vector<SceneQuery> queries, const Pose& pose,
                    std::size_t max_queries = static_cast<std::size_t>(-1)) {
        if (!entries_.empty() && frame_id <= entries_.back().frame_id)
            throw OutOfOrderFrame("frame ids must strictly increase");
        if (queries.size() > max_queries) throw InvalidArgument("more queries than the propagation budget");
        entries_.push_back({frame_id, std::move(queries), pose});
        while (entries_.size() > capacity_) entries_.pop_front();
    }

private:
    std::size_t capacity_;
    std::deque<Entry> entries_;
};

/// All stored queries, newest frame first, with position, offset and
/// velocity re-expressed in the current ego frame.
inline std::vector<SceneQuery> gather_history(const QueryQueue& queue, const Pose& current_pose) {
    std::vector<SceneQuery> out;
    const Pose to_world_inv = current_pose.inverse();
    for (auto it = queue.entries().rbegin(); it != queue.entries().rend(); ++it) {
        const Pose rel = to_world_inv.compose(it->pose);
        const Mat3 R = rel.matrix();
        for (auto q : it->queries) {
            q.position = rel.apply(q.position);
            q.offset = R * q.offset;
            q.velocity = R * q.velocity;
            for (auto& c : q.children) {
                c.offset = R * c.offset;
                c.rotation = quat_normalized(quat_multiply(rel.rotation, c.rotation));
            }
            out.push_back(std::move(q));
        }
    }
    return out;
}

}  // namespace semocc
