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
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace semocc {

/// Worker configuration shared by every parallel kernel.
struct Parallelism {
    int threads = 0;            // 0 = hardware concurrency
    bool deterministic = true;  // static contiguous chunks; false = dynamic chunk grabbing

    int resolved_threads() const {
        if (threads > 0) return threads;
        return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    }
};

/// Runs fn(begin, end) over [0, n). Callers must write disjoint outputs per
/// index; with that, results do not depend on the worker count or the mode.
template <typename Fn>
void parallel_for(std::size_t n, const Parallelism& par, Fn&& fn, std::size_t grain = 1) {
    if (n == 0) return;
    const auto workers =
        static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(par.resolved_threads()),
                                                       (n + grain - 1) / grain));
    if (workers <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    if (par.deterministic) {
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 1; w < workers; ++w) {
            const std::size_t b = w * chunk, e = std::min(n, b + chunk);
            if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
        }
        fn(std::size_t{0}, std::min(n, chunk));
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t b = next.fetch_add(grain);
                if (b >= n) return;
                fn(b, std::min(n, b + grain));
            }
        };
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
    }
    for (auto& t : pool) t.join();
}

}  // namespace semocc
