// Copyright 2026-present the qirat project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>

namespace qirat {

/// Lane count of the fixed-order accumulators below.
inline constexpr std::size_t kAccumulatorLanes = 8;

/// Inner product with a fixed summation order: lane j accumulates coordinates
/// j, j+8, j+16, ... in ascending order, lanes are combined pairwise, then the
/// tail. The result depends only on the two vectors, never on the caller, so a
/// row scores bit-identically no matter which worker or index scans it.
template <std::floating_point T>
inline T
dot(std::span<const T> a, std::span<const T> b) noexcept {
    assert(a.size() == b.size());
    const std::size_t n = a.size();
    const T* pa = a.data();
    const T* pb = b.data();
    std::array<T, kAccumulatorLanes> acc{};
    std::size_t i = 0;
    for (; i + kAccumulatorLanes <= n; i += kAccumulatorLanes) {
        for (std::size_t j = 0; j < kAccumulatorLanes; ++j) {
            acc[j] += pa[i + j] * pb[i + j];
        }
    }
    T tail = 0;
    for (; i < n; ++i) {
        tail += pa[i] * pb[i];
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <std::floating_point T>
inline T
squared_l2(std::span<const T> a, std::span<const T> b) noexcept {
    assert(a.size() == b.size());
    const std::size_t n = a.size();
    std::array<T, kAccumulatorLanes> acc{};
    std::size_t i = 0;
    for (; i + kAccumulatorLanes <= n; i += kAccumulatorLanes) {
        for (std::size_t j = 0; j < kAccumulatorLanes; ++j) {
            const T d = a[i + j] - b[i + j];
            acc[j] += d * d;
        }
    }
    T tail = 0;
    for (; i < n; ++i) {
        const T d = a[i] - b[i];
        tail += d * d;
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

/// L2 norm accumulated in double regardless of T.
template <std::floating_point T>
inline double
l2_norm(std::span<const T> v) noexcept {
    double sum = 0.0;
    for (T x : v) {
        sum += static_cast<double>(x) * static_cast<double>(x);
    }
    return std::sqrt(sum);
}

}  // namespace qirat
