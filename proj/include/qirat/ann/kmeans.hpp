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

#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qirat/common.hpp"
#include "qirat/kernels.hpp"
#include "qirat/random.hpp"

namespace qirat::ann {

using qirat::SeededRng;

struct KMeansResult {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<float> centroids;           // k x dim, row-major
    std::vector<std::uint32_t> assignment;  // per point
    std::vector<double> objective;          // sum of squared distances after each assignment step
};

/// Lloyd's k-means on `n` rows of `dim` floats. Initial centroids are k
/// distinct rows picked by a seeded partial shuffle. A cluster that ends an
/// iteration empty is re-seeded with the point farthest from its centroid.
/// Stops after `iters` iterations or when assignments stop changing.
inline KMeansResult
kmeans(std::span<const float> data, std::size_t dim, std::size_t k, std::size_t iters, std::uint64_t seed) {
    if (dim == 0 || data.size() % dim != 0) {
        throw InvalidArgument("kmeans: data length is not a multiple of dim");
    }
    const std::size_t n = data.size() / dim;
    if (k == 0) {
        throw InvalidArgument("kmeans: k must be >= 1");
    }
    if (n < k) {
        throw InvalidArgument("kmeans: " + std::to_string(n) + " points for " + std::to_string(k) + " clusters");
    }
    auto point = [&](std::size_t i) { return data.subspan(i * dim, dim); };

    KMeansResult res;
    res.k = k;
    res.dim = dim;
    res.centroids.resize(k * dim);
    res.assignment.assign(n, std::numeric_limits<std::uint32_t>::max());
    auto centroid = [&](std::size_t c) { return std::span<float>(res.centroids).subspan(c * dim, dim); };

    {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        SeededRng rng(seed);
        for (std::size_t c = 0; c < k; ++c) {
            const std::size_t j = c + rng.below(n - c);
            std::swap(order[c], order[j]);
            const auto src = point(order[c]);
            std::copy(src.begin(), src.end(), centroid(c).begin());
        }
    }

    std::vector<float> dist(n);
    std::vector<double> sums(k * dim);
    std::vector<std::size_t> sizes(k);
    for (std::size_t it = 0; it < iters; ++it) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto x = point(i);
            std::uint32_t best = 0;
            float best_d = std::numeric_limits<float>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const float d = squared_l2<float>(x, centroid(c));
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<std::uint32_t>(c);
                }
            }
            if (res.assignment[i] != best) {
                changed = true;
                res.assignment[i] = best;
            }
            dist[i] = best_d;
            objective += best_d;
        }
        res.objective.push_back(objective);
        if (!changed) {
            break;
        }

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(sizes.begin(), sizes.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = res.assignment[i];
            ++sizes[c];
            const auto x = point(i);
            for (std::size_t j = 0; j < dim; ++j) {
                sums[c * dim + j] += x[j];
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] == 0) {
                continue;
            }
            auto cen = centroid(c);
            for (std::size_t j = 0; j < dim; ++j) {
                cen[j] = static_cast<float>(sums[c * dim + j] / static_cast<double>(sizes[c]));
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] != 0) {
                continue;
            }
            // farthest point whose own cluster can spare it
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (sizes[res.assignment[i]] > 1 && (far == n || dist[i] > dist[far])) {
                    far = i;
                }
            }
            if (far == n) {
                break;
            }
            --sizes[res.assignment[far]];
            res.assignment[far] = static_cast<std::uint32_t>(c);
            sizes[c] = 1;
            dist[far] = 0.0f;
            const auto src = point(far);
            std::copy(src.begin(), src.end(), centroid(c).begin());
        }
    }
    return res;
}

}  // namespace qirat::ann
