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

// In-batch-negatives contrastive objective for a dual encoder. Row i of the
// query block and row i of the passage block form the positive pair; every
// other passage in the batch is a negative for query i.
//
//   s_ij = cos(q_i, p_j) / tau
//   loss = -(1/B) sum_i log softmax_j(s_ij)[i]

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "qirat/common.hpp"

namespace qirat::training {

template <std::floating_point T>
struct ContrastiveBatch {
    std::size_t size = 0;  // B
    std::size_t dim = 0;   // d
    std::vector<T> queries;   // B x d
    std::vector<T> passages;  // B x d
    T temperature = T(0.05);

    std::span<const T>
    query(std::size_t i) const {
        return std::span<const T>(queries).subspan(i * dim, dim);
    }
    std::span<const T>
    passage(std::size_t j) const {
        return std::span<const T>(passages).subspan(j * dim, dim);
    }
};

template <std::floating_point T>
struct InfoNceResult {
    T loss = 0;
    std::vector<T> d_queries;   // B x d
    std::vector<T> d_passages;  // B x d
};

namespace detail {

template <std::floating_point T>
T
dot(std::span<const T> a, std::span<const T> b) {
    T s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

template <std::floating_point T>
void
validate(const ContrastiveBatch<T>& batch) {
    if (!(batch.temperature > 0)) {
        throw InvalidArgument("info_nce: temperature must be positive");
    }
    if (batch.size == 0 || batch.dim == 0) {
        throw InvalidArgument("info_nce: empty batch");
    }
    if (batch.queries.size() != batch.size * batch.dim || batch.passages.size() != batch.size * batch.dim) {
        throw InvalidArgument("info_nce: query and passage blocks must both be B x d");
    }
    for (const auto* block : {&batch.queries, &batch.passages}) {
        for (T v : *block) {
            if (!std::isfinite(v)) {
                throw InvalidArgument("info_nce: non-finite input");
            }
        }
    }
}

/// Norms of each row; rejects zero rows.
template <std::floating_point T>
std::vector<T>
row_norms(const std::vector<T>& block, std::size_t rows, std::size_t dim) {
    std::vector<T> norms(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        std::span<const T> r(block.data() + i * dim, dim);
        norms[i] = std::sqrt(dot<T>(r, r));
        if (norms[i] == 0) {
            throw InvalidArgument("info_nce: zero vector in batch");
        }
    }
    return norms;
}

}  // namespace detail

/// Loss and its gradient with respect to every query and passage vector.
template <std::floating_point T>
InfoNceResult<T>
info_nce_grad(const ContrastiveBatch<T>& batch) {
    detail::validate(batch);
    const std::size_t B = batch.size;
    const std::size_t d = batch.dim;
    const T tau = batch.temperature;
    const auto qn = detail::row_norms(batch.queries, B, d);
    const auto pn = detail::row_norms(batch.passages, B, d);

    std::vector<T> cos(B * B);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < B; ++j) {
            cos[i * B + j] = detail::dot<T>(batch.query(i), batch.passage(j)) / (qn[i] * pn[j]);
        }
    }

    InfoNceResult<T> out;
    // dL/dcos_ij = (softmax_ij - [i == j]) / (B tau)
    std::vector<T> g(B * B);
    T loss = 0;
    for (std::size_t i = 0; i < B; ++i) {
        T mx = cos[i * B] / tau;
        for (std::size_t j = 1; j < B; ++j) {
            mx = std::max(mx, cos[i * B + j] / tau);
        }
        T z = 0;
        for (std::size_t j = 0; j < B; ++j) {
            z += std::exp(cos[i * B + j] / tau - mx);
        }
        const T log_z = mx + std::log(z);
        loss += log_z - cos[i * B + i] / tau;
        for (std::size_t j = 0; j < B; ++j) {
            const T p = std::exp(cos[i * B + j] / tau - log_z);
            g[i * B + j] = (p - (i == j ? T(1) : T(0))) / (static_cast<T>(B) * tau);
        }
    }
    out.loss = loss / static_cast<T>(B);

    // dcos(q,p)/dq = p/(|q||p|) - cos q/|q|^2, symmetric for p
    out.d_queries.assign(B * d, 0);
    out.d_passages.assign(B * d, 0);
    for (std::size_t i = 0; i < B; ++i) {
        const auto q = batch.query(i);
        for (std::size_t j = 0; j < B; ++j) {
            const T gij = g[i * B + j];
            if (gij == 0) {
                continue;
            }
            const auto p = batch.passage(j);
            const T c = cos[i * B + j];
            const T inv = T(1) / (qn[i] * pn[j]);
            for (std::size_t k = 0; k < d; ++k) {
                out.d_queries[i * d + k] += gij * (p[k] * inv - c * q[k] / (qn[i] * qn[i]));
                out.d_passages[j * d + k] += gij * (q[k] * inv - c * p[k] / (pn[j] * pn[j]));
            }
        }
    }
    return out;
}

/// Loss only; same numerics as info_nce_grad.
template <std::floating_point T>
T
info_nce_loss(const ContrastiveBatch<T>& batch) {
    detail::validate(batch);
    const std::size_t B = batch.size;
    const T tau = batch.temperature;
    const auto qn = detail::row_norms(batch.queries, B, batch.dim);
    const auto pn = detail::row_norms(batch.passages, B, batch.dim);
    T loss = 0;
    std::vector<T> s(B);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < B; ++j) {
            s[j] = detail::dot<T>(batch.query(i), batch.passage(j)) / (qn[i] * pn[j]) / tau;
        }
        const T mx = *std::max_element(s.begin(), s.end());
        T z = 0;
        for (T v : s) {
            z += std::exp(v - mx);
        }
        loss += mx + std::log(z) - s[i];
    }
    return loss / static_cast<T>(B);
}

}  // namespace qirat::training
