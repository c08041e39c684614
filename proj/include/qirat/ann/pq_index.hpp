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
#include <span>
#include <string>
#include <vector>

#include "qirat/ann/kmeans.hpp"
#include "qirat/common.hpp"
#include "qirat/embed_store.hpp"
#include "qirat/exact_search.hpp"
#include "qirat/format.hpp"
#include "qirat/kernels.hpp"

namespace qirat::ann {

inline constexpr std::string_view kPqMagic = "PQIX";

struct PQParams {
    std::size_t m = 8;
    std::size_t ks = 256;
    std::size_t iters = 25;
    std::uint64_t seed = 1234;
};

/// Product quantizer with one byte per subspace and inner-product ADC search.
///
/// The vector is cut into m contiguous subvectors of dim/m coordinates; each
/// subspace has its own ks-entry codebook trained by k-means. A row is stored
/// as the indices of its nearest (squared L2) subspace centroids. A query
/// builds an m x ks table of subvector-centroid inner products and scores a
/// row by summing m table entries, which equals the inner product between the
/// query and the row's reconstruction.
class PQIndex {
 public:
    PQIndex() = default;

    PQIndex(std::size_t dim, std::size_t m, std::size_t ks = 256) : dim_(dim), m_(m), ks_(ks) {
        if (m == 0 || dim == 0 || dim % m != 0) {
            throw InvalidArgument("pq: dim " + std::to_string(dim) + " is not divisible by m=" + std::to_string(m));
        }
        if (ks == 0 || ks > 256) {
            throw InvalidArgument("pq: ks must be in [1, 256]");
        }
        dsub_ = dim / m;
    }

    /// Builds, trains on the full matrix and encodes it.
    static PQIndex
    build(const EmbeddingMatrix& matrix, const PQParams& params = {}) {
        PQIndex idx(matrix.dim(), params.m, params.ks);
        idx.train(matrix, params.iters, params.seed);
        idx.add(matrix);
        return idx;
    }

    void
    train(const EmbeddingMatrix& matrix, std::size_t iters, std::uint64_t seed) {
        check_dim(matrix.dim());
        if (matrix.count() < ks_) {
            throw InvalidArgument("pq_train: " + std::to_string(matrix.count()) + " rows for ks=" + std::to_string(ks_));
        }
        codebooks_.assign(m_ * ks_ * dsub_, 0.0f);
        std::vector<float> sub(matrix.count() * dsub_);
        for (std::size_t j = 0; j < m_; ++j) {
            for (std::size_t r = 0; r < matrix.count(); ++r) {
                const auto row = matrix.row(r).subspan(j * dsub_, dsub_);
                std::copy(row.begin(), row.end(), sub.begin() + static_cast<std::ptrdiff_t>(r * dsub_));
            }
            const auto km = kmeans(sub, dsub_, ks_, iters, seed + j);
            std::copy(km.centroids.begin(), km.centroids.end(),
                      codebooks_.begin() + static_cast<std::ptrdiff_t>(j * ks_ * dsub_));
        }
        trained_ = true;
    }

    /// Nearest-centroid codes for every row of `matrix`, count x m.
    std::vector<std::uint8_t>
    encode(const EmbeddingMatrix& matrix) const {
        require_trained();
        check_dim(matrix.dim());
        std::vector<std::uint8_t> codes(matrix.count() * m_);
        for (std::size_t r = 0; r < matrix.count(); ++r) {
            const auto row = matrix.row(r);
            for (std::size_t j = 0; j < m_; ++j) {
                const auto x = row.subspan(j * dsub_, dsub_);
                std::size_t best = 0;
                float best_d = std::numeric_limits<float>::infinity();
                for (std::size_t c = 0; c < ks_; ++c) {
                    const float d = squared_l2<float>(x, centroid(j, c));
                    if (d < best_d) {
                        best_d = d;
                        best = c;
                    }
                }
                codes[r * m_ + j] = static_cast<std::uint8_t>(best);
            }
        }
        return codes;
    }

    /// Encodes and appends rows.
    void
    add(const EmbeddingMatrix& matrix) {
        auto codes = encode(matrix);
        codes_.insert(codes_.end(), codes.begin(), codes.end());
        count_ += matrix.count();
    }

    std::vector<float>
    reconstruct(std::size_t r) const {
        require_trained();
        std::vector<float> out(dim_);
        for (std::size_t j = 0; j < m_; ++j) {
            const auto c = centroid(j, codes_[r * m_ + j]);
            std::copy(c.begin(), c.end(), out.begin() + static_cast<std::ptrdiff_t>(j * dsub_));
        }
        return out;
    }

    /// m x ks inner products between query subvectors and centroids.
    std::vector<float>
    lookup_table(std::span<const float> q) const {
        std::vector<float> table(m_ * ks_);
        for (std::size_t j = 0; j < m_; ++j) {
            const auto qs = q.subspan(j * dsub_, dsub_);
            for (std::size_t c = 0; c < ks_; ++c) {
                table[j * ks_ + c] = dot<float>(qs, centroid(j, c));
            }
        }
        return table;
    }

    SearchResult
    search(std::span<const float> query, std::size_t k) const {
        require_trained();
        if (k == 0) {
            throw InvalidArgument("pq_search: k must be >= 1");
        }
        if (count_ == 0) {
            return {{}, SearchStatus::kEmptyCorpus};
        }
        check_dim(query.size());
        const auto q = normalize_query(query);
        const auto table = lookup_table(q);
        TopKCollector top(std::min(k, count_));
        for (std::size_t r = 0; r < count_; ++r) {
            const std::uint8_t* code = codes_.data() + r * m_;
            float s = 0.0f;
            for (std::size_t j = 0; j < m_; ++j) {
                s += table[j * ks_ + code[j]];
            }
            top.push({r, s});
        }
        return {std::move(top).take_sorted(), SearchStatus::kOk};
    }

    bool
    trained() const noexcept {
        return trained_;
    }
    std::size_t
    dim() const noexcept {
        return dim_;
    }
    std::size_t
    m() const noexcept {
        return m_;
    }
    std::size_t
    ks() const noexcept {
        return ks_;
    }
    std::size_t
    count() const noexcept {
        return count_;
    }
    std::span<const float>
    codebooks() const noexcept {
        return codebooks_;
    }
    std::span<const std::uint8_t>
    codes() const noexcept {
        return codes_;
    }
    std::span<const float>
    centroid(std::size_t sub, std::size_t c) const noexcept {
        return std::span<const float>(codebooks_).subspan((sub * ks_ + c) * dsub_, dsub_);
    }

    // PQIX: header extra[0] = m, extra[1] = ks; payload = codebooks (float32,
    // m x ks x dim/m) then codes (u8, count x m).
    void
    save(const std::string& path) const {
        require_trained();
        auto out = format::open_output(path);
        format::FileHeader h;
        h.magic = format::magic_of(kPqMagic);
        h.dim = static_cast<std::uint32_t>(dim_);
        h.count = count_;
        h.extra[0] = m_;
        h.extra[1] = ks_;
        format::write_header(out, h);
        format::write_span(out, codebooks());
        format::write_span(out, codes());
        format::finish_output(out, path);
    }

    static PQIndex
    load(const std::string& path) {
        auto in = format::open_input(path);
        const auto h = format::read_header(in, kPqMagic, path);
        PQIndex idx;
        try {
            idx = PQIndex(h.dim, h.extra[0], h.extra[1]);
        } catch (const InvalidArgument& e) {
            throw FormatError(FormatErrorKind::kCorrupt, path + ": " + e.what());
        }
        const auto cb_bytes = format::checked_payload_bytes(idx.m_ * idx.ks_, idx.dsub_, 4, path);
        const auto code_bytes = format::checked_payload_bytes(h.count, idx.m_, 1, path);
        if (format::remaining_bytes(in) < cb_bytes + code_bytes) {
            throw FormatError(FormatErrorKind::kTruncated, path + ": payload shorter than header declares");
        }
        idx.codebooks_.resize(idx.m_ * idx.ks_ * idx.dsub_);
        format::read_exact(in, std::span<float>(idx.codebooks_), path);
        idx.codes_.resize(h.count * idx.m_);
        format::read_exact(in, std::span<std::uint8_t>(idx.codes_), path);
        for (auto c : idx.codes_) {
            if (c >= idx.ks_) {
                throw FormatError(FormatErrorKind::kCorrupt, path + ": code byte out of range");
            }
        }
        idx.count_ = h.count;
        idx.trained_ = true;
        return idx;
    }

 private:
    void
    check_dim(std::size_t d) const {
        if (d != dim_) {
            throw InvalidArgument("pq: dim " + std::to_string(d) + " does not match index dim " + std::to_string(dim_));
        }
    }
    void
    require_trained() const {
        if (!trained_) {
            throw StateError("pq: index is not trained");
        }
    }

    std::size_t dim_ = 0;
    std::size_t m_ = 0;
    std::size_t ks_ = 0;
    std::size_t dsub_ = 0;
    std::size_t count_ = 0;
    bool trained_ = false;
    std::vector<float> codebooks_;
    std::vector<std::uint8_t> codes_;
};

}  // namespace qirat::ann
