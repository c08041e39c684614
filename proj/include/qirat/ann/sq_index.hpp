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

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qirat/common.hpp"
#include "qirat/embed_store.hpp"
#include "qirat/exact_search.hpp"
#include "qirat/format.hpp"
#include "qirat/half.hpp"
#include "qirat/kernels.hpp"

namespace qirat::ann {

inline constexpr std::string_view kSqMagic = "SQIX";

/// Exact scan over binary16-compressed rows. Each row is widened back to
/// float32 before scoring with the same kernel as the exact search.
class SQIndex {
 public:
    SQIndex() = default;

    explicit SQIndex(const EmbeddingMatrix& matrix) : dim_(matrix.dim()), count_(matrix.count()) {
        codes_.resize(matrix.values().size());
        const auto values = matrix.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (std::fabs(values[i]) > kHalfMax) {
                throw InvalidArgument("sq_build: value " + std::to_string(values[i]) + " in row " +
                                      std::to_string(i / dim_) + " overflows float16");
            }
            codes_[i] = float_to_half(values[i]);
        }
    }

    std::size_t
    dim() const noexcept {
        return dim_;
    }
    std::size_t
    count() const noexcept {
        return count_;
    }
    std::span<const std::uint16_t>
    codes() const noexcept {
        return codes_;
    }

    std::vector<float>
    decode_row(std::size_t r) const {
        std::vector<float> out(dim_);
        widen_halves(std::span<const std::uint16_t>(codes_).subspan(r * dim_, dim_), out);
        return out;
    }

    SearchResult
    search(std::span<const float> query, std::size_t k) const {
        if (k == 0) {
            throw InvalidArgument("sq_search: k must be >= 1");
        }
        if (count_ == 0) {
            return {{}, SearchStatus::kEmptyCorpus};
        }
        if (query.size() != dim_) {
            throw InvalidArgument("sq_search: query dim mismatch");
        }
        const auto q = normalize_query(query);
        std::vector<float> buf(dim_);
        TopKCollector top(std::min(k, count_));
        const std::span<const std::uint16_t> all(codes_);
        for (std::size_t r = 0; r < count_; ++r) {
            widen_halves(all.subspan(r * dim_, dim_), buf);
            top.push({r, dot<float>(q, buf)});
        }
        return {std::move(top).take_sorted(), SearchStatus::kOk};
    }

    void
    save(const std::string& path) const {
        auto out = format::open_output(path);
        format::FileHeader h;
        h.magic = format::magic_of(kSqMagic);
        h.dtype = static_cast<std::uint8_t>(DType::kFloat16);
        h.dim = static_cast<std::uint32_t>(dim_);
        h.count = count_;
        format::write_header(out, h);
        format::write_span(out, codes());
        format::finish_output(out, path);
    }

    static SQIndex
    load(const std::string& path) {
        auto in = format::open_input(path);
        const auto h = format::read_header(in, kSqMagic, path);
        if (h.dim == 0 || h.dtype != static_cast<std::uint8_t>(DType::kFloat16)) {
            throw FormatError(FormatErrorKind::kCorrupt, path + ": bad dim or dtype");
        }
        const auto bytes = format::checked_payload_bytes(h.count, h.dim, 2, path);
        if (format::remaining_bytes(in) < bytes) {
            throw FormatError(FormatErrorKind::kTruncated, path + ": payload shorter than header declares");
        }
        SQIndex idx;
        idx.dim_ = h.dim;
        idx.count_ = h.count;
        idx.codes_.resize(h.count * h.dim);
        format::read_exact(in, std::span<std::uint16_t>(idx.codes_), path);
        return idx;
    }

 private:
    std::size_t dim_ = 0;
    std::size_t count_ = 0;
    std::vector<std::uint16_t> codes_;
};

}  // namespace qirat::ann
