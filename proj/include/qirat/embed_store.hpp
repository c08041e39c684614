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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qirat/common.hpp"
#include "qirat/embedder.hpp"
#include "qirat/format.hpp"
#include "qirat/half.hpp"

namespace qirat {

enum class DType : std::uint8_t { kFloat32 = 0, kFloat16 = 1 };

inline const char*
to_string(DType dtype) {
    return dtype == DType::kFloat16 ? "float16" : "float32";
}

struct PassageRecord {
    std::string id;
    std::string text;
    std::optional<std::string> lang;
};

/// Row-major count x dim matrix. Values are held as float32 in memory; dtype
/// records the on-disk precision (float16 matrices only hold values that are
/// exactly representable in binary16).
class EmbeddingMatrix {
 public:
    EmbeddingMatrix() = default;

    EmbeddingMatrix(std::size_t count, std::size_t dim, DType dtype = DType::kFloat32)
        : dim_(dim), count_(count), dtype_(dtype), values_(count * dim, 0.0f) {
        if (dim == 0) {
            throw InvalidArgument("embedding matrix: dim must be positive");
        }
    }

    EmbeddingMatrix(std::size_t dim, std::vector<float> values, DType dtype = DType::kFloat32,
                    bool normalized = false)
        : dim_(dim), dtype_(dtype), normalized_(normalized), values_(std::move(values)) {
        if (dim == 0) {
            throw InvalidArgument("embedding matrix: dim must be positive");
        }
        if (values_.size() % dim != 0) {
            throw InvalidArgument("embedding matrix: value count is not a multiple of dim");
        }
        count_ = values_.size() / dim;
        if (dtype_ == DType::kFloat16) {
            round_to_half();
        }
        validate();
    }

    std::size_t
    dim() const noexcept {
        return dim_;
    }
    std::size_t
    count() const noexcept {
        return count_;
    }
    DType
    dtype() const noexcept {
        return dtype_;
    }
    bool
    normalized() const noexcept {
        return normalized_;
    }
    bool
    empty() const noexcept {
        return count_ == 0;
    }

    std::span<const float>
    row(std::size_t r) const noexcept {
        return {values_.data() + r * dim_, dim_};
    }
    std::span<float>
    mutable_row(std::size_t r) noexcept {
        normalized_ = false;
        return {values_.data() + r * dim_, dim_};
    }
    std::span<const float>
    values() const noexcept {
        return values_;
    }

    /// Flag only; use normalize_rows() to actually normalize.
    void
    mark_normalized(bool normalized) noexcept {
        normalized_ = normalized;
    }

    /// Rounds every value to binary16 and switches dtype to float16.
    void
    round_to_half() {
        for (auto& v : values_) {
            if (std::isfinite(v) && std::fabs(v) > kHalfMax) {
                throw InvalidArgument("embedding matrix: value " + std::to_string(v) + " overflows float16");
            }
            v = half_to_float(float_to_half(v));
        }
        dtype_ = DType::kFloat16;
    }

    /// Checks finiteness and, when flagged normalized, unit row norms.
    void
    validate() const {
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) {
                throw InvalidArgument("embedding matrix: non-finite value in row " + std::to_string(i / dim_));
            }
        }
        if (normalized_) {
            const double tol = dtype_ == DType::kFloat16 ? 1e-3 : 1e-4;
            for (std::size_t r = 0; r < count_; ++r) {
                const double norm = l2(row(r));
                if (std::fabs(norm - 1.0) > tol) {
                    throw InvalidArgument("embedding matrix: row " + std::to_string(r) +
                                          " flagged normalized but has norm " + std::to_string(norm));
                }
            }
        }
    }

    void
    append_row(std::span<const float> v) {
        if (v.size() != dim_) {
            throw InvalidArgument("embedding matrix: appended row has length " + std::to_string(v.size()) +
                                  ", expected " + std::to_string(dim_));
        }
        values_.insert(values_.end(), v.begin(), v.end());
        ++count_;
    }

    friend bool
    operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
        if (a.dim_ != b.dim_ || a.count_ != b.count_ || a.dtype_ != b.dtype_ || a.normalized_ != b.normalized_) {
            return false;
        }
        // bitwise, so -0.0 != 0.0 and identical NaN payloads would compare equal
        return std::equal(a.values_.begin(), a.values_.end(), b.values_.begin(),
                          [](float x, float y) { return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y); });
    }

 private:
    static double
    l2(std::span<const float> v) {
        double s = 0.0;
        for (float x : v) {
            s += static_cast<double>(x) * x;
        }
        return std::sqrt(s);
    }

    std::size_t dim_ = 0;
    std::size_t count_ = 0;
    DType dtype_ = DType::kFloat32;
    bool normalized_ = false;
    std::vector<float> values_;
};

/// Passage ids in row order.
class IdMap {
 public:
    IdMap() = default;

    explicit IdMap(std::vector<std::string> ids) : ids_(std::move(ids)) {
        std::unordered_set<std::string_view> seen;
        seen.reserve(ids_.size());
        for (const auto& id : ids_) {
            if (id.empty()) {
                throw InvalidArgument("id map: empty passage id");
            }
            if (id.find('\n') != std::string::npos) {
                throw InvalidArgument("id map: passage id contains a newline: " + id);
            }
            if (!seen.insert(id).second) {
                throw InvalidArgument("id map: duplicate passage id \"" + id + "\"");
            }
        }
    }

    std::size_t
    size() const noexcept {
        return ids_.size();
    }
    const std::string&
    at(std::size_t row) const {
        return ids_.at(row);
    }
    const std::vector<std::string>&
    ids() const noexcept {
        return ids_;
    }

    friend bool
    operator==(const IdMap&, const IdMap&) = default;

 private:
    std::vector<std::string> ids_;
};

/// Half-open row range [begin, end).
struct RowRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t
    size() const noexcept {
        return end - begin;
    }
    bool
    empty() const noexcept {
        return begin == end;
    }
    friend bool
    operator==(const RowRange&, const RowRange&) = default;
};

using Partition = std::vector<RowRange>;

/// Splits [0, count) into `workers` contiguous ranges whose sizes differ by at
/// most one; the first count % workers ranges get the extra row. When
/// workers > count the trailing ranges are empty.
inline Partition
partition(std::size_t count, std::size_t workers) {
    if (workers == 0) {
        throw InvalidArgument("partition: workers must be >= 1");
    }
    Partition parts;
    parts.reserve(workers);
    const std::size_t base = count / workers;
    const std::size_t extra = count % workers;
    std::size_t start = 0;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t len = base + (w < extra ? 1 : 0);
        parts.push_back({start, start + len});
        start += len;
    }
    return parts;
}

/// Divides every row by its L2 norm (computed in double). Rejects all-zero rows.
inline EmbeddingMatrix
normalize_rows(EmbeddingMatrix m) {
    for (std::size_t r = 0; r < m.count(); ++r) {
        auto row = m.mutable_row(r);
        double s = 0.0;
        for (float x : row) {
            s += static_cast<double>(x) * x;
        }
        if (s == 0.0) {
            throw InvalidArgument("normalize_rows: row " + std::to_string(r) + " is all zeros");
        }
        const double norm = std::sqrt(s);
        for (auto& x : row) {
            x = static_cast<float>(x / norm);
        }
    }
    if (m.dtype() == DType::kFloat16) {
        m.round_to_half();
    }
    m.mark_normalized(true);
    return m;
}

// ---------------------------------------------------------------------------
// On-disk layout: <path> holds the EMBS matrix, <path>.ids the id map (one id
// per line), <path>.passages.jsonl an optional copy of the passage records.

inline constexpr std::string_view kEmbeddingMagic = "EMBS";

inline std::string
ids_path(const std::string& index_path) {
    return index_path + ".ids";
}

inline std::string
passages_path(const std::string& index_path) {
    return index_path + ".passages.jsonl";
}

inline void
write_embeddings(const std::string& path, const EmbeddingMatrix& m) {
    auto out = format::open_output(path);
    format::FileHeader h;
    h.magic = format::magic_of(kEmbeddingMagic);
    h.dtype = static_cast<std::uint8_t>(m.dtype());
    h.normalized = m.normalized() ? 1 : 0;
    h.dim = static_cast<std::uint32_t>(m.dim());
    h.count = m.count();
    format::write_header(out, h);
    if (m.dtype() == DType::kFloat32) {
        format::write_span(out, m.values());
    } else {
        std::vector<std::uint16_t> halves(m.values().size());
        std::transform(m.values().begin(), m.values().end(), halves.begin(), float_to_half);
        format::write_span(out, std::span<const std::uint16_t>(halves));
    }
    format::finish_output(out, path);
}

inline EmbeddingMatrix
read_embeddings(const std::string& path) {
    auto in = format::open_input(path);
    const auto h = format::read_header(in, kEmbeddingMagic, path);
    if (h.dtype > 1) {
        throw FormatError(FormatErrorKind::kCorrupt, path + ": unknown dtype " + std::to_string(h.dtype));
    }
    if (h.dim == 0) {
        throw FormatError(FormatErrorKind::kCorrupt, path + ": dim is zero");
    }
    const auto dtype = static_cast<DType>(h.dtype);
    const std::uint64_t elem = dtype == DType::kFloat32 ? 4 : 2;
    const auto bytes = format::checked_payload_bytes(h.count, h.dim, elem, path);
    const auto available = format::remaining_bytes(in);
    if (available < bytes) {
        throw FormatError(FormatErrorKind::kTruncated,
                          path + ": header declares " + std::to_string(h.count) + " rows but payload holds " +
                              std::to_string(available / (elem * h.dim)));
    }
    if (available > bytes) {
        throw FormatError(FormatErrorKind::kCorrupt, path + ": trailing bytes after payload");
    }
    std::vector<float> values(h.count * h.dim);
    if (dtype == DType::kFloat32) {
        format::read_exact(in, std::span<float>(values), path);
    } else {
        std::vector<std::uint16_t> halves(values.size());
        format::read_exact(in, std::span<std::uint16_t>(halves), path);
        widen_halves(halves, values);
    }
    try {
        return EmbeddingMatrix(h.dim, std::move(values), dtype, h.normalized != 0);
    } catch (const InvalidArgument& e) {
        throw FormatError(FormatErrorKind::kCorrupt, path + ": " + e.what());
    }
}

inline void
write_id_map(const std::string& path, const IdMap& ids) {
    auto out = format::open_output(path);
    for (const auto& id : ids.ids()) {
        out << id << '\n';
    }
    format::finish_output(out, path);
}

inline IdMap
read_id_map(const std::string& path) {
    auto in = format::open_input(path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        ids.push_back(std::move(line));
    }
    try {
        return IdMap(std::move(ids));
    } catch (const InvalidArgument& e) {
        throw FormatError(FormatErrorKind::kCorrupt, path + ": " + e.what());
    }
}

inline PassageRecord
passage_from_json(const nlohmann::json& doc) {
    PassageRecord p;
    p.id = doc.at("id").is_string() ? doc.at("id").get<std::string>() : doc.at("id").dump();
    p.text = doc.at("text").get<std::string>();
    if (doc.contains("lang") && doc.at("lang").is_string()) {
        p.lang = doc.at("lang").get<std::string>();
    }
    return p;
}

inline nlohmann::json
passage_to_json(const PassageRecord& p) {
    nlohmann::json doc = {{"id", p.id}, {"text", p.text}};
    if (p.lang) {
        doc["lang"] = *p.lang;
    }
    return doc;
}

/// Reads a JSON-lines passage corpus; blank lines are skipped.
inline std::vector<PassageRecord>
read_passages(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(FormatErrorKind::kIo, path + ": cannot open for reading");
    }
    std::vector<PassageRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(passage_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(FormatErrorKind::kCorrupt, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void
write_passages(const std::string& path, std::span<const PassageRecord> passages) {
    auto out = format::open_output(path);
    for (const auto& p : passages) {
        out << passage_to_json(p).dump() << '\n';
    }
    format::finish_output(out, path);
}

struct StoredIndex {
    EmbeddingMatrix matrix;
    IdMap ids;
};

/// Embeds, normalizes and writes a corpus. Returns what was written.
inline StoredIndex
ingest_corpus(std::span<const PassageRecord> passages, const Embedder& embedder, const std::string& path,
              DType dtype = DType::kFloat32) {
    if (passages.empty()) {
        throw InvalidArgument("ingest: no passages");
    }
    std::vector<std::string> ids;
    ids.reserve(passages.size());
    std::unordered_set<std::string_view> seen;
    for (const auto& p : passages) {
        if (p.id.empty()) {
            throw InvalidArgument("ingest: passage with empty id");
        }
        if (p.text.empty()) {
            throw InvalidArgument("ingest: passage \"" + p.id + "\" has empty text");
        }
        if (!seen.insert(p.id).second) {
            throw InvalidArgument("ingest: duplicate passage id \"" + p.id + "\"");
        }
        ids.push_back(p.id);
    }
    const std::size_t dim = embedder.dim();
    std::vector<float> values;
    values.reserve(passages.size() * dim);
    for (const auto& p : passages) {
        const auto v = embedder.embed(p.text);
        if (v.size() != dim) {
            throw InvalidArgument("ingest: embedder returned " + std::to_string(v.size()) + " values for \"" + p.id +
                                  "\", expected " + std::to_string(dim));
        }
        values.insert(values.end(), v.begin(), v.end());
    }
    EmbeddingMatrix raw(dim, std::move(values));
    EmbeddingMatrix matrix;
    try {
        matrix = normalize_rows(std::move(raw));
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(std::string("ingest: zero embedding: ") + e.what());
    }
    if (dtype == DType::kFloat16) {
        matrix.round_to_half();
    }
    StoredIndex stored{std::move(matrix), IdMap(std::move(ids))};
    write_embeddings(path, stored.matrix);
    write_id_map(ids_path(path), stored.ids);
    write_passages(passages_path(path), passages);
    return stored;
}

/// Loads an EMBS file and its id map, checking that they agree.
inline StoredIndex
load_index(const std::string& path) {
    StoredIndex idx{read_embeddings(path), read_id_map(ids_path(path))};
    if (idx.ids.size() != idx.matrix.count()) {
        throw FormatError(FormatErrorKind::kCorrupt, path + ": id map has " + std::to_string(idx.ids.size()) +
                                                         " ids for " + std::to_string(idx.matrix.count()) + " rows");
    }
    return idx;
}

}  // namespace qirat
