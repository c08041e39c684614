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

// Uniform search interface over the exact engine and the comparison indexes,
// shared by the benchmark harness, the HTTP service and the CLI.

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qirat/ann/hnsw_index.hpp"
#include "qirat/ann/pq_index.hpp"
#include "qirat/ann/sq_index.hpp"
#include "qirat/common.hpp"
#include "qirat/embed_store.hpp"
#include "qirat/exact_search.hpp"

namespace qirat {

class SearchBackend {
 public:
    virtual ~SearchBackend() = default;

    virtual std::string
    name() const = 0;

    /// Top-k hits for an unnormalized query vector.
    virtual SearchResult
    search(std::span<const float> query, std::size_t k) const = 0;

    virtual std::size_t
    workers() const {
        return 1;
    }
};

enum class BackendKind { kExact, kSq, kPq, kHnsw };

inline const char*
to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::kExact:
            return "exact";
        case BackendKind::kSq:
            return "sq";
        case BackendKind::kPq:
            return "pq";
        case BackendKind::kHnsw:
            return "hnsw";
    }
    return "?";
}

inline BackendKind
parse_backend_kind(std::string_view s) {
    if (s == "exact") {
        return BackendKind::kExact;
    }
    if (s == "sq") {
        return BackendKind::kSq;
    }
    if (s == "pq") {
        return BackendKind::kPq;
    }
    if (s == "hnsw") {
        return BackendKind::kHnsw;
    }
    throw InvalidArgument("unknown backend \"" + std::string(s) + "\" (expected exact, sq, pq or hnsw)");
}

/// Single-context full scan with no worker pool.
class ScanBackend final : public SearchBackend {
 public:
    explicit ScanBackend(std::shared_ptr<const EmbeddingMatrix> matrix, std::string name = "scan (e.s.)")
        : matrix_(std::move(matrix)), name_(std::move(name)) {
    }
    std::string
    name() const override {
        return name_;
    }
    SearchResult
    search(std::span<const float> query, std::size_t k) const override {
        return full_scan_search(*matrix_, query, k);
    }

 private:
    std::shared_ptr<const EmbeddingMatrix> matrix_;
    std::string name_;
};

class ExactBackend final : public SearchBackend {
 public:
    ExactBackend(std::shared_ptr<const EmbeddingMatrix> matrix, std::size_t workers,
                 WorkerReturn mode = WorkerReturn::kLocalTopk)
        : searcher_(std::move(matrix), workers, mode) {
    }
    std::string
    name() const override {
        return "exact " + std::to_string(searcher_.workers()) + " w. (e.s.)";
    }
    SearchResult
    search(std::span<const float> query, std::size_t k) const override {
        return searcher_.search(query, k);
    }
    std::size_t
    workers() const override {
        return searcher_.workers();
    }
    const ExactSearcher&
    searcher() const noexcept {
        return searcher_;
    }

 private:
    ExactSearcher searcher_;
};

class SqBackend final : public SearchBackend {
 public:
    explicit SqBackend(ann::SQIndex index) : index_(std::move(index)) {
    }
    std::string
    name() const override {
        return "SQ fp16 (e.s.)";
    }
    SearchResult
    search(std::span<const float> query, std::size_t k) const override {
        return index_.search(query, k);
    }
    const ann::SQIndex&
    index() const noexcept {
        return index_;
    }

 private:
    ann::SQIndex index_;
};

class PqBackend final : public SearchBackend {
 public:
    explicit PqBackend(ann::PQIndex index) : index_(std::move(index)) {
    }
    std::string
    name() const override {
        return "PQ (e.s.)";
    }
    SearchResult
    search(std::span<const float> query, std::size_t k) const override {
        return index_.search(query, k);
    }
    const ann::PQIndex&
    index() const noexcept {
        return index_;
    }

 private:
    ann::PQIndex index_;
};

/// The beam width used is max(ef_search, k).
class HnswBackend final : public SearchBackend {
 public:
    HnswBackend(ann::HNSWIndex index, std::size_t ef_search) : index_(std::move(index)), ef_search_(ef_search) {
    }
    std::string
    name() const override {
        return "HNSW";
    }
    SearchResult
    search(std::span<const float> query, std::size_t k) const override {
        return index_.search(query, k, std::max(ef_search_, k));
    }
    const ann::HNSWIndex&
    index() const noexcept {
        return index_;
    }

 private:
    ann::HNSWIndex index_;
    std::size_t ef_search_;
};

struct BackendOptions {
    std::size_t workers = 1;
    WorkerReturn worker_return = WorkerReturn::kLocalTopk;
    ann::PQParams pq;
    ann::HNSWParams hnsw;
    std::size_t ef_search = 100;
    /// When set, SQ/PQ/HNSW load "<cache_prefix>.sqix|.pqix|.hnsx" if present.
    std::optional<std::string> cache_prefix;
};

inline std::string
index_cache_path(const std::string& prefix, BackendKind kind) {
    switch (kind) {
        case BackendKind::kSq:
            return prefix + ".sqix";
        case BackendKind::kPq:
            return prefix + ".pqix";
        case BackendKind::kHnsw:
            return prefix + ".hnsx";
        case BackendKind::kExact:
            break;
    }
    return prefix;
}

inline std::unique_ptr<SearchBackend>
make_backend(BackendKind kind, std::shared_ptr<const EmbeddingMatrix> matrix, const BackendOptions& opt) {
    auto cached = [&](BackendKind k) -> std::optional<std::string> {
        if (!opt.cache_prefix) {
            return std::nullopt;
        }
        auto p = index_cache_path(*opt.cache_prefix, k);
        if (!std::filesystem::exists(p)) {
            return std::nullopt;
        }
        return p;
    };
    auto matching = [&](auto idx, const std::string& path) {
        if (idx.count() != matrix->count() || idx.dim() != matrix->dim()) {
            throw FormatError(FormatErrorKind::kCorrupt,
                              path + ": cached index does not match the embedding matrix; rebuild or delete it");
        }
        return idx;
    };
    switch (kind) {
        case BackendKind::kExact:
            return std::make_unique<ExactBackend>(std::move(matrix), opt.workers, opt.worker_return);
        case BackendKind::kSq: {
            if (auto p = cached(kind)) {
                return std::make_unique<SqBackend>(matching(ann::SQIndex::load(*p), *p));
            }
            return std::make_unique<SqBackend>(ann::SQIndex(*matrix));
        }
        case BackendKind::kPq: {
            if (auto p = cached(kind)) {
                return std::make_unique<PqBackend>(matching(ann::PQIndex::load(*p), *p));
            }
            return std::make_unique<PqBackend>(ann::PQIndex::build(*matrix, opt.pq));
        }
        case BackendKind::kHnsw: {
            if (auto p = cached(kind)) {
                return std::make_unique<HnswBackend>(ann::HNSWIndex::load(*p, std::move(matrix)), opt.ef_search);
            }
            return std::make_unique<HnswBackend>(ann::HNSWIndex::build(std::move(matrix), opt.hnsw), opt.ef_search);
        }
    }
    throw InvalidArgument("unknown backend kind");
}

}  // namespace qirat
