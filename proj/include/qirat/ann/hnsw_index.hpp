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
#include <cmath>
#include <cstdint>
#include <memory>
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

inline constexpr std::string_view kHnswMagic = "HNSX";

struct HNSWParams {
    std::size_t M = 16;
    std::size_t ef_construction = 200;
    std::uint64_t seed = 100;
    /// Diversity heuristic for neighbor selection; false keeps the M closest.
    bool heuristic = true;
};

/// Hierarchical navigable small-world graph over the rows of a unit-norm
/// matrix, scored by inner product (= cosine). Node levels are
/// floor(-ln(U) / ln(M)); upper layers keep at most M links per node and
/// layer 0 at most 2M. Search descends greedily from the entry point to layer
/// 1, then runs a best-first beam of width ef at layer 0.
class HNSWIndex {
 public:
    HNSWIndex(std::shared_ptr<const EmbeddingMatrix> matrix, const HNSWParams& params = {})
        : matrix_(std::move(matrix)), params_(params) {
        if (!matrix_) {
            throw InvalidArgument("hnsw: null matrix");
        }
        if (params_.M < 2) {
            throw InvalidArgument("hnsw: M must be >= 2");
        }
        if (params_.ef_construction == 0) {
            throw InvalidArgument("hnsw: ef_construction must be >= 1");
        }
        level_mult_ = 1.0 / std::log(static_cast<double>(params_.M));
    }

    /// Inserts every row of the matrix in row order.
    static HNSWIndex
    build(std::shared_ptr<const EmbeddingMatrix> matrix, const HNSWParams& params = {}) {
        HNSWIndex idx(std::move(matrix), params);
        SeededRng rng(params.seed);
        const std::size_t n = idx.matrix_->count();
        idx.links_.resize(n);
        idx.visited_.assign(n, 0);
        for (std::size_t r = 0; r < n; ++r) {
            const auto level = static_cast<std::size_t>(std::floor(-std::log(rng.unit_open_closed()) * idx.level_mult_));
            idx.insert(r, level);
        }
        return idx;
    }

    std::size_t
    count() const noexcept {
        return links_.size();
    }
    std::size_t
    entry_point() const noexcept {
        return entry_;
    }
    std::size_t
    max_level() const noexcept {
        return max_level_;
    }
    std::size_t
    level(std::size_t node) const {
        return links_.at(node).size() - 1;
    }
    const std::vector<std::uint32_t>&
    neighbors(std::size_t node, std::size_t lvl) const {
        return links_.at(node).at(lvl);
    }
    std::size_t
    max_links(std::size_t lvl) const noexcept {
        return lvl == 0 ? 2 * params_.M : params_.M;
    }
    const HNSWParams&
    params() const noexcept {
        return params_;
    }

    SearchResult
    search(std::span<const float> query, std::size_t k, std::size_t ef_search) const {
        if (k == 0) {
            throw InvalidArgument("hnsw_search: k must be >= 1");
        }
        if (ef_search < k) {
            throw InvalidArgument("hnsw_search: ef_search " + std::to_string(ef_search) + " < k " + std::to_string(k));
        }
        if (links_.empty()) {
            return {{}, SearchStatus::kEmptyCorpus};
        }
        if (query.size() != matrix_->dim()) {
            throw InvalidArgument("hnsw_search: query dim mismatch");
        }
        const auto q = normalize_query(query);
        thread_local std::vector<std::uint32_t> visited;
        thread_local std::uint32_t epoch = 0;
        if (visited.size() < links_.size()) {
            visited.assign(links_.size(), 0);
            epoch = 0;
        }
        ScoredHit cur{entry_, score(q, entry_)};
        for (std::size_t lvl = max_level_; lvl > 0; --lvl) {
            cur = greedy_closest(q, cur, lvl);
        }
        auto beam = search_layer(q, {cur}, ef_search, 0, visited, epoch);
        if (beam.size() > k) {
            beam.resize(k);
        }
        return {std::move(beam), SearchStatus::kOk};
    }

    // HNSX: header extra[0] = M, extra[1] = ef_construction, extra[2] = entry
    // point, extra[3] = max level | heuristic flag << 32. Payload, per node in
    // row order: u32 level, then for each layer 0..level a u32 length followed
    // by that many u32 neighbor rows.
    void
    save(const std::string& path) const {
        auto out = format::open_output(path);
        format::FileHeader h;
        h.magic = format::magic_of(kHnswMagic);
        h.normalized = matrix_->normalized() ? 1 : 0;
        h.dim = static_cast<std::uint32_t>(matrix_->dim());
        h.count = links_.size();
        h.extra = {params_.M, params_.ef_construction, entry_,
                   max_level_ | (static_cast<std::uint64_t>(params_.heuristic) << 32)};
        format::write_header(out, h);
        for (const auto& node : links_) {
            const auto lvl = static_cast<std::uint32_t>(node.size() - 1);
            out.write(reinterpret_cast<const char*>(&lvl), sizeof(lvl));
            for (const auto& list : node) {
                const auto len = static_cast<std::uint32_t>(list.size());
                out.write(reinterpret_cast<const char*>(&len), sizeof(len));
                format::write_span(out, std::span<const std::uint32_t>(list));
            }
        }
        format::finish_output(out, path);
    }

    /// Reattaches a saved graph to the matrix it was built from.
    static HNSWIndex
    load(const std::string& path, std::shared_ptr<const EmbeddingMatrix> matrix) {
        auto in = format::open_input(path);
        const auto h = format::read_header(in, kHnswMagic, path);
        if (!matrix || h.dim != matrix->dim() || h.count != matrix->count()) {
            throw FormatError(FormatErrorKind::kCorrupt, path + ": graph does not match the embedding matrix");
        }
        HNSWParams params;
        params.M = h.extra[0];
        params.ef_construction = h.extra[1];
        params.heuristic = ((h.extra[3] >> 32) & 1u) != 0;
        HNSWIndex idx(std::move(matrix), params);
        idx.entry_ = h.extra[2];
        idx.max_level_ = h.extra[3] & 0xffffffffu;
        const std::size_t n = h.count;
        if (n > 0 && idx.entry_ >= n) {
            throw FormatError(FormatErrorKind::kCorrupt, path + ": entry point out of range");
        }
        idx.links_.resize(n);
        for (std::size_t r = 0; r < n; ++r) {
            std::uint32_t lvl = 0;
            format::read_exact(in, std::span<std::uint32_t>(&lvl, 1), path);
            if (lvl > 64) {
                throw FormatError(FormatErrorKind::kCorrupt, path + ": implausible node level");
            }
            idx.links_[r].resize(lvl + 1);
            for (auto& list : idx.links_[r]) {
                std::uint32_t len = 0;
                format::read_exact(in, std::span<std::uint32_t>(&len, 1), path);
                if (len > n) {
                    throw FormatError(FormatErrorKind::kCorrupt, path + ": neighbor list longer than graph");
                }
                list.resize(len);
                format::read_exact(in, std::span<std::uint32_t>(list), path);
                for (auto v : list) {
                    if (v >= n) {
                        throw FormatError(FormatErrorKind::kCorrupt, path + ": neighbor out of range");
                    }
                }
            }
        }
        if (n > 0 && idx.level(idx.entry_) != idx.max_level_) {
            throw FormatError(FormatErrorKind::kCorrupt, path + ": entry point is not on the top level");
        }
        return idx;
    }

 private:
    float
    score(std::span<const float> q, std::size_t node) const noexcept {
        return dot<float>(q, matrix_->row(node));
    }

    ScoredHit
    greedy_closest(std::span<const float> q, ScoredHit cur, std::size_t lvl) const {
        bool moved = true;
        while (moved) {
            moved = false;
            for (auto nb : links_[cur.row][lvl]) {
                const ScoredHit cand{nb, score(q, nb)};
                if (ranks_before(cand, cur)) {
                    cur = cand;
                    moved = true;
                }
            }
        }
        return cur;
    }

    /// Best-first search on one layer; returns up to ef hits in result order.
    std::vector<ScoredHit>
    search_layer(std::span<const float> q, const std::vector<ScoredHit>& entries, std::size_t ef, std::size_t lvl,
                 std::vector<std::uint32_t>& visited, std::uint32_t& epoch) const {
        if (++epoch == 0) {
            std::fill(visited.begin(), visited.end(), 0);
            epoch = 1;
        }
        // candidates: best on top; results: worst on top
        auto worse = [](const ScoredHit& a, const ScoredHit& b) { return ranks_before(b, a); };
        std::vector<ScoredHit> candidates;
        std::vector<ScoredHit> results;
        for (const auto& e : entries) {
            visited[e.row] = epoch;
            candidates.push_back(e);
            std::push_heap(candidates.begin(), candidates.end(), worse);
            results.push_back(e);
            std::push_heap(results.begin(), results.end(), ranks_before);
        }
        while (results.size() > ef) {
            std::pop_heap(results.begin(), results.end(), ranks_before);
            results.pop_back();
        }
        while (!candidates.empty()) {
            std::pop_heap(candidates.begin(), candidates.end(), worse);
            const ScoredHit c = candidates.back();
            candidates.pop_back();
            if (ranks_before(results.front(), c)) {
                break;
            }
            for (auto nb : links_[c.row][lvl]) {
                if (visited[nb] == epoch) {
                    continue;
                }
                visited[nb] = epoch;
                const ScoredHit hit{nb, score(q, nb)};
                if (results.size() < ef || ranks_before(hit, results.front())) {
                    candidates.push_back(hit);
                    std::push_heap(candidates.begin(), candidates.end(), worse);
                    results.push_back(hit);
                    std::push_heap(results.begin(), results.end(), ranks_before);
                    if (results.size() > ef) {
                        std::pop_heap(results.begin(), results.end(), ranks_before);
                        results.pop_back();
                    }
                }
            }
        }
        std::sort_heap(results.begin(), results.end(), ranks_before);
        return results;
    }

    /// Picks up to `m` links from `candidates` (sorted best first). With the
    /// heuristic, a candidate is skipped when it is closer to an already
    /// selected link than to the base node.
    std::vector<std::uint32_t>
    select_neighbors(const std::vector<ScoredHit>& candidates, std::size_t m) const {
        std::vector<std::uint32_t> out;
        out.reserve(m);
        for (const auto& c : candidates) {
            if (out.size() >= m) {
                break;
            }
            bool keep = true;
            if (params_.heuristic) {
                const auto cv = matrix_->row(c.row);
                for (auto s : out) {
                    if (dot<float>(cv, matrix_->row(s)) > c.score) {
                        keep = false;
                        break;
                    }
                }
            }
            if (keep) {
                out.push_back(static_cast<std::uint32_t>(c.row));
            }
        }
        return out;
    }

    void
    connect(std::size_t from, std::uint32_t to, std::size_t lvl) {
        auto& list = links_[from][lvl];
        list.push_back(to);
        if (list.size() <= max_links(lvl)) {
            return;
        }
        const auto base = matrix_->row(from);
        std::vector<ScoredHit> cands;
        cands.reserve(list.size());
        for (auto v : list) {
            cands.push_back({v, dot<float>(base, matrix_->row(v))});
        }
        std::sort(cands.begin(), cands.end(), ranks_before);
        list = select_neighbors(cands, max_links(lvl));
    }

    void
    insert(std::size_t node, std::size_t node_level) {
        links_[node].resize(node_level + 1);
        if (node == 0) {
            entry_ = 0;
            max_level_ = node_level;
            return;
        }
        const auto q = matrix_->row(node);
        ScoredHit cur{entry_, score(q, entry_)};
        for (std::size_t lvl = max_level_; lvl > node_level; --lvl) {
            cur = greedy_closest(q, cur, lvl);
        }
        std::vector<ScoredHit> entries{cur};
        for (std::size_t lvl = std::min(node_level, max_level_) + 1; lvl-- > 0;) {
            auto found = search_layer(q, entries, params_.ef_construction, lvl, visited_, epoch_);
            auto chosen = select_neighbors(found, params_.M);
            links_[node][lvl] = chosen;
            for (auto nb : chosen) {
                connect(nb, static_cast<std::uint32_t>(node), lvl);
            }
            entries = std::move(found);
        }
        if (node_level > max_level_) {
            max_level_ = node_level;
            entry_ = node;
        }
    }

    std::shared_ptr<const EmbeddingMatrix> matrix_;
    HNSWParams params_;
    double level_mult_ = 0.0;
    std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][level] -> neighbor rows
    std::size_t entry_ = 0;
    std::size_t max_level_ = 0;
    std::vector<std::uint32_t> visited_;  // build-time only
    std::uint32_t epoch_ = 0;
};

}  // namespace qirat::ann
