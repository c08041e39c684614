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
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <span>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "qirat/common.hpp"
#include "qirat/embed_store.hpp"
#include "qirat/kernels.hpp"

namespace qirat {

struct ScoredHit {
    std::size_t row = 0;
    float score = 0.0f;

    friend bool
    operator==(const ScoredHit&, const ScoredHit&) = default;
};

/// Result order used everywhere: score descending, then row ascending.
inline bool
ranks_before(const ScoredHit& a, const ScoredHit& b) noexcept {
    return a.score > b.score || (a.score == b.score && a.row < b.row);
}

/// Keeps the k best hits seen so far under ranks_before.
class TopKCollector {
 public:
    explicit TopKCollector(std::size_t k) : k_(k) {
        heap_.reserve(k);
    }

    void
    push(const ScoredHit& hit) {
        if (k_ == 0) {
            return;
        }
        if (heap_.size() < k_) {
            heap_.push_back(hit);
            std::push_heap(heap_.begin(), heap_.end(), ranks_before);
        } else if (ranks_before(hit, heap_.front())) {
            std::pop_heap(heap_.begin(), heap_.end(), ranks_before);
            heap_.back() = hit;
            std::push_heap(heap_.begin(), heap_.end(), ranks_before);
        }
    }

    /// Worst retained hit; only meaningful when full().
    const ScoredHit&
    worst() const {
        return heap_.front();
    }
    bool
    full() const noexcept {
        return heap_.size() == k_;
    }

    std::vector<ScoredHit>
    take_sorted() && {
        std::sort_heap(heap_.begin(), heap_.end(), ranks_before);
        return std::move(heap_);
    }

 private:
    std::size_t k_;
    std::vector<ScoredHit> heap_;
};

/// dot(q, p) / (|q| |p|). Both vectors must be non-zero and equally long.
inline float
cosine(std::span<const float> q, std::span<const float> p) {
    if (q.size() != p.size()) {
        throw InvalidArgument("cosine: length mismatch");
    }
    const double nq = l2_norm(q);
    const double np = l2_norm(p);
    if (nq == 0.0 || np == 0.0) {
        throw InvalidArgument("cosine: zero vector");
    }
    return static_cast<float>(static_cast<double>(dot(q, p)) / (nq * np));
}

/// Unit-norm copy of a query vector.
inline std::vector<float>
normalize_query(std::span<const float> q) {
    const double n = l2_norm(q);
    if (n == 0.0 || !std::isfinite(n)) {
        throw InvalidArgument("query: zero or non-finite vector");
    }
    std::vector<float> out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        out[i] = static_cast<float>(q[i] / n);
    }
    return out;
}

/// One hit per row of `range`, in row order. `query` must already be unit
/// norm; rows are unit norm from ingest, so the score is the cosine.
inline std::vector<ScoredHit>
score_chunk(std::span<const float> query, const EmbeddingMatrix& matrix, RowRange range) {
    if (range.begin > range.end || range.end > matrix.count()) {
        throw InvalidArgument("score_chunk: range [" + std::to_string(range.begin) + ", " +
                              std::to_string(range.end) + ") outside [0, " + std::to_string(matrix.count()) + ")");
    }
    if (query.size() != matrix.dim()) {
        throw InvalidArgument("score_chunk: query dim mismatch");
    }
    std::vector<ScoredHit> hits;
    hits.reserve(range.size());
    for (std::size_t r = range.begin; r < range.end; ++r) {
        hits.push_back({r, dot(query, matrix.row(r))});
    }
    return hits;
}

/// Global top-k over per-worker lists that cover disjoint rows.
inline std::vector<ScoredHit>
merge_topk(std::span<const std::vector<ScoredHit>> worker_outputs, std::size_t k) {
    std::vector<ScoredHit> all;
    std::size_t total = 0;
    for (const auto& out : worker_outputs) {
        total += out.size();
    }
    all.reserve(total);
    for (const auto& out : worker_outputs) {
        all.insert(all.end(), out.begin(), out.end());
    }
    const std::size_t keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), ranks_before);
    all.resize(keep);
    return all;
}

enum class WorkerReturn { kAllScores, kLocalTopk };

struct SearchConfig {
    std::size_t workers = 1;
    std::size_t topk = 10;
    WorkerReturn worker_return = WorkerReturn::kLocalTopk;
};

enum class SearchStatus { kOk, kEmptyCorpus };

struct SearchResult {
    std::vector<ScoredHit> hits;
    SearchStatus status = SearchStatus::kOk;
};

/// Single-context scan of the whole matrix; the benchmark baseline.
inline SearchResult
full_scan_search(const EmbeddingMatrix& matrix, std::span<const float> query, std::size_t topk) {
    if (topk == 0) {
        throw InvalidArgument("search: topk must be >= 1");
    }
    if (matrix.empty()) {
        return {{}, SearchStatus::kEmptyCorpus};
    }
    if (query.size() != matrix.dim()) {
        throw InvalidArgument("search: query has dim " + std::to_string(query.size()) + ", index has " +
                              std::to_string(matrix.dim()));
    }
    const auto q = normalize_query(query);
    TopKCollector top(std::min(topk, matrix.count()));
    for (std::size_t r = 0; r < matrix.count(); ++r) {
        top.push({r, dot<float>(q, matrix.row(r))});
    }
    return {std::move(top).take_sorted(), SearchStatus::kOk};
}

/// Exact search over a pool of long-lived workers, one contiguous chunk each.
/// A query is pushed to every worker's FIFO; each worker scores its chunk and
/// replies with either all its scores or its local top-k; the calling thread
/// merges. Searches may be issued from any number of threads.
class ExactSearcher {
 public:
    ExactSearcher(std::shared_ptr<const EmbeddingMatrix> matrix, std::size_t workers,
                  WorkerReturn mode = WorkerReturn::kLocalTopk)
        : matrix_(std::move(matrix)), mode_(mode) {
        if (!matrix_) {
            throw InvalidArgument("exact searcher: null matrix");
        }
        parts_ = partition(matrix_->count(), workers);
        workers_.reserve(workers);
        for (const auto& range : parts_) {
            workers_.push_back(std::make_unique<Worker>(range));
        }
        for (auto& w : workers_) {
            w->thread = std::jthread([worker = w.get()](std::stop_token st) { worker->run(st); });
        }
    }

    ExactSearcher(const ExactSearcher&) = delete;
    ExactSearcher&
    operator=(const ExactSearcher&) = delete;

    ~ExactSearcher() {
        for (auto& w : workers_) {
            w->thread.request_stop();
            w->cv.notify_all();
        }
        // jthread joins on destruction
    }

    std::size_t
    workers() const noexcept {
        return workers_.size();
    }
    WorkerReturn
    mode() const noexcept {
        return mode_;
    }
    const Partition&
    partition_ranges() const noexcept {
        return parts_;
    }
    const EmbeddingMatrix&
    matrix() const noexcept {
        return *matrix_;
    }

    /// Rows scored so far by each worker, for verifying chunk ownership.
    std::vector<std::uint64_t>
    rows_scanned() const {
        std::vector<std::uint64_t> out;
        for (const auto& w : workers_) {
            out.push_back(w->rows_scanned.load());
        }
        return out;
    }

    SearchResult
    search(std::span<const float> query, std::size_t topk) const {
        if (topk == 0) {
            throw InvalidArgument("search: topk must be >= 1");
        }
        if (matrix_->empty()) {
            return {{}, SearchStatus::kEmptyCorpus};
        }
        if (query.size() != matrix_->dim()) {
            throw InvalidArgument("search: query has dim " + std::to_string(query.size()) + ", index has " +
                                  std::to_string(matrix_->dim()));
        }
        auto q = std::make_shared<const std::vector<float>>(normalize_query(query));
        const std::size_t k = std::min(topk, matrix_->count());

        std::vector<std::future<std::vector<ScoredHit>>> replies;
        replies.reserve(workers_.size());
        for (const auto& w : workers_) {
            auto task = std::make_shared<std::packaged_task<std::vector<ScoredHit>()>>(
                [q, k, mode = mode_, range = w->range, worker = w.get(), m = matrix_.get()] {
                    worker->rows_scanned.fetch_add(range.size(), std::memory_order_relaxed);
                    if (mode == WorkerReturn::kAllScores) {
                        return score_chunk(*q, *m, range);
                    }
                    TopKCollector top(std::min(k, range.size()));
                    for (std::size_t r = range.begin; r < range.end; ++r) {
                        top.push({r, dot<float>(*q, m->row(r))});
                    }
                    return std::move(top).take_sorted();
                });
            replies.push_back(task->get_future());
            w->enqueue([task] { (*task)(); });
        }
        std::vector<std::vector<ScoredHit>> outputs;
        outputs.reserve(replies.size());
        for (auto& f : replies) {
            outputs.push_back(f.get());
        }
        return {merge_topk(outputs, k), SearchStatus::kOk};
    }

 private:
    struct Worker {
        explicit Worker(RowRange r) : range(r) {
        }

        void
        enqueue(std::function<void()> job) {
            {
                std::lock_guard lock(mu);
                queue.push_back(std::move(job));
            }
            cv.notify_one();
        }

        void
        run(std::stop_token st) {
            while (true) {
                std::function<void()> job;
                {
                    std::unique_lock lock(mu);
                    if (!cv.wait(lock, st, [this] { return !queue.empty(); })) {
                        return;
                    }
                    job = std::move(queue.front());
                    queue.pop_front();
                }
                job();
            }
        }

        RowRange range;
        std::mutex mu;
        std::condition_variable_any cv;
        std::deque<std::function<void()>> queue;
        std::atomic<std::uint64_t> rows_scanned{0};
        std::jthread thread;
    };

    std::shared_ptr<const EmbeddingMatrix> matrix_;
    WorkerReturn mode_;
    Partition parts_;
    std::vector<std::unique_ptr<Worker>> workers_;
};

}  // namespace qirat
