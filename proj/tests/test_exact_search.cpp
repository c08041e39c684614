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

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <thread>

#include "qirat/exact_search.hpp"
#include "qirat/kernels.hpp"
#include "test_util.hpp"

namespace {

using qirat::EmbeddingMatrix;
using qirat::ExactSearcher;
using qirat::ScoredHit;
using qirat::WorkerReturn;

TEST(Cosine, HandExamples) {
    const std::vector<float> v{0.3f, -1.2f, 2.0f};
    EXPECT_NEAR(qirat::cosine(v, v), 1.0f, 1e-6);
    EXPECT_EQ(qirat::cosine(std::vector<float>{1, 0}, std::vector<float>{0, 1}), 0.0f);
    const double want = 32.0 / (std::sqrt(14.0) * std::sqrt(77.0));
    EXPECT_NEAR(qirat::cosine(std::vector<float>{1, 2, 3}, std::vector<float>{4, 5, 6}), want, 1e-6);
    EXPECT_NEAR(want, 0.974631, 1e-6);
}

TEST(Cosine, RejectsZeroAndMismatchedVectors) {
    EXPECT_THROW((void)qirat::cosine(std::vector<float>{0, 0}, std::vector<float>{1, 0}), qirat::InvalidArgument);
    EXPECT_THROW((void)qirat::cosine(std::vector<float>{1}, std::vector<float>{1, 0}), qirat::InvalidArgument);
}

TEST(Kernels, DotMatchesDoubleAccumulationClosely) {
    for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 100u, 384u}) {
        const auto a = qirat::test::gaussian_values(n, n + 1);
        const auto b = qirat::test::gaussian_values(n, n + 2);
        double want = 0;
        double mag = 0;
        for (std::size_t i = 0; i < n; ++i) {
            want += static_cast<double>(a[i]) * b[i];
            mag += std::fabs(static_cast<double>(a[i]) * b[i]);
        }
        EXPECT_NEAR(qirat::dot<float>(a, b), want, 1e-5 * (mag + 1));
        EXPECT_NEAR(qirat::dot<double>(std::vector<double>(a.begin(), a.end()), std::vector<double>(b.begin(), b.end())),
                    want, 1e-12 * (mag + 1));
    }
}

TEST(ScoreChunk, EmptyRangeAndFullRange) {
    const auto m = qirat::test::random_unit_matrix(20, 6, 1);
    const auto nq = qirat::normalize_query(qirat::test::gaussian_values(6, 2));
    EXPECT_TRUE(qirat::score_chunk(nq, m, {5, 5}).empty());
    const auto all = qirat::score_chunk(nq, m, {0, 20});
    ASSERT_EQ(all.size(), 20u);
    for (std::size_t r = 0; r < 20; ++r) {
        EXPECT_EQ(all[r].row, r);
        EXPECT_EQ(all[r].score, qirat::dot<float>(nq, m.row(r)));
    }
    EXPECT_THROW((void)qirat::score_chunk(nq, m, {10, 21}), qirat::InvalidArgument);
}

TEST(ScoreChunk, AnySplitConcatenatesToTheSingleRange) {
    const auto m = qirat::test::random_unit_matrix(100, 8, 3);
    const auto q = qirat::test::gaussian_values(8, 4);
    const auto whole = qirat::score_chunk(q, m, {0, 100});
    qirat::SeededRng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> cuts{0, 100};
        for (int c = 0; c < 3; ++c) {
            cuts.push_back(rng.below(101));
        }
        std::sort(cuts.begin(), cuts.end());
        std::vector<ScoredHit> joined;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            const auto part = qirat::score_chunk(q, m, {cuts[i], cuts[i + 1]});
            joined.insert(joined.end(), part.begin(), part.end());
        }
        ASSERT_EQ(joined, whole);
    }
}

TEST(MergeTopk, ExamplesAndTieBreak) {
    const std::vector<std::vector<ScoredHit>> two{{{1, 0.9f}}, {{2, 0.8f}}};
    EXPECT_EQ(qirat::merge_topk(two, 2), (std::vector<ScoredHit>{{1, 0.9f}, {2, 0.8f}}));
    const std::vector<std::vector<ScoredHit>> tie{{{9, 0.5f}}, {{2, 0.5f}}};
    EXPECT_EQ(qirat::merge_topk(tie, 2), (std::vector<ScoredHit>{{2, 0.5f}, {9, 0.5f}}));
    EXPECT_EQ(qirat::merge_topk(tie, 1), (std::vector<ScoredHit>{{2, 0.5f}}));
}

TEST(MergeTopk, LocalTopkListsGiveTheGlobalTopk) {
    qirat::SeededRng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(200);
        const std::size_t k = 1 + rng.below(30);
        const std::size_t w = 1 + rng.below(8);
        std::vector<ScoredHit> all;
        for (std::size_t r = 0; r < n; ++r) {
            // coarse scores force many ties
            all.push_back({r, static_cast<float>(rng.below(20)) / 20.0f});
        }
        std::vector<std::vector<ScoredHit>> locals;
        for (const auto& range : qirat::partition(n, w)) {
            std::vector<ScoredHit> chunk(all.begin() + range.begin, all.begin() + range.end);
            std::sort(chunk.begin(), chunk.end(), qirat::ranks_before);
            chunk.resize(std::min(k, chunk.size()));
            locals.push_back(std::move(chunk));
        }
        auto oracle = all;
        std::sort(oracle.begin(), oracle.end(), [](const ScoredHit& a, const ScoredHit& b) {
            return a.score != b.score ? a.score > b.score : a.row < b.row;
        });
        oracle.resize(std::min(k, n));
        ASSERT_EQ(qirat::merge_topk(locals, k), oracle);
    }
}

TEST(TopKCollector, MatchesSortAndTruncate) {
    qirat::SeededRng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = rng.below(100);
        const std::size_t k = rng.below(20);
        std::vector<ScoredHit> all;
        qirat::TopKCollector top(k);
        for (std::size_t r = 0; r < n; ++r) {
            all.push_back({r, static_cast<float>(rng.below(10))});
            top.push(all.back());
        }
        std::sort(all.begin(), all.end(), qirat::ranks_before);
        all.resize(std::min(k, n));
        ASSERT_EQ(std::move(top).take_sorted(), all);
    }
}

TEST(ExactSearch, SelfMatchAndClamping) {
    auto m = std::make_shared<const EmbeddingMatrix>(qirat::test::random_unit_matrix(50, 16, 12));
    const ExactSearcher s(m, 3);
    const std::vector<float> q(m->row(7).begin(), m->row(7).end());
    const auto res = s.search(q, 5);
    ASSERT_EQ(res.hits.size(), 5u);
    EXPECT_EQ(res.hits[0].row, 7u);
    EXPECT_NEAR(res.hits[0].score, 1.0f, 1e-6);

    auto two = std::make_shared<const EmbeddingMatrix>(qirat::test::random_unit_matrix(2, 4, 1));
    EXPECT_EQ(ExactSearcher(two, 4).search(qirat::test::gaussian_values(4, 3), 3).hits.size(), 2u);
}

TEST(ExactSearch, EmptyCorpusAndBadQueries) {
    auto empty = std::make_shared<const EmbeddingMatrix>(EmbeddingMatrix(0, 4));
    const ExactSearcher s(empty, 2);
    const auto res = s.search(std::vector<float>{1, 0, 0, 0}, 3);
    EXPECT_EQ(res.status, qirat::SearchStatus::kEmptyCorpus);
    EXPECT_TRUE(res.hits.empty());

    auto m = std::make_shared<const EmbeddingMatrix>(qirat::test::random_unit_matrix(5, 4, 1));
    const ExactSearcher t(m, 2);
    EXPECT_THROW((void)t.search(std::vector<float>{1, 0, 0}, 3), qirat::InvalidArgument);
    EXPECT_THROW((void)t.search(std::vector<float>{0, 0, 0, 0}, 3), qirat::InvalidArgument);
    EXPECT_THROW((void)t.search(std::vector<float>{1, 0, 0, 0}, 0), qirat::InvalidArgument);
    EXPECT_THROW(ExactSearcher(m, 0), qirat::InvalidArgument);
}

TEST(ExactSearch, WorkerCountsAndModesMatchTheOracle) {
    auto m = std::make_shared<const EmbeddingMatrix>(qirat::test::random_unit_matrix(1000, 32, 77));
    std::vector<std::unique_ptr<ExactSearcher>> searchers;
    for (std::size_t w : {1u, 2u, 4u, 6u}) {
        for (auto mode : {WorkerReturn::kLocalTopk, WorkerReturn::kAllScores}) {
            searchers.push_back(std::make_unique<ExactSearcher>(m, w, mode));
        }
    }
    for (std::uint64_t qs = 0; qs < 20; ++qs) {
        const auto q = qirat::test::gaussian_values(32, 1000 + qs);
        const auto oracle = qirat::test::brute_force_topk(*m, q, 25);
        for (const auto& s : searchers) {
            ASSERT_EQ(s->search(q, 25).hits, oracle) << s->workers() << " workers";
        }
    }
}

TEST(ExactSearch, RandomCorporaAllWorkerCounts) {
    qirat::SeededRng rng(31);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t n = 1 + rng.below(trial < 10 ? 2000 : 10'000);
        const std::size_t d = 1 + rng.below(64);
        const std::size_t k = 1 + rng.below(50);
        auto m = std::make_shared<const EmbeddingMatrix>(qirat::test::random_unit_matrix(n, d, 500 + trial));
        const auto q = qirat::test::gaussian_values(d, 900 + trial);
        const auto oracle = qirat::test::brute_force_topk(*m, q, k);
        EXPECT_EQ(qirat::full_scan_search(*m, q, k).hits, oracle);
        for (std::size_t w = 1; w <= 8; ++w) {
            ASSERT_EQ(ExactSearcher(m, w).search(q, k).hits, oracle) << "n=" << n << " w=" << w;
        }
    }
}

TEST(ExactSearch, TruncationIsAPrefixAndScoresAreBounded) {
    auto m = std::make_shared<const EmbeddingMatrix>(qirat::test::random_unit_matrix(300, 12, 40));
    const ExactSearcher s(m, 4);
    const auto q = qirat::test::gaussian_values(12, 41);
    auto prev = s.search(q, 1).hits;
    for (std::size_t k = 2; k <= 40; ++k) {
        const auto cur = s.search(q, k).hits;
        ASSERT_TRUE(std::equal(prev.begin(), prev.end(), cur.begin()));
        prev = cur;
    }
    for (const auto& h : s.search(q, 300).hits) {
        EXPECT_GE(h.score, -1.0f - 1e-6f);
        EXPECT_LE(h.score, 1.0f + 1e-6f);
    }
}

TEST(ExactSearch, EachWorkerScansOnlyItsChunk) {
    auto m = std::make_shared<const EmbeddingMatrix>(qirat::test::random_unit_matrix(103, 8, 2));
    const ExactSearcher s(m, 4);
    for (int i = 0; i < 3; ++i) {
        (void)s.search(qirat::test::gaussian_values(8, i), 5);
    }
    const auto scanned = s.rows_scanned();
    const auto& parts = s.partition_ranges();
    ASSERT_EQ(scanned.size(), 4u);
    for (std::size_t w = 0; w < 4; ++w) {
        EXPECT_EQ(scanned[w], 3 * parts[w].size());
    }
}

TEST(ExactSearch, ConcurrentCallersGetDeterministicResults) {
    auto m = std::make_shared<const EmbeddingMatrix>(qirat::test::random_unit_matrix(2000, 16, 3));
    const ExactSearcher s(m, 3);
    std::vector<std::vector<float>> queries;
    std::vector<std::vector<ScoredHit>> want;
    for (int i = 0; i < 16; ++i) {
        queries.push_back(qirat::test::gaussian_values(16, 70 + i));
        want.push_back(qirat::test::brute_force_topk(*m, queries.back(), 10));
    }
    std::atomic<int> mismatches{0};
    std::vector<std::jthread> callers;
    for (int t = 0; t < 6; ++t) {
        callers.emplace_back([&, t] {
            for (int rep = 0; rep < 20; ++rep) {
                const std::size_t i = (t * 5 + rep) % queries.size();
                if (s.search(queries[i], 10).hits != want[i]) {
                    ++mismatches;
                }
            }
        });
    }
    callers.clear();
    EXPECT_EQ(mismatches.load(), 0);
}

TEST(ExactSearch, MoreWorkersThanRows) {
    auto m = std::make_shared<const EmbeddingMatrix>(qirat::test::random_unit_matrix(3, 4, 9));
    const auto q = qirat::test::gaussian_values(4, 1);
    EXPECT_EQ(ExactSearcher(m, 8).search(q, 10).hits, qirat::test::brute_force_topk(*m, q, 10));
}

}  // namespace
