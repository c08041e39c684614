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
#include <filesystem>
#include <fstream>

#include "qirat/embed_store.hpp"
#include "qirat/embedder.hpp"
#include "test_util.hpp"

namespace {

using qirat::EmbeddingMatrix;
using qirat::RowRange;

double
norm(std::span<const float> v) {
    double s = 0;
    for (float x : v) {
        s += static_cast<double>(x) * x;
    }
    return std::sqrt(s);
}

TEST(Partition, Examples) {
    EXPECT_EQ(qirat::partition(10, 3), (qirat::Partition{{0, 4}, {4, 7}, {7, 10}}));
    EXPECT_EQ(qirat::partition(6, 1), (qirat::Partition{{0, 6}}));
    const auto p = qirat::partition(7, 7);
    ASSERT_EQ(p.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(p[i], (RowRange{i, i + 1}));
    }
    EXPECT_THROW((void)qirat::partition(5, 0), qirat::InvalidArgument);
}

TEST(Partition, CoversEveryRowOnceWithBalancedSizes) {
    for (std::size_t count = 0; count <= 60; ++count) {
        for (std::size_t workers = 1; workers <= 12; ++workers) {
            const auto p = qirat::partition(count, workers);
            ASSERT_EQ(p.size(), workers);
            std::size_t next = 0;
            std::size_t lo = count;
            std::size_t hi = 0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                ASSERT_EQ(p[i].begin, next);
                next = p[i].end;
                lo = std::min(lo, p[i].size());
                hi = std::max(hi, p[i].size());
                if (i > 0) {
                    ASSERT_LE(p[i].size(), p[i - 1].size());
                }
            }
            ASSERT_EQ(next, count);
            ASSERT_LE(hi - lo, 1u);
        }
    }
}

TEST(NormalizeRows, ThreeFourFive) {
    const auto m = qirat::normalize_rows(EmbeddingMatrix(2, {3.0f, 4.0f}));
    EXPECT_FLOAT_EQ(m.row(0)[0], 0.6f);
    EXPECT_FLOAT_EQ(m.row(0)[1], 0.8f);
    EXPECT_TRUE(m.normalized());
}

TEST(NormalizeRows, UnitRowUnchanged) {
    const auto m = qirat::normalize_rows(EmbeddingMatrix(3, {0.0f, 1.0f, 0.0f, 0.6f, 0.0f, 0.8f}));
    EXPECT_NEAR(m.row(0)[1], 1.0f, 1e-7);
    EXPECT_NEAR(m.row(1)[0], 0.6f, 1e-7);
    EXPECT_NEAR(m.row(1)[2], 0.8f, 1e-7);
}

TEST(NormalizeRows, RandomRowsAreUnitAndIdempotent) {
    const EmbeddingMatrix raw(16, qirat::test::gaussian_values(100 * 16, 21));
    const auto once = qirat::normalize_rows(raw);
    const auto twice = qirat::normalize_rows(once);
    for (std::size_t r = 0; r < once.count(); ++r) {
        EXPECT_NEAR(norm(once.row(r)), 1.0, 1e-6);
        for (std::size_t j = 0; j < 16; ++j) {
            EXPECT_NEAR(twice.row(r)[j], once.row(r)[j], 1e-7);
        }
    }
}

TEST(NormalizeRows, ZeroRowNamesTheRow) {
    try {
        (void)qirat::normalize_rows(EmbeddingMatrix(2, {1.0f, 0.0f, 0.0f, 0.0f}));
        FAIL();
    } catch (const qirat::InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
    }
}

TEST(EmbeddingMatrix, RejectsBadShapesAndValues) {
    EXPECT_THROW(EmbeddingMatrix(0, std::vector<float>{}), qirat::InvalidArgument);
    EXPECT_THROW(EmbeddingMatrix(3, std::vector<float>{1, 2}), qirat::InvalidArgument);
    EXPECT_THROW(EmbeddingMatrix(1, std::vector<float>{NAN}), qirat::InvalidArgument);
    EXPECT_THROW(EmbeddingMatrix(2, std::vector<float>{1, 1}, qirat::DType::kFloat32, true), qirat::InvalidArgument);
    EmbeddingMatrix big(1, std::vector<float>{70000.0f});
    EXPECT_THROW(big.round_to_half(), qirat::InvalidArgument);
}

TEST(EmbeddingMatrix, MutationClearsNormalizedFlag) {
    auto m = qirat::test::random_unit_matrix(2, 3, 1);
    EXPECT_TRUE(m.normalized());
    m.mutable_row(0)[0] = 5.0f;
    EXPECT_FALSE(m.normalized());
}

TEST(IdMap, RejectsEmptyDuplicateAndNewlineIds) {
    EXPECT_THROW(qirat::IdMap({"a", ""}), qirat::InvalidArgument);
    EXPECT_THROW(qirat::IdMap({"a", "a"}), qirat::InvalidArgument);
    EXPECT_THROW(qirat::IdMap({"a\nb"}), qirat::InvalidArgument);
    EXPECT_EQ(qirat::IdMap({"x", "y"}).at(1), "y");
}

TEST(StubEmbedder, DeterministicUnitNormAndSeeded) {
    const qirat::StubEmbedder a(8, 1);
    const qirat::StubEmbedder b(8, 1);
    const qirat::StubEmbedder c(8, 2);
    const auto va = a.embed("the quick brown fox");
    EXPECT_EQ(va, b.embed("the quick brown fox"));
    EXPECT_NE(va, c.embed("the quick brown fox"));
    EXPECT_EQ(va, a.embed("The  QUICK brown\tfox"));
    EXPECT_NEAR(norm(va), 1.0, 1e-6);
    EXPECT_EQ(va.size(), 8u);
    EXPECT_THROW((void)a.embed("   "), qirat::InvalidArgument);
}

TEST(VectorFileEmbedder, LooksUpTextAndRejectsUnknown) {
    qirat::test::TempDir dir;
    {
        std::ofstream out(dir.file("v.jsonl"));
        out << R"({"text": "hello", "vector": [1, 0, 0]})" << '\n' << R"({"text": "bye", "vector": [0, 2, 0]})" << '\n';
    }
    const qirat::VectorFileEmbedder e(dir.file("v.jsonl"));
    EXPECT_EQ(e.dim(), 3u);
    EXPECT_EQ(e.embed("bye"), (std::vector<float>{0, 2, 0}));
    EXPECT_THROW((void)e.embed("other"), qirat::InvalidArgument);
}

TEST(ProcessEmbedder, ReadsVectorFromCommandOutput) {
    const qirat::ProcessEmbedder e("echo '[0.5, 0.25, 1]'", 3);
    EXPECT_EQ(e.embed("anything"), (std::vector<float>{0.5f, 0.25f, 1.0f}));
    const qirat::ProcessEmbedder wrong("echo '[1, 2]'", 3);
    EXPECT_THROW((void)wrong.embed("x"), std::exception);
    const qirat::ProcessEmbedder failing("false", 3);
    EXPECT_THROW((void)failing.embed("x"), std::exception);
}

std::vector<qirat::PassageRecord>
three_passages() {
    return {{"a", "first passage about cats", "en"},
            {"b", "second passage about dogs", std::nullopt},
            {"c", "третий отрывок", "ru"}};
}

TEST(Ingest, ThreePassagesUnitRows) {
    qirat::test::TempDir dir;
    const qirat::StubEmbedder emb(8);
    const auto passages = three_passages();
    const auto stored = qirat::ingest_corpus(passages, emb, dir.file("c.emb"));
    EXPECT_EQ(stored.matrix.count(), 3u);
    EXPECT_EQ(stored.matrix.dim(), 8u);
    EXPECT_EQ(stored.ids.size(), 3u);
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_NEAR(norm(stored.matrix.row(r)), 1.0, 1e-6);
    }
}

TEST(Ingest, LoadReproducesValuesAndIds) {
    qirat::test::TempDir dir;
    const qirat::StubEmbedder emb(16);
    const auto passages = three_passages();
    for (auto dtype : {qirat::DType::kFloat32, qirat::DType::kFloat16}) {
        const auto stored = qirat::ingest_corpus(passages, emb, dir.file("c.emb"), dtype);
        const auto loaded = qirat::load_index(dir.file("c.emb"));
        EXPECT_EQ(loaded.matrix, stored.matrix);
        EXPECT_EQ(loaded.ids, stored.ids);
        EXPECT_EQ(loaded.ids.ids(), (std::vector<std::string>{"a", "b", "c"}));
        const auto back = qirat::read_passages(qirat::passages_path(dir.file("c.emb")));
        ASSERT_EQ(back.size(), 3u);
        EXPECT_EQ(back[2].text, "третий отрывок");
        EXPECT_EQ(back[2].lang, "ru");
        EXPECT_FALSE(back[1].lang.has_value());
    }
}

TEST(Ingest, RandomMatricesRoundTrip) {
    qirat::test::TempDir dir;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto m = qirat::test::random_unit_matrix(seed * 7, 4 + seed, seed);
        const qirat::IdMap ids(qirat::test::numbered_ids(m.count()));
        qirat::write_embeddings(dir.file("r.emb"), m);
        qirat::write_id_map(qirat::ids_path(dir.file("r.emb")), ids);
        const auto back = qirat::load_index(dir.file("r.emb"));
        EXPECT_EQ(back.matrix, m);
        EXPECT_EQ(back.ids, ids);
    }
}

TEST(Ingest, FileSizeFollowsTheLayout) {
    qirat::test::TempDir dir;
    const auto m = qirat::test::random_unit_matrix(50'000, 384, 8);
    qirat::write_embeddings(dir.file("big.emb"), m);
    EXPECT_EQ(std::filesystem::file_size(dir.file("big.emb")), 64u + 50'000u * 384u * 4u);
}

TEST(Ingest, RejectsBadInput) {
    qirat::test::TempDir dir;
    const qirat::StubEmbedder emb(4);
    const std::vector<qirat::PassageRecord> none;
    EXPECT_THROW(qirat::ingest_corpus(none, emb, dir.file("x.emb")), qirat::InvalidArgument);
    const std::vector<qirat::PassageRecord> dup{{"a", "x", {}}, {"a", "y", {}}};
    EXPECT_THROW(qirat::ingest_corpus(dup, emb, dir.file("x.emb")), qirat::InvalidArgument);
    const std::vector<qirat::PassageRecord> empty_text{{"a", "", {}}};
    EXPECT_THROW(qirat::ingest_corpus(empty_text, emb, dir.file("x.emb")), qirat::InvalidArgument);
}

TEST(Ingest, IdCountMismatchIsCorrupt) {
    qirat::test::TempDir dir;
    qirat::write_embeddings(dir.file("m.emb"), qirat::test::random_unit_matrix(3, 4, 1));
    qirat::write_id_map(qirat::ids_path(dir.file("m.emb")), qirat::IdMap({"a", "b"}));
    try {
        (void)qirat::load_index(dir.file("m.emb"));
        FAIL();
    } catch (const qirat::FormatError& e) {
        EXPECT_EQ(e.kind(), qirat::FormatErrorKind::kCorrupt);
    }
}

}  // namespace
