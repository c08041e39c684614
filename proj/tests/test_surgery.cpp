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

#include <bit>
#include <cmath>
#include <set>

#include "qirat/surgery/bpe.hpp"
#include "qirat/surgery/param_count.hpp"
#include "qirat/surgery/vocab_surgery.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace {

using qirat::EmbeddingMatrix;
using qirat::surgery::EmbeddingTable;
using qirat::surgery::ModelShape;
using qirat::surgery::TokenizerModel;
using qirat::test::bit_equal;
using qirat::test::flat_tokenizer;
using qirat::test::letters;
using qirat::test::random_table;
using qirat::test::ulp_distance;

const std::vector<std::string> kSpecials = qirat::surgery::default_special_tokens();

TEST(IntersectVocab, Examples) {
    const auto a = flat_tokenizer({"a", "b", "c", "d"});
    const auto b = flat_tokenizer({"b", "c", "e"});
    auto kept = qirat::surgery::intersect_vocab(a, b);
    const std::vector<std::string> want{"<unk>", "<pad>", "<s>", "</s>", "b", "c"};
    EXPECT_EQ(kept, want);
    EXPECT_EQ(qirat::surgery::intersect_vocab(a, a), a.tokens());
}

TEST(IntersectVocab, BoundedByTheSmallerVocabulary) {
    qirat::SeededRng rng(1);
    const auto pool = letters(60);
    for (int t = 0; t < 50; ++t) {
        std::vector<std::string> x;
        std::vector<std::string> y;
        for (const auto& s : pool) {
            if (rng.below(2) != 0) {
                x.push_back(s);
            }
            if (rng.below(3) != 0) {
                y.push_back(s);
            }
        }
        const auto kept = qirat::surgery::intersect_vocab(flat_tokenizer(x), flat_tokenizer(y));
        EXPECT_LE(kept.size(), std::min(x.size(), y.size()) + kSpecials.size());
        for (const auto& k : kept) {
            EXPECT_TRUE(std::find(kSpecials.begin(), kSpecials.end(), k) != kSpecials.end() ||
                        (std::find(x.begin(), x.end(), k) != x.end() && std::find(y.begin(), y.end(), k) != y.end()));
        }
    }
}

TEST(ReduceEmbeddings, FullVocabularyIsIdentity) {
    const auto table = random_table({"a", "b", "c", "d"}, 6, 2);
    const std::vector<std::string> all{"a", "b", "c", "d"};
    const auto red = qirat::surgery::reduce_embeddings(table, all);
    EXPECT_EQ(red.table.tokens(), table.tokens());
    EXPECT_EQ(red.table.matrix(), table.matrix());
    EXPECT_EQ(red.report.dropped, 0u);
}

TEST(ReduceEmbeddings, SelectsRowsOfKeptTokens) {
    const auto table = random_table({"a", "b", "c", "d"}, 5, 3);
    const std::vector<std::string> kept{"c", "b"};
    const auto red = qirat::surgery::reduce_embeddings(table, kept);
    ASSERT_EQ(red.table.vocab_size(), 2u);
    EXPECT_EQ(red.table.tokens(), (std::vector<std::string>{"b", "c"}));
    EXPECT_TRUE(bit_equal(red.table.lookup("b"), table.lookup("b")));
    EXPECT_TRUE(bit_equal(red.table.lookup("c"), table.lookup("c")));
    EXPECT_EQ(red.remap[0], std::nullopt);
    EXPECT_EQ(red.remap[1], 0u);
    EXPECT_EQ(red.remap[2], 1u);
    const std::vector<std::string> bad{"zz"};
    EXPECT_THROW((void)qirat::surgery::reduce_embeddings(table, bad), qirat::InvalidArgument);
}

TEST(ReduceEmbeddings, ThreeHundredOfAThousand) {
    auto tokens = letters(1000);
    const auto table = random_table(tokens, 16, 4);
    qirat::SeededRng rng(5);
    std::vector<std::string> shuffled = tokens;
    for (std::size_t i = shuffled.size() - 1; i > 0; --i) {
        std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
    }
    shuffled.resize(300);
    const auto red = qirat::surgery::reduce_embeddings(table, shuffled);
    EXPECT_EQ(red.report.kept, 300u);
    EXPECT_EQ(red.report.dropped, 700u);
    EXPECT_EQ(red.report.old_params, 1000u * 16u);
    EXPECT_EQ(red.report.new_params, 300u * 16u);
    for (const auto& t : shuffled) {
        ASSERT_TRUE(bit_equal(red.table.lookup(t), table.lookup(t)));
    }
}

TEST(ExtendVocab, TwoTermAndOneTermMeans) {
    const auto tok = flat_tokenizer({"x", "y"});
    EmbeddingTable table({"<unk>", "<pad>", "<s>", "</s>", "x", "y"},
                         EmbeddingMatrix(2, {0, 0, 0, 0, 0, 0, 0, 0, 0.1f, 3.0f, 0.7f, -1.0f}));
    const std::vector<std::string> added{"xy", "x</w>"};
    // "xy" -> [x, y]; "x</w>" -> [x</w>] which is unknown -> rejected
    EXPECT_THROW((void)qirat::surgery::extend_vocab(table, tok, added), qirat::InvalidArgument);
    const std::vector<std::string> ok{"xy", "yy", "y"};
    const auto ext = qirat::surgery::extend_vocab(table, tok, ok);
    ASSERT_EQ(ext.table.vocab_size(), 8u);
    const auto xy = ext.table.lookup("xy");
    EXPECT_EQ(xy[0], static_cast<float>((static_cast<double>(0.1f) + static_cast<double>(0.7f)) / 2));
    EXPECT_EQ(xy[1], 1.0f);
    EXPECT_TRUE(bit_equal(ext.table.lookup("yy"), table.lookup("y")));
    EXPECT_EQ(ext.report.added, 2u);
    ASSERT_EQ(ext.report.notes.size(), 1u);  // "y" already present
    for (std::size_t r = 0; r < table.vocab_size(); ++r) {
        EXPECT_TRUE(bit_equal(ext.table.matrix().row(r), table.matrix().row(r)));
    }
}

TEST(ExtendVocab, UndecomposableTokensCanBeSkipped) {
    const auto tok = flat_tokenizer({"x", "y"});
    const auto table = random_table(tok.tokens(), 3, 4);
    const std::vector<std::string> added{"qq", "xy"};
    EXPECT_THROW((void)qirat::surgery::extend_vocab(table, tok, added), qirat::InvalidArgument);
    const auto ext = qirat::surgery::extend_vocab(table, tok, added, qirat::surgery::UnknownSubtokens::kSkip);
    EXPECT_EQ(ext.report.added, 1u);
    EXPECT_EQ(ext.table.tokens().back(), "xy");
    ASSERT_EQ(ext.report.notes.size(), 1u);
    EXPECT_NE(ext.report.notes[0].find("qq"), std::string::npos);
}

TEST(ExtendVocab, MeansAreWithinOneUlpOnRandomCases) {
    qirat::SeededRng rng(6);
    for (int t = 0; t < 100; ++t) {
        const auto alpha = letters(10 + rng.below(20), rng.below(50));
        const auto base = flat_tokenizer(alpha);
        const auto table = random_table(base.tokens(), 1 + rng.below(24), 100 + t);
        std::vector<std::string> added;
        std::set<std::string> seen(alpha.begin(), alpha.end());
        for (int i = 0; i < 20; ++i) {
            std::string s;
            const std::size_t len = 2 + rng.below(5);
            for (std::size_t c = 0; c < len; ++c) {
                s += alpha[rng.below(alpha.size())];
            }
            if (seen.insert(s).second) {
                added.push_back(s);
            }
        }
        const auto ext = qirat::surgery::extend_vocab(table, base, added);
        for (const auto& s : added) {
            const auto parts = qirat::surgery::split_code_points(s);
            const auto row = ext.table.lookup(s);
            for (std::size_t j = 0; j < table.dim(); ++j) {
                double sum = 0;
                for (const auto& p : parts) {
                    sum += table.lookup(p)[j];
                }
                ASSERT_LE(ulp_distance(row[j], static_cast<float>(sum / static_cast<double>(parts.size()))), 1);
            }
        }
    }
}

TEST(Surgery, ReduceThenExtendKeepsOriginalRows) {
    // 60-token original, fresh vocabulary shares 30; 9 domain tokens are added: 34 + 9 = 43 rows
    const auto orig_syms = letters(60);
    const auto orig = flat_tokenizer(orig_syms);
    const auto table = random_table(orig.tokens(), 8, 7);
    std::vector<std::string> fresh_syms(orig_syms.begin(), orig_syms.begin() + 30);
    const auto extra = letters(10, 500);
    fresh_syms.insert(fresh_syms.end(), extra.begin(), extra.end());
    const auto fresh = flat_tokenizer(fresh_syms);

    const auto kept = qirat::surgery::intersect_vocab(orig, fresh);
    ASSERT_EQ(kept.size(), 34u);
    const auto red = qirat::surgery::reduce_embeddings(table, kept);
    const auto reduced_tok = qirat::surgery::reduce_tokenizer(orig, kept);
    EXPECT_EQ(red.table.vocab_size(), 34u);
    EXPECT_EQ(reduced_tok.tokens(), red.table.tokens());

    std::vector<std::string> domain;
    for (int i = 0; i < 9; ++i) {
        domain.push_back(orig_syms[i] + orig_syms[i + 1] + orig_syms[i + 2]);
    }
    const auto ext = qirat::surgery::extend_vocab(red.table, reduced_tok, domain);
    EXPECT_EQ(ext.table.vocab_size(), 43u);
    EXPECT_EQ(ext.report.added, 9u);
    EXPECT_EQ(ext.report.old_vocab, 34u);
    EXPECT_EQ(ext.report.new_vocab, 43u);
    for (const auto& t : kept) {
        ASSERT_TRUE(bit_equal(ext.table.lookup(t), table.lookup(t)));
    }
    const auto ext_tok = qirat::surgery::extend_tokenizer(reduced_tok, reduced_tok, domain);
    EXPECT_EQ(ext_tok.vocab_size(), 43u);
}

TEST(Surgery, RandomReduceExtendCases) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto c = qirat::test::random_surgery_case(seed);
        ASSERT_TRUE(c.kept_rows_identical) << seed;
        ASSERT_LE(c.max_ulp, 1) << seed;
    }
}

TEST(Surgery, TrainedTokenizersEndToEnd) {
    const std::vector<std::string> general{"the cat sat on the mat", "the dog ate the bone", "a cat and a dog"};
    const std::vector<std::string> domain{"the hadith of the sunnah", "hadith hadith sunnah narrated", "the cat"};
    const auto orig = qirat::surgery::train_bpe(general, 40);
    const auto fresh = qirat::surgery::train_bpe(domain, 40);
    const auto table = random_table(orig.tokens(), 12, 8);
    const auto kept = qirat::surgery::intersect_vocab(orig, fresh);
    const auto red = qirat::surgery::reduce_embeddings(table, kept);
    const auto rtok = qirat::surgery::reduce_tokenizer(orig, kept);
    for (const auto& t : kept) {
        ASSERT_TRUE(bit_equal(red.table.lookup(t), table.lookup(t)));
    }
    const auto missing = qirat::surgery::tokens_missing_from(rtok, fresh);
    std::vector<std::string> addable;
    for (const auto& t : missing) {
        bool known = false;
        for (auto id : rtok.encode_token(t)) {
            known = known || id != rtok.unk_id();
        }
        if (known) {
            addable.push_back(t);
        }
    }
    ASSERT_FALSE(addable.empty());
    const auto ext = qirat::surgery::extend_vocab(red.table, rtok, addable);
    const auto etok = qirat::surgery::extend_tokenizer(rtok, fresh, addable);
    EXPECT_EQ(etok.tokens(), ext.table.tokens());
    for (const auto& t : kept) {
        ASSERT_TRUE(bit_equal(ext.table.lookup(t), table.lookup(t)));
    }
}

TEST(EmbeddingTable, SaveLoad) {
    qirat::test::TempDir dir;
    const auto table = random_table(letters(20), 4, 9);
    table.save(dir.file("t.emb"));
    const auto back = EmbeddingTable::load(dir.file("t.emb"));
    EXPECT_EQ(back.tokens(), table.tokens());
    EXPECT_EQ(back.matrix(), table.matrix());
    EXPECT_THROW(EmbeddingTable({"a", "a"}, EmbeddingMatrix(1, {1, 2})), qirat::InvalidArgument);
    EXPECT_THROW(EmbeddingTable({"a"}, EmbeddingMatrix(1, {1, 2})), qirat::InvalidArgument);
}

TEST(ParamCount, MatchesTheIndependentExpansion) {
    qirat::SeededRng rng(10);
    for (int t = 0; t < 100; ++t) {
        const ModelShape s{1 + rng.below(300'000), 1 + rng.below(2048), 1 + rng.below(48), 1 + rng.below(8192),
                           1 + rng.below(4096), 1 + rng.below(4)};
        const auto c = qirat::surgery::count_params(s);
        const auto o = qirat::test::param_oracle(static_cast<double>(s.vocab_size), static_cast<double>(s.hidden),
                              static_cast<double>(s.layers), static_cast<double>(s.ffn),
                              static_cast<double>(s.max_positions), static_cast<double>(s.type_vocab));
        ASSERT_EQ(static_cast<double>(c.vocab_embedding), o.em);
        ASSERT_EQ(static_cast<double>(c.encoder), o.encoder);
        ASSERT_EQ(static_cast<double>(c.total), o.total);
        ASSERT_EQ(c.total, c.embedding + c.encoder);
        ASSERT_EQ(c.encoder, c.per_layer * s.layers);
    }
}

TEST(ParamCount, PublishedModelSizes) {
    struct Row {
        ModelShape shape;
        double em_m;
        double total_m;
    };
    const std::vector<Row> rows{{{250'002, 768, 12, 3072, 514, 1}, 192, 278},
                                {{119'547, 768, 12, 3072, 512, 2}, 92, 178},
                                {{43'000, 768, 12, 3072, 514, 1}, 33, 119}};
    std::set<std::uint64_t> encoders;
    for (const auto& r : rows) {
        const auto c = qirat::surgery::count_params(r.shape);
        EXPECT_NEAR(static_cast<double>(c.vocab_embedding) / 1e6, r.em_m, 0.01 * r.em_m);
        EXPECT_NEAR(static_cast<double>(c.total) / 1e6, r.total_m, 0.02 * r.total_m);
        encoders.insert(c.encoder);
    }
    EXPECT_EQ(encoders.size(), 1u);
    EXPECT_EQ(*encoders.begin(), 85'054'464u);
    EXPECT_THROW((void)qirat::surgery::count_params({0, 768, 12, 3072, 514, 1}), qirat::InvalidArgument);
}

}  // namespace
