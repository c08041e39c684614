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

// Trains two tokenizers, keeps the embedding rows of shared tokens and
// appends rows for domain tokens initialized from their subtoken means.

#include <iostream>
#include <string>
#include <vector>

#include "qirat/random.hpp"
#include "qirat/surgery/bpe.hpp"
#include "qirat/surgery/param_count.hpp"
#include "qirat/surgery/vocab_surgery.hpp"

int
main() {
    namespace s = qirat::surgery;
    const std::vector<std::string> general{"the cat sat on the mat", "a dog and a cat", "the market opens at nine"};
    const std::vector<std::string> domain{"the prayer at dawn", "the prayer of the traveller", "fasting and prayer"};
    const auto orig = s::train_bpe(general, 60);
    const auto fresh = s::train_bpe(domain, 60);

    qirat::SeededRng rng(1);
    std::vector<float> values(orig.vocab_size() * 16);
    for (auto& v : values) {
        v = static_cast<float>(rng.normal());
    }
    const s::EmbeddingTable table(orig.tokens(), qirat::EmbeddingMatrix(16, std::move(values)));

    const auto kept = s::intersect_vocab(orig, fresh);
    const auto reduced = s::reduce_embeddings(table, kept);
    const auto reduced_tok = s::reduce_tokenizer(orig, kept);
    std::cout << "reduce: " << reduced.report.to_json().dump() << '\n';

    const auto added = s::tokens_missing_from(reduced_tok, fresh);
    const auto extended = s::extend_vocab(reduced.table, reduced_tok, added, s::UnknownSubtokens::kSkip);
    std::cout << "extend: " << extended.report.to_json().dump() << '\n';

    const auto full = s::count_params({250'002, 768, 12, 3072, 514, 1});
    const auto small = s::count_params({43'000, 768, 12, 3072, 514, 1});
    std::cout << "250k-token encoder: " << full.total << " parameters, 43k-token: " << small.total << '\n';
}
