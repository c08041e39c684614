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

// Builds a clustered corpus, searches it with four workers and checks the
// answer against a single-threaded scan.

#include <iostream>
#include <memory>

#include "qirat/exact_search.hpp"
#include "qirat/synthetic.hpp"

int
main() {
    qirat::SyntheticCorpusParams params;
    params.count = 20'000;
    params.dim = 128;
    qirat::SyntheticCorpus gen(params);
    auto corpus = std::make_shared<const qirat::EmbeddingMatrix>(gen.corpus());
    const auto query = gen.queries(1).front();

    qirat::ExactSearcher searcher(corpus, 4);
    const auto hits = searcher.search(query, 5).hits;
    const auto oracle = qirat::full_scan_search(*corpus, query, 5).hits;

    for (const auto& h : hits) {
        std::cout << "row " << h.row << "  score " << h.score << '\n';
    }
    std::cout << (hits == oracle ? "matches the full scan\n" : "MISMATCH\n");
    return hits == oracle ? 0 : 1;
}
