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
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "qirat/common.hpp"
#include "qirat/embed_store.hpp"
#include "qirat/surgery/bpe.hpp"

namespace qirat::surgery {

/// Token embedding matrix with its vocabulary: row i is the vector of tokens[i].
class EmbeddingTable {
 public:
    EmbeddingTable() = default;

    EmbeddingTable(std::vector<std::string> tokens, EmbeddingMatrix matrix)
        : tokens_(std::move(tokens)), matrix_(std::move(matrix)) {
        if (tokens_.size() != matrix_.count()) {
            throw InvalidArgument("embedding table: " + std::to_string(tokens_.size()) + " tokens for " +
                                  std::to_string(matrix_.count()) + " rows");
        }
        index_.reserve(tokens_.size());
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            if (!index_.emplace(tokens_[i], i).second) {
                throw InvalidArgument("embedding table: duplicate token \"" + tokens_[i] + "\"");
            }
        }
    }

    std::size_t
    vocab_size() const noexcept {
        return tokens_.size();
    }
    std::size_t
    dim() const noexcept {
        return matrix_.dim();
    }
    const std::vector<std::string>&
    tokens() const noexcept {
        return tokens_;
    }
    const EmbeddingMatrix&
    matrix() const noexcept {
        return matrix_;
    }
    std::optional<std::size_t>
    row_of(std::string_view token) const {
        auto it = index_.find(std::string(token));
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }
    std::span<const float>
    lookup(std::string_view token) const {
        auto r = row_of(token);
        if (!r) {
            throw InvalidArgument("embedding table: unknown token \"" + std::string(token) + "\"");
        }
        return matrix_.row(*r);
    }

    /// EMBS matrix at `path`, tokens one per line at `path`.vocab.
    void
    save(const std::string& path) const {
        write_embeddings(path, matrix_);
        auto out = format::open_output(path + ".vocab");
        for (const auto& t : tokens_) {
            out << t << '\n';
        }
        format::finish_output(out, path + ".vocab");
    }

    static EmbeddingTable
    load(const std::string& path) {
        auto matrix = read_embeddings(path);
        auto in = format::open_input(path + ".vocab");
        std::vector<std::string> tokens;
        std::string line;
        while (std::getline(in, line)) {
            tokens.push_back(line);
        }
        try {
            return EmbeddingTable(std::move(tokens), std::move(matrix));
        } catch (const InvalidArgument& e) {
            throw FormatError(FormatErrorKind::kCorrupt, path + ": " + e.what());
        }
    }

 private:
    std::vector<std::string> tokens_;
    EmbeddingMatrix matrix_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct SurgeryReport {
    std::size_t kept = 0;
    std::size_t dropped = 0;
    std::size_t added = 0;
    std::size_t old_vocab = 0;
    std::size_t new_vocab = 0;
    /// Embedding-matrix parameters (vocab x dim) before and after.
    std::size_t old_params = 0;
    std::size_t new_params = 0;
    std::vector<std::string> notes;

    nlohmann::json
    to_json() const {
        return {{"kept", kept},         {"dropped", dropped},       {"added", added},
                {"old_vocab", old_vocab}, {"new_vocab", new_vocab}, {"old_params", old_params},
                {"new_params", new_params}, {"notes", notes}};
    }
};

/// Tokens present in both vocabularies plus every special token of
/// `original`, ordered by their id in `original`.
inline std::vector<std::string>
intersect_vocab(const TokenizerModel& original, const TokenizerModel& fresh) {
    std::vector<std::string> kept;
    for (const auto& t : original.tokens()) {
        if (original.is_special(t) || fresh.contains(t)) {
            kept.push_back(t);
        }
    }
    return kept;
}

struct Reduction {
    EmbeddingTable table;
    /// old row -> new row, nullopt for dropped tokens
    std::vector<std::optional<std::uint32_t>> remap;
    SurgeryReport report;
};

/// Keeps the rows of `kept` (plus any of `always_keep` present in the table),
/// in original row order, copying them bit-for-bit.
inline Reduction
reduce_embeddings(const EmbeddingTable& table, std::span<const std::string> kept,
                  std::span<const std::string> always_keep = default_special_tokens()) {
    std::vector<bool> keep(table.vocab_size(), false);
    for (const auto& t : kept) {
        auto r = table.row_of(t);
        if (!r) {
            throw InvalidArgument("reduce_embeddings: kept token \"" + t + "\" is not in the table");
        }
        keep[*r] = true;
    }
    for (const auto& t : always_keep) {
        if (auto r = table.row_of(t)) {
            keep[*r] = true;
        }
    }
    Reduction out;
    out.remap.assign(table.vocab_size(), std::nullopt);
    std::vector<std::string> tokens;
    std::vector<float> values;
    const auto& src = table.matrix();
    for (std::size_t r = 0; r < table.vocab_size(); ++r) {
        if (!keep[r]) {
            continue;
        }
        out.remap[r] = static_cast<std::uint32_t>(tokens.size());
        tokens.push_back(table.tokens()[r]);
        const auto row = src.row(r);
        values.insert(values.end(), row.begin(), row.end());
    }
    EmbeddingMatrix m = tokens.empty() ? EmbeddingMatrix(0, src.dim(), src.dtype())
                                       : EmbeddingMatrix(src.dim(), std::move(values), src.dtype());
    out.table = EmbeddingTable(std::move(tokens), std::move(m));
    auto& rep = out.report;
    rep.old_vocab = table.vocab_size();
    rep.new_vocab = out.table.vocab_size();
    rep.kept = rep.new_vocab;
    rep.dropped = rep.old_vocab - rep.kept;
    rep.old_params = rep.old_vocab * table.dim();
    rep.new_params = rep.new_vocab * table.dim();
    return out;
}

/// The original tokenizer restricted to `kept`: ids follow the order of
/// `kept`, alphabet symbols and merges whose parts or result were dropped go.
inline TokenizerModel
reduce_tokenizer(const TokenizerModel& original, std::span<const std::string> kept) {
    const std::set<std::string> keep(kept.begin(), kept.end());
    std::vector<std::string> alphabet;
    for (const auto& a : original.alphabet()) {
        if (keep.contains(a)) {
            alphabet.push_back(a);
        }
    }
    std::set<std::string> produced(alphabet.begin(), alphabet.end());
    std::vector<MergeRule> merges;
    for (const auto& [a, b] : original.merges()) {
        const auto ab = a + b;
        if (keep.contains(ab) && produced.contains(a) && produced.contains(b)) {
            merges.emplace_back(a, b);
            produced.insert(ab);
        }
    }
    std::vector<std::string> specials;
    std::vector<std::string> vocab;
    for (const auto& t : kept) {
        if (original.is_special(t)) {
            specials.push_back(t);
        } else {
            vocab.push_back(t);
        }
    }
    return TokenizerModel(std::move(specials), std::move(alphabet), std::move(merges), std::move(vocab));
}

/// Tokens of `fresh` that `base` lacks, in `fresh` id order.
inline std::vector<std::string>
tokens_missing_from(const TokenizerModel& base, const TokenizerModel& fresh) {
    std::vector<std::string> out;
    for (const auto& t : fresh.tokens()) {
        if (!fresh.is_special(t) && !base.contains(t)) {
            out.push_back(t);
        }
    }
    return out;
}

struct Extension {
    EmbeddingTable table;
    SurgeryReport report;
};

/// What extend_vocab does with a token whose subtokens are all unknown.
enum class UnknownSubtokens { kReject, kSkip };

/// Appends one row per new token, initialized to the mean of the rows of the
/// token's subtokens under `tokenizer`. Existing rows are untouched. Tokens
/// already in the table are skipped with a note.
inline Extension
extend_vocab(const EmbeddingTable& table, const TokenizerModel& tokenizer, std::span<const std::string> new_tokens,
             UnknownSubtokens on_unknown = UnknownSubtokens::kReject) {
    Extension out;
    auto& rep = out.report;
    rep.old_vocab = table.vocab_size();
    rep.kept = table.vocab_size();

    const std::size_t dim = table.dim();
    std::vector<std::string> tokens = table.tokens();
    std::vector<float> values(table.matrix().values().begin(), table.matrix().values().end());
    std::unordered_set<std::string> present(tokens.begin(), tokens.end());
    const auto unk = tokenizer.id_of(kUnkToken);

    std::vector<double> acc(dim);
    for (const auto& tok : new_tokens) {
        if (present.contains(tok)) {
            rep.notes.push_back("skipped \"" + tok + "\": already in vocabulary");
            continue;
        }
        std::vector<std::size_t> rows;
        for (auto id : tokenizer.encode_token(tok)) {
            if (unk && id == *unk) {
                continue;
            }
            if (auto r = table.row_of(tokenizer.token(id))) {
                rows.push_back(*r);
            }
        }
        if (rows.empty() && on_unknown == UnknownSubtokens::kSkip) {
            rep.notes.push_back("skipped \"" + tok + "\": no known subtokens");
            continue;
        }
        if (rows.empty()) {
            throw InvalidArgument("extend_vocab: token \"" + tok + "\" has no known subtokens");
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (auto r : rows) {
            const auto row = table.matrix().row(r);
            for (std::size_t j = 0; j < dim; ++j) {
                acc[j] += row[j];
            }
        }
        for (std::size_t j = 0; j < dim; ++j) {
            values.push_back(static_cast<float>(acc[j] / static_cast<double>(rows.size())));
        }
        tokens.push_back(tok);
        present.insert(tok);
        ++rep.added;
    }
    out.table = EmbeddingTable(std::move(tokens), EmbeddingMatrix(dim, std::move(values), table.matrix().dtype()));
    rep.new_vocab = out.table.vocab_size();
    rep.old_params = rep.old_vocab * dim;
    rep.new_params = rep.new_vocab * dim;
    return out;
}

/// `base` with `new_tokens` appended to its vocabulary, plus the merges of
/// `fresh` that become applicable (all parts known) once they are added.
inline TokenizerModel
extend_tokenizer(const TokenizerModel& base, const TokenizerModel& fresh, std::span<const std::string> new_tokens) {
    std::vector<std::string> alphabet = base.alphabet();
    std::set<std::string> produced(alphabet.begin(), alphabet.end());
    for (const auto& [a, b] : base.merges()) {
        produced.insert(a + b);
    }
    const std::set<std::string> added(new_tokens.begin(), new_tokens.end());
    for (const auto& a : fresh.alphabet()) {
        if (added.contains(a) && produced.insert(a).second) {
            alphabet.push_back(a);
        }
    }
    std::vector<MergeRule> merges = base.merges();
    for (const auto& [a, b] : fresh.merges()) {
        const auto ab = a + b;
        if (added.contains(ab) && !produced.contains(ab) && produced.contains(a) && produced.contains(b)) {
            merges.emplace_back(a, b);
            produced.insert(ab);
        }
    }
    std::vector<std::string> vocab;
    for (const auto& t : base.tokens()) {
        if (!base.is_special(t)) {
            vocab.push_back(t);
        }
    }
    std::unordered_set<std::string> seen(vocab.begin(), vocab.end());
    for (const auto& t : new_tokens) {
        if (!base.contains(t) && seen.insert(t).second) {
            vocab.push_back(t);
        }
    }
    return TokenizerModel(base.special_tokens(), std::move(alphabet), std::move(merges), std::move(vocab));
}

}  // namespace qirat::surgery
