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

// Byte-pair-encoding tokenizer: whitespace pre-tokenization, UTF-8 code points
// as base symbols, and an end-of-word marker appended to the last symbol of
// every word ("low" -> l o w</w>).

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qirat/common.hpp"
#include "qirat/embedder.hpp"

namespace qirat::surgery {

inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::string_view kUnkToken = "<unk>";

inline const std::vector<std::string>&
default_special_tokens() {
    static const std::vector<std::string> specials{"<unk>", "<pad>", "<s>", "</s>"};
    return specials;
}

using MergeRule = std::pair<std::string, std::string>;

/// Splits UTF-8 into code points; a malformed byte becomes its own symbol.
inline std::vector<std::string>
split_code_points(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if (c >= 0xf0 && c < 0xf8) {
            len = 4;
        } else if (c >= 0xe0) {
            len = c < 0xf0 ? 3 : 1;
        } else if (c >= 0xc0) {
            len = 2;
        }
        if (i + len > s.size()) {
            len = 1;
        }
        for (std::size_t j = 1; j < len; ++j) {
            if ((static_cast<unsigned char>(s[i + j]) & 0xc0) != 0x80) {
                len = 1;
                break;
            }
        }
        out.emplace_back(s.substr(i, len));
        i += len;
    }
    return out;
}

/// Base symbols of one word, end-of-word marker attached to the last.
inline std::vector<std::string>
word_symbols(std::string_view word, bool end_of_word = true) {
    auto syms = split_code_points(word);
    if (end_of_word && !syms.empty()) {
        syms.back() += kEndOfWord;
    }
    return syms;
}

class TokenizerModel {
 public:
    TokenizerModel() = default;

    /// Ids: special tokens first, then `vocab` in order. Every merge must
    /// combine symbols that are in the alphabet or produced by an earlier merge.
    TokenizerModel(std::vector<std::string> special_tokens, std::vector<std::string> alphabet,
                   std::vector<MergeRule> merges, std::vector<std::string> vocab)
        : specials_(std::move(special_tokens)), alphabet_(std::move(alphabet)), merges_(std::move(merges)) {
        for (const auto& t : specials_) {
            add_token(t);
        }
        for (const auto& t : vocab) {
            add_token(t);
        }
        validate();
        for (std::size_t i = 0; i < merges_.size(); ++i) {
            merge_rank_.emplace(merge_key(merges_[i].first, merges_[i].second), i);
        }
    }

    const std::vector<std::string>&
    special_tokens() const noexcept {
        return specials_;
    }
    const std::vector<std::string>&
    alphabet() const noexcept {
        return alphabet_;
    }
    const std::vector<MergeRule>&
    merges() const noexcept {
        return merges_;
    }
    /// Token strings indexed by id.
    const std::vector<std::string>&
    tokens() const noexcept {
        return id_to_token_;
    }
    std::size_t
    vocab_size() const noexcept {
        return id_to_token_.size();
    }
    bool
    contains(std::string_view token) const {
        return token_to_id_.contains(std::string(token));
    }
    std::optional<std::uint32_t>
    id_of(std::string_view token) const {
        auto it = token_to_id_.find(std::string(token));
        if (it == token_to_id_.end()) {
            return std::nullopt;
        }
        return it->second;
    }
    const std::string&
    token(std::uint32_t id) const {
        return id_to_token_.at(id);
    }
    std::uint32_t
    unk_id() const {
        auto id = id_of(kUnkToken);
        if (!id) {
            throw StateError("tokenizer has no <unk> token");
        }
        return *id;
    }
    bool
    is_special(std::string_view token) const {
        return std::find(specials_.begin(), specials_.end(), token) != specials_.end();
    }

    /// Applies merges to a symbol sequence: repeatedly merge every occurrence
    /// of the adjacent pair with the lowest training rank.
    std::vector<std::string>
    apply_merges(std::vector<std::string> syms) const {
        while (syms.size() > 1) {
            std::size_t best_rank = merges_.size();
            for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
                auto it = merge_rank_.find(merge_key(syms[i], syms[i + 1]));
                if (it != merge_rank_.end() && it->second < best_rank) {
                    best_rank = it->second;
                }
            }
            if (best_rank == merges_.size()) {
                break;
            }
            const auto& [left, right] = merges_[best_rank];
            std::vector<std::string> next;
            next.reserve(syms.size());
            for (std::size_t i = 0; i < syms.size(); ++i) {
                if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
                    next.push_back(left + right);
                    ++i;
                } else {
                    next.push_back(std::move(syms[i]));
                }
            }
            syms = std::move(next);
        }
        return syms;
    }

    /// Token strings for `text`; symbols outside the vocabulary come back as is.
    std::vector<std::string>
    segment(std::string_view text) const {
        std::vector<std::string> out;
        for (const auto& word : detail::split_whitespace(text)) {
            auto pieces = apply_merges(word_symbols(word));
            out.insert(out.end(), std::make_move_iterator(pieces.begin()), std::make_move_iterator(pieces.end()));
        }
        return out;
    }

    /// Ids for `text`. Pieces outside the vocabulary map to <unk>.
    std::vector<std::uint32_t>
    encode(std::string_view text) const {
        return to_ids(segment(text));
    }

    /// Ids for a single vocabulary-style token string such as "hadith</w>" or
    /// "had": its surface is split into base symbols (keeping the end-of-word
    /// marker if the token has one) and merged.
    std::vector<std::uint32_t>
    encode_token(std::string_view token) const {
        const bool eow = token.size() >= kEndOfWord.size() && token.ends_with(kEndOfWord);
        const auto surface = eow ? token.substr(0, token.size() - kEndOfWord.size()) : token;
        return to_ids(apply_merges(word_symbols(surface, eow)));
    }

    /// Inverse of encode for whitespace-normalized text: words are joined by
    /// single spaces.
    std::string
    decode(std::span<const std::uint32_t> ids) const {
        std::string out;
        for (auto id : ids) {
            std::string_view t = token(id);
            if (t.ends_with(kEndOfWord)) {
                out.append(t.substr(0, t.size() - kEndOfWord.size()));
                out.push_back(' ');
            } else {
                out.append(t);
            }
        }
        if (!out.empty() && out.back() == ' ') {
            out.pop_back();
        }
        return out;
    }

    nlohmann::json
    to_json() const {
        nlohmann::json merges = nlohmann::json::array();
        for (const auto& [a, b] : merges_) {
            merges.push_back({a, b});
        }
        nlohmann::json vocab = nlohmann::json::object();
        for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
            vocab[id_to_token_[i]] = i;
        }
        return {{"end_of_word", kEndOfWord},
                {"special_tokens", specials_},
                {"alphabet", alphabet_},
                {"merges", merges},
                {"vocab", vocab}};
    }

    static TokenizerModel
    from_json(const nlohmann::json& doc) {
        auto specials = doc.at("special_tokens").get<std::vector<std::string>>();
        auto alphabet = doc.at("alphabet").get<std::vector<std::string>>();
        std::vector<MergeRule> merges;
        for (const auto& m : doc.at("merges")) {
            merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
        }
        const auto& vocab_doc = doc.at("vocab");
        std::vector<std::string> by_id(vocab_doc.size());
        for (auto it = vocab_doc.begin(); it != vocab_doc.end(); ++it) {
            const auto id = it.value().get<std::size_t>();
            if (id >= by_id.size() || !by_id[id].empty()) {
                throw InvalidArgument("tokenizer json: vocabulary ids are not dense");
            }
            by_id[id] = it.key();
        }
        if (by_id.size() < specials.size() ||
            !std::equal(specials.begin(), specials.end(), by_id.begin())) {
            throw InvalidArgument("tokenizer json: special tokens must hold the first ids");
        }
        by_id.erase(by_id.begin(), by_id.begin() + static_cast<std::ptrdiff_t>(specials.size()));
        return TokenizerModel(std::move(specials), std::move(alphabet), std::move(merges), std::move(by_id));
    }

    void
    save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) {
            throw FormatError(FormatErrorKind::kIo, path + ": cannot open for writing");
        }
        out << to_json().dump(2) << '\n';
    }

    static TokenizerModel
    load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw FormatError(FormatErrorKind::kIo, path + ": cannot open for reading");
        }
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(FormatErrorKind::kCorrupt, path + ": " + e.what());
        }
    }

 private:
    static std::string
    merge_key(const std::string& a, const std::string& b) {
        std::string k;
        k.reserve(a.size() + b.size() + 1);
        k.append(a).push_back('\x1f');
        k.append(b);
        return k;
    }

    void
    add_token(const std::string& t) {
        if (t.empty()) {
            throw InvalidArgument("tokenizer: empty token");
        }
        if (!token_to_id_.emplace(t, static_cast<std::uint32_t>(id_to_token_.size())).second) {
            throw InvalidArgument("tokenizer: duplicate token \"" + t + "\"");
        }
        id_to_token_.push_back(t);
    }

    void
    validate() const {
        std::set<std::string> known(alphabet_.begin(), alphabet_.end());
        for (std::size_t i = 0; i < merges_.size(); ++i) {
            const auto& [a, b] = merges_[i];
            if (!known.contains(a) || !known.contains(b)) {
                throw InvalidArgument("tokenizer: merge #" + std::to_string(i) + " (" + a + ", " + b +
                                      ") uses a symbol that no earlier rule produces");
            }
            known.insert(a + b);
        }
    }

    std::vector<std::uint32_t>
    to_ids(const std::vector<std::string>& pieces) const {
        std::vector<std::uint32_t> ids;
        ids.reserve(pieces.size());
        for (const auto& p : pieces) {
            auto id = id_of(p);
            ids.push_back(id ? *id : unk_id());
        }
        return ids;
    }

    std::vector<std::string> specials_;
    std::vector<std::string> alphabet_;
    std::vector<MergeRule> merges_;
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, std::uint32_t> token_to_id_;
    std::unordered_map<std::string, std::size_t> merge_rank_;
};

/// Trains BPE until the non-special vocabulary reaches `vocab_size` or no
/// adjacent pair occurs more than once. The most frequent pair is merged
/// first; frequency ties go to the lexicographically smallest (left, right).
inline TokenizerModel
train_bpe(std::span<const std::string> corpus, std::size_t vocab_size,
          std::vector<std::string> special_tokens = default_special_tokens()) {
    std::map<std::string, std::size_t> word_freq;
    for (const auto& line : corpus) {
        for (auto& w : detail::split_whitespace(line)) {
            ++word_freq[std::move(w)];
        }
    }
    if (word_freq.empty()) {
        throw InvalidArgument("train_bpe: empty corpus");
    }

    std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
    std::set<std::string> alphabet_set;
    for (const auto& [w, f] : word_freq) {
        auto syms = word_symbols(w);
        alphabet_set.insert(syms.begin(), syms.end());
        words.emplace_back(std::move(syms), f);
    }
    std::vector<std::string> alphabet(alphabet_set.begin(), alphabet_set.end());
    if (vocab_size < alphabet.size()) {
        throw InvalidArgument("train_bpe: vocab_size " + std::to_string(vocab_size) + " is below the alphabet size " +
                              std::to_string(alphabet.size()));
    }

    std::vector<std::string> vocab = alphabet;
    std::set<std::string> vocab_set(alphabet.begin(), alphabet.end());
    std::vector<MergeRule> merges;
    while (vocab.size() < vocab_size) {
        std::map<MergeRule, std::size_t> pair_count;
        for (const auto& [syms, f] : words) {
            for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
                pair_count[{syms[i], syms[i + 1]}] += f;
            }
        }
        // std::map iterates pairs in lexicographic order, so the first maximum wins ties
        const MergeRule* best = nullptr;
        std::size_t best_count = 0;
        for (const auto& [pair, count] : pair_count) {
            if (count > best_count) {
                best = &pair;
                best_count = count;
            }
        }
        if (best == nullptr || best_count < 2) {
            break;
        }
        const MergeRule rule = *best;
        const std::string merged = rule.first + rule.second;
        for (auto& [syms, f] : words) {
            std::vector<std::string> next;
            next.reserve(syms.size());
            for (std::size_t i = 0; i < syms.size(); ++i) {
                if (i + 1 < syms.size() && syms[i] == rule.first && syms[i + 1] == rule.second) {
                    next.push_back(merged);
                    ++i;
                } else {
                    next.push_back(std::move(syms[i]));
                }
            }
            syms = std::move(next);
        }
        merges.push_back(rule);
        if (vocab_set.insert(merged).second) {
            vocab.push_back(merged);
        }
    }
    return TokenizerModel(std::move(special_tokens), std::move(alphabet), std::move(merges), std::move(vocab));
}

}  // namespace qirat::surgery
