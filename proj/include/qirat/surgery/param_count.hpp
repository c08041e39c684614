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

#include <cstdint>
#include <string>

#include "qirat/common.hpp"

namespace qirat::surgery {

/// Shape of a BERT/RoBERTa-style encoder.
struct ModelShape {
    std::uint64_t vocab_size = 0;
    std::uint64_t hidden = 0;
    std::uint64_t layers = 0;
    std::uint64_t ffn = 0;
    std::uint64_t max_positions = 0;
    std::uint64_t type_vocab = 1;
};

struct ParamCount {
    std::uint64_t vocab_embedding = 0;  // vocab x hidden, the "EM" share
    std::uint64_t embedding = 0;        // word + position + token-type + layer norm
    std::uint64_t per_layer = 0;
    std::uint64_t encoder = 0;
    std::uint64_t total = 0;
};

/// Parameter count of the embedding layer plus L transformer layers. Each
/// layer: Q/K/V/output projections with bias, the two feed-forward matrices
/// with bias, and two layer norms. No pooler or masked-LM head.
inline ParamCount
count_params(const ModelShape& s) {
    if (s.vocab_size == 0 || s.hidden == 0 || s.layers == 0 || s.ffn == 0 || s.max_positions == 0 ||
        s.type_vocab == 0) {
        throw InvalidArgument("count_params: every shape field must be positive");
    }
    const std::uint64_t d = s.hidden;
    ParamCount p;
    p.vocab_embedding = s.vocab_size * d;
    p.embedding = p.vocab_embedding + s.max_positions * d + s.type_vocab * d + 2 * d;
    const std::uint64_t attention = 4 * (d * d + d);
    const std::uint64_t feed_forward = (d * s.ffn + s.ffn) + (s.ffn * d + d);
    const std::uint64_t norms = 2 * (2 * d);
    p.per_layer = attention + feed_forward + norms;
    p.encoder = s.layers * p.per_layer;
    p.total = p.embedding + p.encoder;
    return p;
}

}  // namespace qirat::surgery
