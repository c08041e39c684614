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
#include <vector>

#include "qirat/common.hpp"
#include "qirat/random.hpp"
#include "qirat/training/info_nce.hpp"

namespace qirat::training {

struct ToyTrainingConfig {
    std::size_t input_dim = 32;
    std::size_t output_dim = 16;
    std::size_t pairs = 512;
    std::size_t batch = 16;
    std::size_t epochs = 20;
    double learning_rate = 0.05;
    double temperature = 0.05;
    double pair_noise = 0.3;  // std of the noise separating a query from its passage
    std::uint64_t seed = 7;
};

struct ToyTrainingResult {
    std::vector<double> epoch_loss;  // mean batch loss per epoch, each batch scored before its own update
};

/// Trains a shared linear encoder W (output_dim x input_dim) with the in-batch
/// contrastive loss on synthetic pairs: a latent vector z gives the query
/// z + noise and the passage z + noise. Plain SGD, fixed batch order.
inline ToyTrainingResult
train_toy_encoder(const ToyTrainingConfig& cfg) {
    if (cfg.batch < 2 || cfg.pairs < cfg.batch || cfg.input_dim == 0 || cfg.output_dim == 0) {
        throw InvalidArgument("toy encoder: need batch >= 2, pairs >= batch and positive dims");
    }
    SeededRng rng(cfg.seed);
    const std::size_t in = cfg.input_dim;
    const std::size_t out = cfg.output_dim;
    std::vector<double> xq(cfg.pairs * in);
    std::vector<double> xp(cfg.pairs * in);
    for (std::size_t i = 0; i < cfg.pairs; ++i) {
        for (std::size_t k = 0; k < in; ++k) {
            const double z = rng.normal();
            xq[i * in + k] = z + cfg.pair_noise * rng.normal();
            xp[i * in + k] = z + cfg.pair_noise * rng.normal();
        }
    }
    std::vector<double> w(out * in);
    for (auto& v : w) {
        v = rng.normal() / std::sqrt(static_cast<double>(in));
    }

    auto encode = [&](const std::vector<double>& x, std::size_t row, std::vector<double>& dst, std::size_t slot) {
        for (std::size_t o = 0; o < out; ++o) {
            double s = 0.0;
            for (std::size_t k = 0; k < in; ++k) {
                s += w[o * in + k] * x[row * in + k];
            }
            dst[slot * out + o] = s;
        }
    };

    ToyTrainingResult result;
    const std::size_t batches = cfg.pairs / cfg.batch;
    std::vector<double> grad_w(out * in);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            ContrastiveBatch<double> batch;
            batch.size = cfg.batch;
            batch.dim = out;
            batch.temperature = cfg.temperature;
            batch.queries.resize(cfg.batch * out);
            batch.passages.resize(cfg.batch * out);
            for (std::size_t i = 0; i < cfg.batch; ++i) {
                encode(xq, b * cfg.batch + i, batch.queries, i);
                encode(xp, b * cfg.batch + i, batch.passages, i);
            }
            const auto res = info_nce_grad(batch);
            epoch_loss += res.loss;
            // chain rule through the shared linear map: dL/dW = sum g x^T
            std::fill(grad_w.begin(), grad_w.end(), 0.0);
            for (std::size_t i = 0; i < cfg.batch; ++i) {
                const std::size_t row = b * cfg.batch + i;
                for (std::size_t o = 0; o < out; ++o) {
                    const double gq = res.d_queries[i * out + o];
                    const double gp = res.d_passages[i * out + o];
                    for (std::size_t k = 0; k < in; ++k) {
                        grad_w[o * in + k] += gq * xq[row * in + k] + gp * xp[row * in + k];
                    }
                }
            }
            for (std::size_t j = 0; j < w.size(); ++j) {
                w[j] -= cfg.learning_rate * grad_w[j];
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    }
    return result;
}

}  // namespace qirat::training
