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

// Seeded synthetic embedding corpora for tests and benchmarks.
//
// A row is drawn from one of `clusters` Gaussian clusters: a shared common
// direction plus the cluster center, plus a draw from a low-rank
// (`latent_dim`) Gaussian around the center, plus small isotropic noise, then
// L2-normalized. A fraction of rows are near-duplicates of earlier rows.
// Queries come from the same clusters with their own isotropic noise level.

#include <cmath>
#include <cstdint>
#include <vector>

#include "qirat/common.hpp"
#include "qirat/embed_store.hpp"
#include "qirat/random.hpp"

namespace qirat {

struct SyntheticCorpusParams {
    std::size_t count = 50'000;
    std::size_t dim = 384;
    std::size_t clusters = 32;
    std::size_t latent_dim = 4;
    double spread = 1.0;        // std of the latent coordinates
    double noise = 0.1;         // total std of the isotropic noise (spread over all dims)
    double query_noise = 0.5;   // same, for queries
    double common = 1.0;        // weight of the direction shared by all rows
    double duplicate_fraction = 0.2;
    double duplicate_noise = 3e-5;
    std::uint64_t seed = 42;
};

class SyntheticCorpus {
 public:
    explicit SyntheticCorpus(const SyntheticCorpusParams& p) : p_(p), rng_(p.seed) {
        if (p.dim == 0 || p.clusters == 0) {
            throw InvalidArgument("synthetic corpus: dim and clusters must be positive");
        }
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(p.dim));
        std::vector<double> common(p.dim);
        for (auto& v : common) {
            v = rng_.normal();
        }
        normalize(common);
        centers_.resize(p.clusters * p.dim);
        basis_.resize(p.clusters * p.latent_dim * p.dim);
        for (std::size_t c = 0; c < p.clusters; ++c) {
            std::vector<double> center(p.dim);
            for (auto& v : center) {
                v = rng_.normal();
            }
            normalize(center);
            for (std::size_t j = 0; j < p.dim; ++j) {
                centers_[c * p.dim + j] = center[j] + p.common * common[j];
            }
            for (std::size_t r = 0; r < p.latent_dim; ++r) {
                for (std::size_t j = 0; j < p.dim; ++j) {
                    basis_[(c * p.latent_dim + r) * p.dim + j] = rng_.normal() * inv_sqrt_d;
                }
            }
        }
    }

    /// `count` corpus rows; the trailing duplicate_fraction of them copy an
    /// earlier row plus duplicate_noise.
    EmbeddingMatrix
    corpus() {
        const std::size_t dups = static_cast<std::size_t>(static_cast<double>(p_.count) * p_.duplicate_fraction);
        const std::size_t originals = p_.count - dups;
        if (p_.count > 0 && originals == 0) {
            throw InvalidArgument("synthetic corpus: duplicate_fraction leaves no original rows");
        }
        std::vector<float> values;
        values.reserve(p_.count * p_.dim);
        std::vector<double> row(p_.dim);
        for (std::size_t i = 0; i < originals; ++i) {
            sample(p_.noise, row);
            append(values, row);
        }
        const double scale = p_.duplicate_noise / std::sqrt(static_cast<double>(p_.dim));
        for (std::size_t i = 0; i < dups; ++i) {
            const std::size_t src = rng_.below(originals);
            for (std::size_t j = 0; j < p_.dim; ++j) {
                row[j] = values[src * p_.dim + j] + scale * rng_.normal();
            }
            append(values, row);
        }
        if (values.empty()) {
            return EmbeddingMatrix(0, p_.dim);
        }
        return EmbeddingMatrix(p_.dim, std::move(values), DType::kFloat32, true);
    }

    /// `n` unit-norm query vectors.
    std::vector<std::vector<float>>
    queries(std::size_t n) {
        std::vector<std::vector<float>> out;
        std::vector<double> row(p_.dim);
        for (std::size_t i = 0; i < n; ++i) {
            sample(p_.query_noise, row);
            std::vector<float> q;
            append(q, row);
            out.push_back(std::move(q));
        }
        return out;
    }

 private:
    static void
    normalize(std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) {
            s += x * x;
        }
        s = std::sqrt(s);
        for (double& x : v) {
            x /= s;
        }
    }

    void
    append(std::vector<float>& dst, std::vector<double> v) const {
        normalize(v);
        for (double x : v) {
            dst.push_back(static_cast<float>(x));
        }
    }

    void
    sample(double iso, std::vector<double>& row) {
        const std::size_t c = rng_.below(p_.clusters);
        const double iso_scale = iso / std::sqrt(static_cast<double>(p_.dim));
        for (std::size_t j = 0; j < p_.dim; ++j) {
            row[j] = centers_[c * p_.dim + j] + iso_scale * rng_.normal();
        }
        for (std::size_t r = 0; r < p_.latent_dim; ++r) {
            const double z = p_.spread * rng_.normal();
            const double* b = basis_.data() + (c * p_.latent_dim + r) * p_.dim;
            for (std::size_t j = 0; j < p_.dim; ++j) {
                row[j] += z * b[j];
            }
        }
    }

    SyntheticCorpusParams p_;
    SeededRng rng_;
    std::vector<double> centers_;
    std::vector<double> basis_;
};

}  // namespace qirat
