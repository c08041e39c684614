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

#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "qirat/common.hpp"

namespace qirat {

/// Text to fixed-dimension vector. Implementations must be safe to call from
/// several threads at once.
class Embedder {
 public:
    virtual ~Embedder() = default;

    virtual std::size_t
    dim() const = 0;

    virtual std::vector<float>
    embed(std::string_view text) const = 0;
};

namespace detail {

inline std::uint64_t
fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t
splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::vector<std::string>
split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) != 0) {
            ++i;
        }
        std::size_t j = i;
        while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j])) == 0) {
            ++j;
        }
        if (j > i) {
            out.emplace_back(text.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

}  // namespace detail

/// Deterministic stand-in for a sentence encoder: every whitespace token (ASCII
/// lower-cased) hashes to a pseudo-random direction, the text vector is the sum
/// of its token directions, L2-normalized. Same text and seed give the same
/// vector on every platform and run.
class StubEmbedder final : public Embedder {
 public:
    explicit StubEmbedder(std::size_t dim, std::uint64_t seed = 0x51a7ull) : dim_(dim), seed_(seed) {
        if (dim == 0) {
            throw InvalidArgument("stub embedder: dim must be positive");
        }
    }

    std::size_t
    dim() const override {
        return dim_;
    }

    std::vector<float>
    embed(std::string_view text) const override {
        const auto tokens = detail::split_whitespace(text);
        if (tokens.empty()) {
            throw InvalidArgument("stub embedder: text has no tokens");
        }
        std::vector<double> acc(dim_, 0.0);
        for (auto token : tokens) {
            for (auto& c : token) {
                c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            }
            std::uint64_t state = detail::fnv1a64(token) ^ seed_;
            for (std::size_t i = 0; i < dim_; ++i) {
                // uniform in [-1, 1)
                const auto bits = detail::splitmix64(state) >> 11;
                acc[i] += static_cast<double>(bits) * 0x1.0p-52 - 1.0;
            }
        }
        double norm = 0.0;
        for (double v : acc) {
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            throw InvalidArgument("stub embedder: degenerate text vector");
        }
        std::vector<float> out(dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
            out[i] = static_cast<float>(acc[i] / norm);
        }
        return out;
    }

 private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Looks vectors up in a JSON-lines file of {"text": ..., "vector": [...]}
/// produced by an external model.
class VectorFileEmbedder final : public Embedder {
 public:
    explicit VectorFileEmbedder(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw InvalidArgument("vector file embedder: cannot open " + path);
        }
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            const auto doc = nlohmann::json::parse(line);
            auto vec = doc.at("vector").get<std::vector<float>>();
            if (dim_ == 0) {
                dim_ = vec.size();
            }
            if (vec.empty() || vec.size() != dim_) {
                throw InvalidArgument(path + ":" + std::to_string(lineno) + ": inconsistent vector length");
            }
            table_.insert_or_assign(doc.at("text").get<std::string>(), std::move(vec));
        }
        if (dim_ == 0) {
            throw InvalidArgument("vector file embedder: no vectors in " + path);
        }
    }

    std::size_t
    dim() const override {
        return dim_;
    }

    std::vector<float>
    embed(std::string_view text) const override {
        auto it = table_.find(std::string(text));
        if (it == table_.end()) {
            throw InvalidArgument("vector file embedder: no vector for text \"" + std::string(text) + "\"");
        }
        return it->second;
    }

 private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<float>> table_;
};

/// Runs `command` once per text with the text on stdin and parses a JSON array
/// of numbers from its stdout.
class ProcessEmbedder final : public Embedder {
 public:
    ProcessEmbedder(std::string command, std::size_t dim) : command_(std::move(command)), dim_(dim) {
        if (dim == 0 || command_.empty()) {
            throw InvalidArgument("process embedder: command and positive dim required");
        }
    }

    std::size_t
    dim() const override {
        return dim_;
    }

    std::vector<float>
    embed(std::string_view text) const override {
        namespace fs = std::filesystem;
        char name[] = "/tmp/qirat-embed-XXXXXX";
        const int fd = ::mkstemp(name);
        if (fd < 0) {
            throw std::runtime_error("process embedder: cannot create temp file");
        }
        ::close(fd);
        const fs::path tmp(name);
        {
            std::ofstream out(tmp, std::ios::binary);
            out << text;
        }
        const std::string cmd = command_ + " < '" + tmp.string() + "'";
        std::string output;
        FILE* pipe = ::popen(cmd.c_str(), "r");
        if (pipe == nullptr) {
            fs::remove(tmp);
            throw std::runtime_error("process embedder: cannot start: " + command_);
        }
        char buf[4096];
        std::size_t n = 0;
        while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) {
            output.append(buf, n);
        }
        const int status = ::pclose(pipe);
        fs::remove(tmp);
        if (status != 0) {
            throw std::runtime_error("process embedder: command exited with status " + std::to_string(status));
        }
        auto vec = nlohmann::json::parse(output).get<std::vector<float>>();
        if (vec.size() != dim_) {
            throw std::runtime_error("process embedder: expected " + std::to_string(dim_) + " values, got " +
                                     std::to_string(vec.size()));
        }
        return vec;
    }

 private:
    std::string command_;
    std::size_t dim_;
};

}  // namespace qirat
