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

// Query-serving core and its HTTP front end.
//
// SearchService owns the loaded index, the query embedder and one backend per
// enabled kind; it answers JSON requests and keeps in-memory stats.
// HttpService exposes it as POST /search, GET /health and GET /stats.

#include <httplib.h>

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qirat/backends.hpp"
#include "qirat/common.hpp"
#include "qirat/embed_store.hpp"
#include "qirat/embedder.hpp"

namespace qirat::service {

struct ServiceConfig {
    std::string index_path;
    std::size_t workers = 1;
    std::size_t default_topk = 10;
    BackendKind default_backend = BackendKind::kExact;
    /// Backends a request may select. Non-exact ones are built on first use
    /// unless `preload` is set.
    std::set<BackendKind> backends = {BackendKind::kExact, BackendKind::kSq, BackendKind::kPq, BackendKind::kHnsw};
    bool preload = false;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t max_topk = 1000;
    BackendOptions backend_options;

    void
    validate() const {
        if (workers == 0) {
            throw InvalidArgument("service: workers must be >= 1");
        }
        if (default_topk == 0 || default_topk > max_topk) {
            throw InvalidArgument("service: default topk must be in [1, " + std::to_string(max_topk) + "]");
        }
        if (port < 0 || port > 65535) {
            throw InvalidArgument("service: port " + std::to_string(port) + " out of range");
        }
        if (!backends.contains(default_backend)) {
            throw InvalidArgument(std::string("service: default backend ") + to_string(default_backend) +
                                  " is not enabled");
        }
    }
};

/// Client-side request error; maps to HTTP 400.
class RequestError : public InvalidArgument {
 public:
    using InvalidArgument::InvalidArgument;
};

class SearchService {
 public:
    SearchService(ServiceConfig config, std::shared_ptr<const Embedder> embedder)
        : config_(std::move(config)), embedder_(std::move(embedder)) {
        config_.validate();
        auto stored = load_index(config_.index_path);
        matrix_ = std::make_shared<const EmbeddingMatrix>(std::move(stored.matrix));
        ids_ = std::move(stored.ids);
        if (embedder_ && embedder_->dim() != matrix_->dim()) {
            throw InvalidArgument("service: embedder dim " + std::to_string(embedder_->dim()) + " != index dim " +
                                  std::to_string(matrix_->dim()));
        }
        const auto ppath = passages_path(config_.index_path);
        if (std::filesystem::exists(ppath)) {
            for (auto& p : read_passages(ppath)) {
                texts_.emplace(std::move(p.id), std::move(p.text));
            }
        }
        if (!config_.backend_options.cache_prefix) {
            config_.backend_options.cache_prefix = config_.index_path;
        }
        config_.backend_options.workers = config_.workers;
        backend(BackendKind::kExact);
        if (config_.preload) {
            for (auto kind : config_.backends) {
                backend(kind);
            }
        }
    }

    const ServiceConfig&
    config() const noexcept {
        return config_;
    }
    const EmbeddingMatrix&
    matrix() const noexcept {
        return *matrix_;
    }
    const IdMap&
    ids() const noexcept {
        return ids_;
    }

    /// Handles a POST /search body. Throws RequestError on bad input.
    nlohmann::json
    search(const nlohmann::json& body) {
        if (!body.is_object()) {
            throw RequestError("request body must be a JSON object");
        }
        if (!body.contains("query")) {
            throw RequestError("missing field \"query\"");
        }
        std::size_t topk = config_.default_topk;
        if (body.contains("topk")) {
            const auto& t = body["topk"];
            if (!t.is_number_integer() || t.get<long long>() < 1 ||
                t.get<long long>() > static_cast<long long>(config_.max_topk)) {
                throw RequestError("\"topk\" must be an integer in [1, " + std::to_string(config_.max_topk) + "]");
            }
            topk = t.get<std::size_t>();
        }
        BackendKind kind = config_.default_backend;
        if (body.contains("backend")) {
            if (!body["backend"].is_string()) {
                throw RequestError("\"backend\" must be a string");
            }
            try {
                kind = parse_backend_kind(body["backend"].get<std::string>());
            } catch (const InvalidArgument& e) {
                throw RequestError(e.what());
            }
            if (!config_.backends.contains(kind)) {
                throw RequestError(std::string("backend \"") + to_string(kind) + "\" is not enabled");
            }
        }
        const auto query = query_vector(body["query"]);
        return run(query, topk, kind);
    }

    /// Searches with an already-embedded query. Shared by the CLI.
    nlohmann::json
    run(std::span<const float> query, std::size_t topk, BackendKind kind) {
        const SearchBackend& b = backend(kind);
        const auto t0 = std::chrono::steady_clock::now();
        SearchResult result;
        try {
            result = b.search(query, topk);
        } catch (const InvalidArgument& e) {
            throw RequestError(e.what());
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        record(kind, ms);
        nlohmann::json hits = nlohmann::json::array();
        for (const auto& h : result.hits) {
            nlohmann::json hit{{"id", ids_.at(h.row)}, {"score", h.score}};
            if (auto it = texts_.find(ids_.at(h.row)); it != texts_.end()) {
                hit["text"] = it->second;
            }
            hits.push_back(std::move(hit));
        }
        return {{"hits", std::move(hits)},
                {"latency_ms", ms},
                {"backend", to_string(kind)},
                {"workers", kind == BackendKind::kExact ? config_.workers : std::size_t{1}}};
    }

    /// Embeds a string query or validates a vector query.
    std::vector<float>
    query_vector(const nlohmann::json& q) const {
        if (q.is_string()) {
            if (!embedder_) {
                throw RequestError("text queries need an embedder; send a vector");
            }
            const auto text = q.get<std::string>();
            if (text.empty()) {
                throw RequestError("\"query\" is empty");
            }
            try {
                return embedder_->embed(text);
            } catch (const InvalidArgument& e) {
                throw RequestError(e.what());
            }
        }
        if (q.is_array()) {
            std::vector<float> v;
            v.reserve(q.size());
            for (const auto& x : q) {
                if (!x.is_number()) {
                    throw RequestError("\"query\" vector must contain only numbers");
                }
                v.push_back(x.get<float>());
            }
            if (v.size() != matrix_->dim()) {
                throw RequestError("\"query\" vector has " + std::to_string(v.size()) + " values, index dim is " +
                                   std::to_string(matrix_->dim()));
            }
            return v;
        }
        throw RequestError("\"query\" must be a string or an array of numbers");
    }

    nlohmann::json
    health() const {
        nlohmann::json backends = nlohmann::json::array();
        for (auto kind : config_.backends) {
            backends.push_back(to_string(kind));
        }
        return {{"status", "ok"},
                {"count", matrix_->count()},
                {"dim", matrix_->dim()},
                {"workers", config_.workers},
                {"backends", std::move(backends)}};
    }

    nlohmann::json
    stats() const {
        std::lock_guard lock(stats_mu_);
        nlohmann::json per = nlohmann::json::object();
        std::size_t total = 0;
        for (auto kind : config_.backends) {
            const auto it = stats_.find(kind);
            const std::size_t n = it == stats_.end() ? 0 : it->second.queries;
            const double sum = it == stats_.end() ? 0.0 : it->second.total_ms;
            per[to_string(kind)] = {{"queries", n}, {"mean_latency_ms", n == 0 ? 0.0 : sum / static_cast<double>(n)}};
            total += n;
        }
        return {{"backends", std::move(per)}, {"total_queries", total}};
    }

    /// Returns the backend, building it on first use.
    const SearchBackend&
    backend(BackendKind kind) {
        std::lock_guard lock(backends_mu_);
        auto& slot = backends_[kind];
        if (!slot) {
            slot = make_backend(kind, matrix_, config_.backend_options);
        }
        return *slot;
    }

 private:
    struct Counter {
        std::size_t queries = 0;
        double total_ms = 0.0;
    };

    void
    record(BackendKind kind, double ms) {
        std::lock_guard lock(stats_mu_);
        auto& c = stats_[kind];
        ++c.queries;
        c.total_ms += ms;
    }

    ServiceConfig config_;
    std::shared_ptr<const Embedder> embedder_;
    std::shared_ptr<const EmbeddingMatrix> matrix_;
    IdMap ids_;
    std::map<std::string, std::string, std::less<>> texts_;
    std::mutex backends_mu_;
    std::map<BackendKind, std::unique_ptr<SearchBackend>> backends_;
    mutable std::mutex stats_mu_;
    std::map<BackendKind, Counter> stats_;
};

/// HTTP front end. Every 4xx/5xx carries a JSON body {"error": ...}.
class HttpService {
 public:
    explicit HttpService(SearchService& service) : service_(service) {
        // httplib defaults to SO_REUSEPORT, which lets a second server share a busy port
        server_.set_socket_options([](socket_t sock) {
            int yes = 1;
            ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        });
        server_.Post("/search", [this](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json body;
            try {
                body = nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::parse_error& e) {
                return fail(res, 400, std::string("malformed JSON: ") + e.what());
            }
            try {
                reply(res, 200, service_.search(body));
            } catch (const RequestError& e) {
                fail(res, 400, e.what());
            }
        });
        server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, service_.health());
        });
        server_.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, service_.stats());
        });
        server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string what = "internal error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                what = e.what();
            } catch (...) {
            }
            fail(res, 500, what);
        });
        server_.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (res.body.empty()) {
                fail(res, res.status, "no route for " + req.method + " " + req.path);
            }
        });
    }

    HttpService(const HttpService&) = delete;
    HttpService&
    operator=(const HttpService&) = delete;

    ~HttpService() {
        stop();
    }

    /// Binds the configured address; port 0 picks a free port. Throws on failure.
    int
    bind() {
        const auto& cfg = service_.config();
        if (cfg.port == 0) {
            port_ = server_.bind_to_any_port(cfg.host);
        } else {
            port_ = server_.bind_to_port(cfg.host, cfg.port) ? cfg.port : -1;
        }
        if (port_ < 0) {
            throw std::runtime_error("serve: cannot bind " + cfg.host + ":" + std::to_string(cfg.port) +
                                     " (address in use or not permitted)");
        }
        return port_;
    }

    /// Serves until stop(). Call bind() first.
    void
    listen() {
        if (port_ < 0) {
            throw StateError("serve: listen() before bind()");
        }
        server_.listen_after_bind();
    }

    void
    stop() {
        server_.stop();
    }

    void
    wait_until_ready() const {
        server_.wait_until_ready();
    }

    int
    port() const noexcept {
        return port_;
    }

 private:
    static void
    reply(httplib::Response& res, int status, const nlohmann::json& doc) {
        res.status = status;
        res.set_content(doc.dump(), "application/json");
    }
    static void
    fail(httplib::Response& res, int status, const std::string& message) {
        reply(res, status, {{"error", message}, {"status", status}});
    }

    SearchService& service_;
    httplib::Server server_;
    int port_ = -1;
};

}  // namespace qirat::service
