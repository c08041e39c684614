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
#include <httplib.h>

#include <memory>
#include <nlohmann/json.hpp>
#include <thread>

#include "qirat/embedder.hpp"
#include "qirat/service/http_service.hpp"
#include "test_util.hpp"

namespace {

using nlohmann::json;
using qirat::service::HttpService;
using qirat::service::SearchService;
using qirat::service::ServiceConfig;

std::vector<qirat::PassageRecord>
corpus() {
    std::vector<qirat::PassageRecord> out;
    const std::vector<std::string> words{"prayer", "fasting", "charity", "pilgrimage", "faith", "knowledge",
                                         "patience", "honesty", "mercy", "justice", "travel", "trade"};
    for (std::size_t i = 0; i < 60; ++i) {
        std::string text = words[i % words.size()] + " " + words[(i * 7 + 3) % words.size()] + " passage " +
                           std::to_string(i);
        out.push_back({"doc-" + std::to_string(i), text, std::nullopt});
    }
    return out;
}

/// Serves a small stub-embedded index on an ephemeral port for one test.
class ServiceFixture : public ::testing::Test {
 protected:
    void
    SetUp() override {
        passages_ = corpus();
        embedder_ = std::make_shared<qirat::StubEmbedder>(32, 99);
        qirat::ingest_corpus(passages_, *embedder_, dir_.file("c.emb"));
        ServiceConfig cfg;
        cfg.index_path = dir_.file("c.emb");
        cfg.workers = 3;
        cfg.port = 0;
        cfg.backend_options.pq = {4, 16, 10, 1};
        service_ = std::make_unique<SearchService>(cfg, embedder_);
        http_ = std::make_unique<HttpService>(*service_);
        port_ = http_->bind();
        thread_ = std::thread([this] { http_->listen(); });
        http_->wait_until_ready();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    }
    void
    TearDown() override {
        http_->stop();
        thread_.join();
    }

    httplib::Result
    post(const std::string& body) {
        return client_->Post("/search", body, "application/json");
    }

    qirat::test::TempDir dir_;
    std::vector<qirat::PassageRecord> passages_;
    std::shared_ptr<qirat::StubEmbedder> embedder_;
    std::unique_ptr<SearchService> service_;
    std::unique_ptr<HttpService> http_;
    std::thread thread_;
    int port_ = 0;
    std::unique_ptr<httplib::Client> client_;
};

TEST_F(ServiceFixture, HealthReportsCountAndDim) {
    auto res = client_->Get("/health");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const auto doc = json::parse(res->body);
    EXPECT_EQ(doc["status"], "ok");
    EXPECT_EQ(doc["count"], 60);
    EXPECT_EQ(doc["dim"], 32);
    EXPECT_EQ(doc["backends"], json({"exact", "sq", "pq", "hnsw"}));
}

TEST_F(ServiceFixture, PassageTextFindsItself) {
    for (std::size_t i : {0u, 17u, 59u}) {
        auto res = post(json{{"query", passages_[i].text}, {"topk", 3}}.dump());
        ASSERT_TRUE(res);
        ASSERT_EQ(res->status, 200) << res->body;
        const auto doc = json::parse(res->body);
        ASSERT_EQ(doc["hits"].size(), 3u);
        EXPECT_EQ(doc["hits"][0]["id"], passages_[i].id);
        EXPECT_EQ(doc["hits"][0]["text"], passages_[i].text);
        EXPECT_NEAR(doc["hits"][0]["score"].get<double>(), 1.0, 1e-5);
        EXPECT_EQ(doc["backend"], "exact");
        EXPECT_EQ(doc["workers"], 3);
        EXPECT_GE(doc["latency_ms"].get<double>(), 0.0);
    }
}

TEST_F(ServiceFixture, EveryBackendAnswers) {
    for (const char* backend : {"exact", "sq", "pq", "hnsw"}) {
        auto res = post(json{{"query", passages_[5].text}, {"topk", 5}, {"backend", backend}}.dump());
        ASSERT_TRUE(res);
        ASSERT_EQ(res->status, 200) << backend << ": " << res->body;
        const auto doc = json::parse(res->body);
        EXPECT_EQ(doc["backend"], backend);
        EXPECT_EQ(doc["hits"].size(), 5u);
    }
    const auto stats = json::parse(client_->Get("/stats")->body);
    for (const char* backend : {"exact", "sq", "pq", "hnsw"}) {
        EXPECT_EQ(stats["backends"][backend]["queries"], 1) << backend;
    }
    EXPECT_EQ(stats["total_queries"], 4);
}

TEST_F(ServiceFixture, VectorQueryMatchesTheOracle) {
    const auto q = qirat::test::gaussian_values(32, 4);
    auto res = post(json{{"query", q}, {"topk", 10}}.dump());
    ASSERT_EQ(res->status, 200);
    const auto doc = json::parse(res->body);
    const auto stored = qirat::load_index(dir_.file("c.emb"));
    const auto want = qirat::test::brute_force_topk(stored.matrix, q, 10);
    ASSERT_EQ(doc["hits"].size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(doc["hits"][i]["id"], stored.ids.at(want[i].row));
        EXPECT_EQ(doc["hits"][i]["score"].get<float>(), want[i].score);
    }
}

TEST_F(ServiceFixture, ClientErrorsAreJson) {
    const std::vector<std::string> bodies{"not json",
                                          "[1, 2]",
                                          R"({"topk": 3})",
                                          R"({"query": 42})",
                                          R"({"query": ""})",
                                          R"({"query": [1, 2, 3]})",
                                          R"({"query": ["a"]})",
                                          R"({"query": "x", "topk": 0})",
                                          R"({"query": "x", "topk": "5"})",
                                          R"({"query": "x", "topk": 100000})",
                                          R"({"query": "x", "backend": "ivf"})",
                                          R"({"query": "x", "backend": 3})"};
    for (const auto& body : bodies) {
        auto res = post(body);
        ASSERT_TRUE(res);
        EXPECT_EQ(res->status, 400) << body;
        const auto doc = json::parse(res->body);
        EXPECT_TRUE(doc.contains("error")) << body;
        EXPECT_EQ(doc["status"], 400);
    }
}

TEST_F(ServiceFixture, UnknownRoutesAreJson) {
    std::vector<httplib::Result> results;
    results.push_back(client_->Get("/nope"));
    results.push_back(client_->Get("/search"));
    results.push_back(client_->Post("/health", "", "text/plain"));
    for (const auto& res : results) {
        ASSERT_TRUE(res);
        EXPECT_GE(res->status, 400);
        const auto doc = json::parse(res->body);
        EXPECT_TRUE(doc.contains("error"));
    }
}

TEST_F(ServiceFixture, StatsCountQueries) {
    for (int i = 0; i < 3; ++i) {
        ASSERT_EQ(post(json{{"query", "mercy"}}.dump())->status, 200);
    }
    ASSERT_EQ(post("garbage")->status, 400);
    const auto doc = json::parse(client_->Get("/stats")->body);
    EXPECT_EQ(doc["backends"]["exact"]["queries"], 3);
    EXPECT_GE(doc["backends"]["exact"]["mean_latency_ms"].get<double>(), 0.0);
    EXPECT_EQ(doc["backends"]["pq"]["queries"], 0);
}

TEST_F(ServiceFixture, ConcurrentRequestsAreDeterministic) {
    const auto want = json::parse(post(json{{"query", "patience honesty"}, {"topk", 8}}.dump())->body)["hits"];
    std::atomic<int> bad{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&] {
            httplib::Client c("127.0.0.1", port_);
            for (int i = 0; i < 10; ++i) {
                auto r = c.Post("/search", json{{"query", "patience honesty"}, {"topk", 8}}.dump(), "application/json");
                if (!r || r->status != 200 || json::parse(r->body)["hits"] != want) {
                    ++bad;
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    EXPECT_EQ(bad.load(), 0);
}

TEST(ServiceStartup, MissingIndexPortInUseAndBadConfig) {
    qirat::test::TempDir dir;
    ServiceConfig cfg;
    cfg.index_path = dir.file("absent.emb");
    EXPECT_THROW(SearchService(cfg, nullptr), qirat::FormatError);

    const auto passages = corpus();
    const qirat::StubEmbedder emb(16);
    qirat::ingest_corpus(passages, emb, dir.file("c.emb"));
    cfg.index_path = dir.file("c.emb");
    cfg.workers = 0;
    EXPECT_THROW(SearchService(cfg, nullptr), qirat::InvalidArgument);
    cfg.workers = 1;
    EXPECT_THROW(SearchService(cfg, std::make_shared<qirat::StubEmbedder>(8)), qirat::InvalidArgument);

    cfg.port = 0;
    SearchService svc(cfg, nullptr);
    HttpService first(svc);
    const int port = first.bind();
    cfg.port = port;
    SearchService svc2(cfg, nullptr);
    HttpService second(svc2);
    EXPECT_THROW(second.bind(), std::runtime_error);
}

TEST(ServiceLarge, TopFiveOnFiftyThousandRowsWithFourWorkers) {
    qirat::test::TempDir dir;
    const auto m = qirat::test::random_unit_matrix(50'000, 384, 2026);
    qirat::write_embeddings(dir.file("big.emb"), m);
    qirat::write_id_map(qirat::ids_path(dir.file("big.emb")), qirat::IdMap(qirat::test::numbered_ids(m.count())));
    ServiceConfig cfg;
    cfg.index_path = dir.file("big.emb");
    cfg.workers = 4;
    cfg.port = 0;
    cfg.backends = {qirat::BackendKind::kExact};
    SearchService svc(cfg, nullptr);
    HttpService http(svc);
    const int port = http.bind();
    std::thread t([&] { http.listen(); });
    http.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto q = qirat::test::gaussian_values(384, 10 + s);
        auto res = client.Post("/search", json{{"query", q}, {"topk", 5}, {"backend", "exact"}}.dump(), "application/json");
        ASSERT_TRUE(res);
        ASSERT_EQ(res->status, 200);
        const auto doc = json::parse(res->body);
        ASSERT_EQ(doc["hits"].size(), 5u);
        ASSERT_TRUE(doc.contains("latency_ms"));
        EXPECT_EQ(doc["workers"], 4);
        const auto want = qirat::test::brute_force_topk(m, q, 5);
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_EQ(doc["hits"][i]["id"], "p" + std::to_string(want[i].row));
            EXPECT_EQ(doc["hits"][i]["score"].get<float>(), want[i].score);
            if (i > 0) {
                EXPECT_LE(doc["hits"][i]["score"].get<float>(), doc["hits"][i - 1]["score"].get<float>());
            }
        }
    }
    http.stop();
    t.join();
}

}  // namespace
