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

// `qirat` command-line front end. run_cli() is the whole program so tests
// can drive it in-process; main() only forwards to it.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <CLI11.hpp>
#include <pthread.h>
#include <signal.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qirat/backends.hpp"
#include "qirat/embed_store.hpp"
#include "qirat/embedder.hpp"
#include "qirat/metrics/bench.hpp"
#include "qirat/metrics/ir_metrics.hpp"
#include "qirat/service/http_service.hpp"
#include "qirat/surgery/bpe.hpp"
#include "qirat/surgery/param_count.hpp"
#include "qirat/surgery/vocab_surgery.hpp"
#include "qirat/synthetic.hpp"
#include "qirat/training/info_nce.hpp"
#include "qirat/training/toy_encoder.hpp"

namespace qirat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// "stub", "file:PATH" (JSON lines of {text, vector}) or "cmd:COMMAND".
inline std::shared_ptr<const Embedder>
make_embedder(const std::string& spec, std::size_t dim, std::uint64_t seed) {
    if (spec == "stub") {
        return std::make_shared<StubEmbedder>(dim, seed);
    }
    if (spec.starts_with("file:")) {
        return std::make_shared<VectorFileEmbedder>(spec.substr(5));
    }
    if (spec.starts_with("cmd:")) {
        return std::make_shared<ProcessEmbedder>(spec.substr(4), dim);
    }
    throw InvalidArgument("unknown embedder \"" + spec + "\" (expected stub, file:PATH or cmd:COMMAND)");
}

inline std::vector<BackendKind>
parse_backend_list(const std::vector<std::string>& names) {
    std::vector<BackendKind> out;
    for (const auto& n : names) {
        out.push_back(parse_backend_kind(n));
    }
    return out;
}

/// Dim recorded in an EMBS header, read without loading the payload.
inline std::size_t
index_dim(const std::string& path) {
    auto in = format::open_input(path);
    return format::read_header(in, kEmbeddingMagic, path).dim;
}

namespace detail {

struct EmbedderFlags {
    std::string spec = "stub";
    std::uint64_t seed = 0x51a7;
    std::size_t dim = 0;  // 0: take the index dim

    void
    add_to(CLI::App* app) {
        app->add_option("--embedder", spec, "stub | file:PATH | cmd:COMMAND")->envname("QIRAT_EMBEDDER");
        app->add_option("--embed-seed", seed, "stub embedder seed")->envname("QIRAT_EMBED_SEED");
        app->add_option("--embed-dim", dim, "embedder output dim (default: index dim)");
    }

    std::shared_ptr<const Embedder>
    make(std::size_t index_dim) const {
        return make_embedder(spec, dim == 0 ? index_dim : dim, seed);
    }
};

inline void
write_text(const std::string& path, const std::string& text) {
    auto out = format::open_output(path);
    out << text;
    format::finish_output(out, path);
}

inline std::vector<std::string>
read_lines(const std::string& path) {
    auto in = format::open_input(path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            out.push_back(line);
        }
    }
    return out;
}

inline std::string
one_line(std::string s, std::size_t max = 80) {
    for (char& c : s) {
        if (c == '\n' || c == '\t' || c == '\r') {
            c = ' ';
        }
    }
    if (s.size() > max) {
        s = s.substr(0, max - 3) + "...";
    }
    return s;
}

}  // namespace detail

/// Runs the CLI. `out` receives results, `err` diagnostics.
inline int
run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"qirat: CPU dense-retrieval engine", "qirat"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "qirat 0.1.0");

    std::function<void()> action;

    // ingest
    auto* ingest = app.add_subcommand("ingest", "embed a passages JSONL file into an EMBS index");
    std::string ingest_passages;
    std::string ingest_out;
    std::size_t ingest_dim = 384;
    bool ingest_fp16 = false;
    detail::EmbedderFlags ingest_emb;
    ingest->add_option("--passages", ingest_passages, "JSON lines {id, text, lang?}")->required();
    ingest->add_option("--out", ingest_out, "output index path")->required();
    ingest->add_option("--dim", ingest_dim, "stub embedder dim")->check(CLI::PositiveNumber);
    ingest->add_flag("--fp16", ingest_fp16, "store rows as fp16");
    ingest_emb.add_to(ingest);
    ingest->callback([&] {
        action = [&] {
            const auto passages = read_passages(ingest_passages);
            const auto emb = ingest_emb.make(ingest_dim);
            const auto stored = ingest_corpus(passages, *emb, ingest_out, ingest_fp16 ? DType::kFloat16 : DType::kFloat32);
            out << "ingested " << stored.matrix.count() << " passages, dim " << stored.matrix.dim() << ", "
                << to_string(stored.matrix.dtype()) << " -> " << ingest_out << '\n';
        };
    });

    // synth
    auto* synth = app.add_subcommand("synth", "write a seeded clustered synthetic index, queries and qrels");
    SyntheticCorpusParams sp;
    std::string synth_out;
    std::string synth_queries;
    std::string synth_qrels;
    std::size_t synth_nq = 100;
    std::size_t synth_k = 100;
    synth->add_option("--out", synth_out, "output index path")->required();
    synth->add_option("--count", sp.count, "rows")->check(CLI::PositiveNumber);
    synth->add_option("--dim", sp.dim, "dimension")->check(CLI::PositiveNumber);
    synth->add_option("--clusters", sp.clusters, "Gaussian clusters")->check(CLI::PositiveNumber);
    synth->add_option("--latent-dim", sp.latent_dim, "per-cluster latent rank");
    synth->add_option("--noise", sp.noise, "isotropic corpus noise");
    synth->add_option("--query-noise", sp.query_noise, "isotropic query noise");
    synth->add_option("--duplicates", sp.duplicate_fraction, "near-duplicate fraction")->check(CLI::Range(0.0, 0.99));
    synth->add_option("--seed", sp.seed, "generator seed");
    synth->add_option("--queries", synth_queries, "write query vectors (JSON lines)");
    synth->add_option("--num-queries", synth_nq, "query count")->check(CLI::PositiveNumber);
    synth->add_option("--qrels", synth_qrels, "write exact top-k qrels (TSV)");
    synth->add_option("--qrels-k", synth_k, "qrels depth")->check(CLI::PositiveNumber);
    synth->callback([&] {
        action = [&] {
            SyntheticCorpus gen(sp);
            auto matrix = gen.corpus();
            std::vector<std::string> ids;
            ids.reserve(matrix.count());
            for (std::size_t i = 0; i < matrix.count(); ++i) {
                ids.push_back("d" + std::to_string(i));
            }
            const IdMap idmap(std::move(ids));
            write_embeddings(synth_out, matrix);
            write_id_map(ids_path(synth_out), idmap);
            out << "wrote " << matrix.count() << "x" << matrix.dim() << " -> " << synth_out << '\n';
            if (synth_queries.empty()) {
                if (!synth_qrels.empty()) {
                    throw InvalidArgument("synth: --qrels needs --queries");
                }
                return;
            }
            std::vector<metrics::QueryRecord> qs;
            metrics::Qrels qrels;
            const auto vectors = gen.queries(synth_nq);
            for (std::size_t i = 0; i < vectors.size(); ++i) {
                metrics::QueryRecord q{"q" + std::to_string(i), std::nullopt, vectors[i]};
                if (!synth_qrels.empty()) {
                    for (const auto& h : full_scan_search(matrix, vectors[i], synth_k).hits) {
                        qrels[q.id].insert(idmap.at(h.row));
                    }
                }
                qs.push_back(std::move(q));
            }
            metrics::write_queries(synth_queries, qs);
            out << "wrote " << qs.size() << " queries -> " << synth_queries << '\n';
            if (!synth_qrels.empty()) {
                metrics::write_qrels(synth_qrels, qrels);
                out << "wrote exact top-" << synth_k << " qrels -> " << synth_qrels << '\n';
            }
        };
    });

    // search
    auto* search = app.add_subcommand("search", "search an index once");
    service::ServiceConfig scfg;
    std::string search_backend = "exact";
    std::string search_query;
    std::string search_vector;
    bool search_json = false;
    detail::EmbedderFlags search_emb;
    search->add_option("--index", scfg.index_path, "EMBS index path")->required()->envname("QIRAT_INDEX");
    auto* q_opt = search->add_option("--query", search_query, "query text");
    auto* v_opt = search->add_option("--vector", search_vector, "query vector as a JSON array");
    q_opt->excludes(v_opt);
    search->add_option("--topk", scfg.default_topk, "hits to return")->check(CLI::Range(1, 1000))->envname("QIRAT_TOPK");
    search->add_option("--workers", scfg.workers, "exact-search workers")->check(CLI::PositiveNumber)->envname("QIRAT_WORKERS");
    search->add_option("--backend", search_backend, "exact | sq | pq | hnsw")
        ->check(CLI::IsMember({"exact", "sq", "pq", "hnsw"}))
        ->envname("QIRAT_BACKEND");
    search->add_flag("--json", search_json, "print the JSON response");
    search_emb.add_to(search);
    search->callback([&] {
        action = [&] {
            if (search_query.empty() && search_vector.empty()) {
                throw InvalidArgument("search: give --query or --vector");
            }
            scfg.backends = {parse_backend_kind(search_backend)};
            scfg.default_backend = parse_backend_kind(search_backend);
            std::shared_ptr<const Embedder> emb;
            if (!search_query.empty()) {
                emb = search_emb.make(index_dim(scfg.index_path));
            }
            service::SearchService svc(scfg, emb);
            nlohmann::json body{{"topk", scfg.default_topk}, {"backend", search_backend}};
            if (!search_query.empty()) {
                body["query"] = search_query;
            } else {
                body["query"] = nlohmann::json::parse(search_vector);
            }
            const auto res = svc.search(body);
            if (search_json) {
                out << res.dump(2) << '\n';
                return;
            }
            out << std::left << std::setw(6) << "rank" << std::setw(12) << "score" << std::setw(16) << "id"
                << "text" << '\n';
            std::size_t rank = 1;
            for (const auto& h : res["hits"]) {
                std::ostringstream score;
                score << std::fixed << std::setprecision(6) << h["score"].get<float>();
                out << std::left << std::setw(6) << rank++ << std::setw(12) << score.str() << std::setw(16)
                    << h["id"].get<std::string>() << detail::one_line(h.value("text", "")) << '\n';
            }
        };
    });

    // serve
    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    service::ServiceConfig vcfg;
    std::vector<std::string> serve_backends{"exact", "sq", "pq", "hnsw"};
    std::string serve_default = "exact";
    detail::EmbedderFlags serve_emb;
    serve->add_option("--index", vcfg.index_path, "EMBS index path")->required()->envname("QIRAT_INDEX");
    serve->add_option("--host", vcfg.host, "bind address")->envname("QIRAT_HOST");
    serve->add_option("--port", vcfg.port, "port, 0 for any free port")->check(CLI::Range(0, 65535))->envname("QIRAT_PORT");
    serve->add_option("--workers", vcfg.workers, "exact-search workers")->check(CLI::PositiveNumber)->envname("QIRAT_WORKERS");
    serve->add_option("--topk", vcfg.default_topk, "default topk")->check(CLI::Range(1, 1000))->envname("QIRAT_TOPK");
    serve->add_option("--backend", serve_default, "default backend")
        ->check(CLI::IsMember({"exact", "sq", "pq", "hnsw"}))
        ->envname("QIRAT_BACKEND");
    serve->add_option("--backends", serve_backends, "enabled backends")
        ->delimiter(',')
        ->check(CLI::IsMember({"exact", "sq", "pq", "hnsw"}))
        ->envname("QIRAT_BACKENDS");
    serve->add_flag("--preload", vcfg.preload, "build every enabled backend at startup");
    serve_emb.add_to(serve);
    serve->callback([&] {
        action = [&] {
            const auto kinds = parse_backend_list(serve_backends);
            vcfg.backends = {kinds.begin(), kinds.end()};
            vcfg.backends.insert(BackendKind::kExact);
            vcfg.default_backend = parse_backend_kind(serve_default);

            // Signals go to a watcher thread; every other thread inherits the mask.
            sigset_t set;
            sigemptyset(&set);
            sigaddset(&set, SIGINT);
            sigaddset(&set, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &set, nullptr);

            service::SearchService svc(vcfg, serve_emb.make(index_dim(vcfg.index_path)));
            service::HttpService http(svc);
            const int port = http.bind();
            out << "listening on http://" << vcfg.host << ':' << port << " (" << svc.matrix().count() << " rows, dim "
                << svc.matrix().dim() << ", " << "workers " << vcfg.workers << ")" << std::endl;
            std::atomic<bool> done{false};
            std::thread watcher([&] {
                const timespec tick{0, 200'000'000};
                while (!done.load()) {
                    if (sigtimedwait(&set, nullptr, &tick) > 0) {
                        http.stop();
                        return;
                    }
                }
            });
            http.listen();
            done = true;
            watcher.join();
            out << "stopped" << std::endl;
        };
    });

    // bench
    auto* benchc = app.add_subcommand("bench", "time backends against a single-context full scan");
    std::string bench_index;
    std::string bench_queries;
    std::string bench_qrels;
    std::string bench_json;
    std::string bench_csv;
    std::vector<std::string> bench_backends{"exact", "sq", "pq", "hnsw"};
    std::vector<std::size_t> bench_workers{1, 2, 4, 6};
    metrics::BenchOptions bopt;
    std::size_t bench_ef = 100;
    detail::EmbedderFlags bench_emb;
    benchc->add_option("--index", bench_index, "EMBS index path")->required()->envname("QIRAT_INDEX");
    benchc->add_option("--queries", bench_queries, "queries JSONL (vector or text)")->required();
    benchc->add_option("--qrels", bench_qrels, "qrels TSV; default: the full scan's top-k");
    benchc->add_option("--runs", bopt.runs, "timed passes per system")->check(CLI::PositiveNumber);
    benchc->add_option("--warmup", bopt.warmup_runs, "untimed passes per system");
    benchc->add_option("--k", bopt.k, "recall depth")->check(CLI::PositiveNumber);
    benchc->add_option("--backends", bench_backends, "systems under test")
        ->delimiter(',')
        ->check(CLI::IsMember({"exact", "sq", "pq", "hnsw"}));
    benchc->add_option("--workers", bench_workers, "worker counts for exact")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    benchc->add_option("--ef-search", bench_ef, "HNSW beam width")->check(CLI::PositiveNumber);
    benchc->add_option("--json", bench_json, "write the report as JSON");
    benchc->add_option("--csv", bench_csv, "write the report as CSV");
    bench_emb.add_to(benchc);
    benchc->callback([&] {
        action = [&] {
            auto stored = load_index(bench_index);
            auto matrix = std::make_shared<const EmbeddingMatrix>(std::move(stored.matrix));
            std::shared_ptr<const Embedder> emb;
            std::vector<metrics::BenchQuery> queries;
            for (auto& q : metrics::read_queries(bench_queries)) {
                if (q.vector) {
                    queries.push_back({q.id, std::move(*q.vector)});
                    continue;
                }
                if (!emb) {
                    emb = bench_emb.make(matrix->dim());
                }
                queries.push_back({q.id, emb->embed(*q.text)});
            }
            std::optional<metrics::Qrels> qrels;
            if (!bench_qrels.empty()) {
                qrels = metrics::read_qrels(bench_qrels);
            }
            BackendOptions bo;
            bo.cache_prefix = bench_index;
            bo.ef_search = bench_ef;
            ScanBackend baseline(matrix);
            std::vector<std::unique_ptr<SearchBackend>> owned;
            for (auto kind : parse_backend_list(bench_backends)) {
                if (kind == BackendKind::kExact) {
                    for (auto w : bench_workers) {
                        bo.workers = w;
                        owned.push_back(make_backend(kind, matrix, bo));
                    }
                } else {
                    owned.push_back(make_backend(kind, matrix, bo));
                }
            }
            std::vector<const SearchBackend*> systems;
            for (const auto& b : owned) {
                systems.push_back(b.get());
            }
            const auto report = metrics::bench(baseline, systems, queries, stored.ids, qrels, bopt);
            out << report.to_table();
            if (!bench_json.empty()) {
                detail::write_text(bench_json, report.to_json().dump(2) + "\n");
                out << "json -> " << bench_json << '\n';
            }
            if (!bench_csv.empty()) {
                detail::write_text(bench_csv, report.to_csv());
                out << "csv -> " << bench_csv << '\n';
            }
        };
    });

    // index build
    auto* index = app.add_subcommand("index", "comparison index files");
    index->require_subcommand(1);
    auto* index_build = index->add_subcommand("build", "build and save an SQ, PQ or HNSW index next to the EMBS file");
    std::string ib_index;
    std::string ib_backend;
    BackendOptions ibo;
    index_build->add_option("--index", ib_index, "EMBS index path")->required()->envname("QIRAT_INDEX");
    index_build->add_option("--backend", ib_backend, "sq | pq | hnsw")->required()->check(CLI::IsMember({"sq", "pq", "hnsw"}));
    index_build->add_option("--pq-m", ibo.pq.m, "PQ subquantizers")->check(CLI::PositiveNumber);
    index_build->add_option("--pq-ks", ibo.pq.ks, "PQ centroids per subquantizer")->check(CLI::Range(1, 256));
    index_build->add_option("--pq-iters", ibo.pq.iters, "PQ k-means iterations");
    index_build->add_option("--hnsw-m", ibo.hnsw.M, "HNSW links per node")->check(CLI::Range(2, 1024));
    index_build->add_option("--ef-construction", ibo.hnsw.ef_construction, "HNSW build beam")->check(CLI::PositiveNumber);
    index_build->callback([&] {
        action = [&] {
            auto matrix = std::make_shared<const EmbeddingMatrix>(read_embeddings(ib_index));
            const auto kind = parse_backend_kind(ib_backend);
            const auto path = index_cache_path(ib_index, kind);
            const auto t0 = std::chrono::steady_clock::now();
            switch (kind) {
                case BackendKind::kSq:
                    ann::SQIndex(*matrix).save(path);
                    break;
                case BackendKind::kPq:
                    ann::PQIndex::build(*matrix, ibo.pq).save(path);
                    break;
                case BackendKind::kHnsw:
                    ann::HNSWIndex::build(matrix, ibo.hnsw).save(path);
                    break;
                case BackendKind::kExact:
                    break;
            }
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            out << "built " << ib_backend << " in " << std::fixed << std::setprecision(2) << s << " s -> " << path
                << '\n';
        };
    });

    // surgery
    auto* surgery = app.add_subcommand("surgery", "vocabulary and embedding-matrix surgery");
    surgery->require_subcommand(1);
    auto* reduce = surgery->add_subcommand("reduce", "keep the rows of tokens shared with a fresh tokenizer");
    std::string rd_orig;
    std::string rd_fresh;
    std::string rd_emb;
    std::string rd_out;
    reduce->add_option("--orig", rd_orig, "original tokenizer JSON")->required();
    reduce->add_option("--fresh", rd_fresh, "target-language tokenizer JSON")->required();
    reduce->add_option("--embeddings", rd_emb, "embedding table (EMBS + .vocab)")->required();
    reduce->add_option("--out", rd_out, "output directory")->required();
    reduce->callback([&] {
        action = [&] {
            const auto orig = surgery::TokenizerModel::load(rd_orig);
            const auto fresh = surgery::TokenizerModel::load(rd_fresh);
            const auto table = surgery::EmbeddingTable::load(rd_emb);
            const auto kept = surgery::intersect_vocab(orig, fresh);
            const auto red = surgery::reduce_embeddings(table, kept);
            std::filesystem::create_directories(rd_out);
            const auto dir = std::filesystem::path(rd_out);
            red.table.save((dir / "embeddings.emb").string());
            surgery::reduce_tokenizer(orig, kept).save((dir / "tokenizer.json").string());
            const auto report = red.report.to_json().dump(2);
            detail::write_text((dir / "report.json").string(), report + "\n");
            out << report << '\n';
        };
    });
    auto* extend = surgery->add_subcommand("extend", "append domain tokens initialized from subtoken means");
    std::string ex_base;
    std::string ex_fresh;
    std::string ex_emb;
    std::string ex_tokens;
    std::string ex_out;
    extend->add_option("--base", ex_base, "tokenizer matching the embedding table")->required();
    extend->add_option("--fresh", ex_fresh, "domain tokenizer JSON")->required();
    extend->add_option("--embeddings", ex_emb, "embedding table (EMBS + .vocab)")->required();
    extend->add_option("--tokens", ex_tokens, "only add these tokens (one per line)");
    extend->add_option("--out", ex_out, "output directory")->required();
    extend->callback([&] {
        action = [&] {
            const auto base = surgery::TokenizerModel::load(ex_base);
            const auto fresh = surgery::TokenizerModel::load(ex_fresh);
            const auto table = surgery::EmbeddingTable::load(ex_emb);
            const auto added =
                ex_tokens.empty() ? surgery::tokens_missing_from(base, fresh) : detail::read_lines(ex_tokens);
            // candidates found automatically may be undecomposable; named ones must not be
            const auto ext = surgery::extend_vocab(table, base, added,
                                                   ex_tokens.empty() ? surgery::UnknownSubtokens::kSkip
                                                                     : surgery::UnknownSubtokens::kReject);
            std::filesystem::create_directories(ex_out);
            const auto dir = std::filesystem::path(ex_out);
            ext.table.save((dir / "embeddings.emb").string());
            const std::vector<std::string> appended(ext.table.tokens().begin() + static_cast<std::ptrdiff_t>(table.vocab_size()),
                                                    ext.table.tokens().end());
            surgery::extend_tokenizer(base, fresh, appended).save((dir / "tokenizer.json").string());
            const auto report = ext.report.to_json().dump(2);
            detail::write_text((dir / "report.json").string(), report + "\n");
            out << report << '\n';
        };
    });
    auto* params = surgery->add_subcommand("params", "parameter count of a BERT-style encoder");
    std::string preset;
    surgery::ModelShape shape{250'000, 768, 12, 3072, 514, 1};
    params->add_option("--preset", preset, "xlmr | mbert | xlmr4 | all")->check(CLI::IsMember({"xlmr", "mbert", "xlmr4", "all"}));
    params->add_option("--vocab", shape.vocab_size, "vocabulary size");
    params->add_option("--hidden", shape.hidden, "hidden size");
    params->add_option("--layers", shape.layers, "transformer layers");
    params->add_option("--ffn", shape.ffn, "feed-forward size");
    params->add_option("--max-positions", shape.max_positions, "position embeddings");
    params->add_option("--type-vocab", shape.type_vocab, "token-type embeddings");
    params->callback([&] {
        action = [&] {
            std::vector<std::pair<std::string, surgery::ModelShape>> rows;
            const surgery::ModelShape xlmr{250'002, 768, 12, 3072, 514, 1};
            const surgery::ModelShape mbert{119'547, 768, 12, 3072, 512, 2};
            const surgery::ModelShape xlmr4{43'000, 768, 12, 3072, 514, 1};
            if (preset == "xlmr" || preset == "all") {
                rows.emplace_back("XLM-R", xlmr);
            }
            if (preset == "mbert" || preset == "all") {
                rows.emplace_back("mBERT", mbert);
            }
            if (preset == "xlmr4" || preset == "all") {
                rows.emplace_back("XLM-R4", xlmr4);
            }
            if (preset.empty()) {
                rows.emplace_back("model", shape);
            }
            out << std::left << std::setw(8) << "model" << std::right << std::setw(10) << "vocab" << std::setw(12)
                << "EM (M)" << std::setw(14) << "encoder (M)" << std::setw(12) << "total (M)" << '\n';
            for (const auto& [name, s] : rows) {
                const auto c = surgery::count_params(s);
                out << std::left << std::setw(8) << name << std::right << std::setw(10) << s.vocab_size << std::fixed
                    << std::setprecision(2) << std::setw(12) << static_cast<double>(c.vocab_embedding) / 1e6
                    << std::setw(14) << static_cast<double>(c.encoder) / 1e6 << std::setw(12)
                    << static_cast<double>(c.total) / 1e6 << '\n';
            }
        };
    });

    // bpe
    auto* bpe = app.add_subcommand("bpe", "byte-pair-encoding tokenizer");
    bpe->require_subcommand(1);
    auto* bpe_train = bpe->add_subcommand("train", "train a tokenizer on a text corpus (one document per line)");
    std::string bt_corpus;
    std::size_t bt_vocab = 8000;
    std::string bt_out;
    bpe_train->add_option("--corpus", bt_corpus, "corpus text file")->required();
    bpe_train->add_option("--vocab-size", bt_vocab, "vocabulary size, special tokens excluded")->check(CLI::PositiveNumber);
    bpe_train->add_option("--out", bt_out, "tokenizer JSON")->required();
    bpe_train->callback([&] {
        action = [&] {
            const auto docs = detail::read_lines(bt_corpus);
            const auto tok = surgery::train_bpe(docs, bt_vocab);
            tok.save(bt_out);
            out << "trained " << tok.merges().size() << " merges, " << tok.vocab_size() << " tokens -> " << bt_out << '\n';
        };
    });
    auto* bpe_encode = bpe->add_subcommand("encode", "print the tokens of a text");
    std::string be_tok;
    std::string be_text;
    bpe_encode->add_option("--tokenizer", be_tok, "tokenizer JSON")->required();
    bpe_encode->add_option("--text", be_text, "text to encode")->required();
    bpe_encode->callback([&] {
        action = [&] {
            const auto tok = surgery::TokenizerModel::load(be_tok);
            bool first = true;
            for (auto id : tok.encode(be_text)) {
                out << (first ? "" : " ") << tok.token(id);
                first = false;
            }
            out << '\n';
        };
    });

    // loss demo
    auto* loss = app.add_subcommand("loss", "contrastive loss utilities");
    loss->require_subcommand(1);
    auto* demo = loss->add_subcommand("demo", "train a toy linear encoder with the in-batch InfoNCE loss");
    training::ToyTrainingConfig tcfg;
    demo->add_option("--epochs", tcfg.epochs, "epochs")->check(CLI::PositiveNumber);
    demo->add_option("--batch", tcfg.batch, "batch size")->check(CLI::Range(2, 4096));
    demo->add_option("--lr", tcfg.learning_rate, "learning rate")->check(CLI::PositiveNumber);
    demo->add_option("--temperature", tcfg.temperature, "softmax temperature")->check(CLI::PositiveNumber);
    demo->add_option("--seed", tcfg.seed, "seed");
    demo->callback([&] {
        action = [&] {
            const auto res = training::train_toy_encoder(tcfg);
            out << "epoch  loss\n";
            for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
                out << std::left << std::setw(7) << e + 1 << std::fixed << std::setprecision(6) << res.epoch_loss[e]
                    << '\n';
            }
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "qirat: " << e.what() << '\n' << "run with --help for usage\n";
        return kExitUsage;
    }
    try {
        action();
    } catch (const std::exception& e) {
        err << "qirat: error: " << detail::one_line(e.what(), 400) << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace qirat::cli
