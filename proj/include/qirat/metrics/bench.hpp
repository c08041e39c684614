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

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qirat/backends.hpp"
#include "qirat/common.hpp"
#include "qirat/embed_store.hpp"
#include "qirat/metrics/ir_metrics.hpp"

namespace qirat::metrics {

struct BenchQuery {
    std::string id;
    std::vector<float> vector;
};

struct BenchOptions {
    std::size_t runs = 10;
    std::size_t k = 100;
    /// Untimed passes over the query list before measuring each system.
    std::size_t warmup_runs = 1;
};

struct BenchRow {
    std::string system;
    std::size_t workers = 1;
    double mean_run_ms = 0.0;    // one pass over all queries, averaged over runs
    double mean_query_ms = 0.0;  // mean_run_ms / number of queries
    double speedup = 1.0;        // baseline time / system time
    double recall = 0.0;         // recall@k against the qrels
    double recall_pct = 100.0;   // recall as a percentage of the baseline's
    bool baseline = false;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::size_t runs = 0;
    std::size_t k = 0;
    std::size_t queries = 0;
    /// True when no qrels were supplied and the baseline's top-k served as them.
    bool qrels_from_baseline = false;

    nlohmann::json
    to_json() const {
        nlohmann::json systems = nlohmann::json::array();
        for (const auto& r : rows) {
            systems.push_back({{"system", r.system},
                               {"workers", r.workers},
                               {"baseline", r.baseline},
                               {"mean_run_ms", r.mean_run_ms},
                               {"mean_query_ms", r.mean_query_ms},
                               {"speedup", r.speedup},
                               {"recall_at_k", r.recall},
                               {"recall_pct_of_baseline", r.recall_pct}});
        }
        return {{"runs", runs},
                {"k", k},
                {"queries", queries},
                {"qrels_from_baseline", qrels_from_baseline},
                {"systems", systems}};
    }

    /// One row per system; speedup and recall_pct are the two plotted series.
    std::string
    to_csv() const {
        std::ostringstream out;
        out << "system,workers,mean_query_ms,speedup,recall_pct\n";
        out << std::setprecision(10);
        for (const auto& r : rows) {
            out << '"' << r.system << "\"," << r.workers << ',' << r.mean_query_ms << ',' << r.speedup << ','
                << r.recall_pct << '\n';
        }
        return out.str();
    }

    std::string
    to_table() const {
        std::size_t width = 6;
        for (const auto& r : rows) {
            width = std::max(width, r.system.size());
        }
        std::ostringstream out;
        out << std::left << std::setw(static_cast<int>(width)) << "SUT" << "  " << std::right << std::setw(12)
            << "ms/query" << std::setw(10) << "Speedup" << std::setw(10) << "Recall" << '\n';
        out << std::string(width + 34, '-') << '\n';
        for (const auto& r : rows) {
            char speed[32];
            char recall[32];
            char ms[32];
            std::snprintf(ms, sizeof(ms), "%.3f", r.mean_query_ms);
            std::snprintf(speed, sizeof(speed), "%.2fx", r.speedup);
            std::snprintf(recall, sizeof(recall), "%.1f%%", r.recall_pct);
            out << std::left << std::setw(static_cast<int>(width)) << r.system << "  " << std::right << std::setw(12)
                << ms << std::setw(10) << speed << std::setw(10) << recall << '\n';
        }
        return out.str();
    }
};

namespace detail {

inline std::vector<std::string>
to_ids(const SearchResult& res, const IdMap& ids) {
    std::vector<std::string> out;
    out.reserve(res.hits.size());
    for (const auto& h : res.hits) {
        out.push_back(ids.at(h.row));
    }
    return out;
}

}  // namespace detail

/// Times each system over `queries` issued one at a time in list order and
/// compares recall@k with the baseline. Per system: `warmup_runs` untimed
/// passes, then `runs` timed passes; the reported time is the mean pass.
/// Speedup is baseline time / system time. Without qrels, the baseline's own
/// top-k ids are the relevant set, so recall_pct is overlap with the baseline.
inline BenchReport
bench(const SearchBackend& baseline, std::span<const SearchBackend* const> systems, std::span<const BenchQuery> queries,
      const IdMap& ids, std::optional<Qrels> qrels, const BenchOptions& opt = {}) {
    if (queries.empty()) {
        throw InvalidArgument("bench: no queries");
    }
    if (opt.runs == 0 || opt.k == 0) {
        throw InvalidArgument("bench: runs and k must be >= 1");
    }
    using Clock = std::chrono::steady_clock;

    auto measure = [&](const SearchBackend& sys, RunRanking& ranking) {
        for (std::size_t w = 0; w < opt.warmup_runs; ++w) {
            for (const auto& q : queries) {
                (void)sys.search(q.vector, opt.k);
            }
        }
        double total_ms = 0.0;
        for (std::size_t run = 0; run < opt.runs; ++run) {
            const auto t0 = Clock::now();
            for (const auto& q : queries) {
                auto res = sys.search(q.vector, opt.k);
                if (run == 0) {
                    ranking[q.id] = detail::to_ids(res, ids);
                }
            }
            total_ms += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        }
        return total_ms / static_cast<double>(opt.runs);
    };

    BenchReport report;
    report.runs = opt.runs;
    report.k = opt.k;
    report.queries = queries.size();

    RunRanking base_run;
    const double base_ms = measure(baseline, base_run);
    if (!qrels) {
        Qrels derived;
        for (const auto& [qid, ranking] : base_run) {
            derived[qid].insert(ranking.begin(), ranking.end());
        }
        qrels = std::move(derived);
        report.qrels_from_baseline = true;
    }
    const double base_recall = recall_at_k(base_run, *qrels, opt.k);
    if (base_recall == 0.0) {
        throw InvalidArgument("bench: baseline recall is zero, relative recall undefined");
    }
    const double nq = static_cast<double>(queries.size());
    report.rows.push_back({baseline.name(), baseline.workers(), base_ms, base_ms / nq, 1.0, base_recall, 100.0, true});

    for (const auto* sys : systems) {
        RunRanking run;
        const double ms = measure(*sys, run);
        BenchRow row;
        row.system = sys->name();
        row.workers = sys->workers();
        row.mean_run_ms = ms;
        row.mean_query_ms = ms / nq;
        row.speedup = ms > 0.0 ? base_ms / ms : 0.0;
        row.recall = recall_at_k(run, *qrels, opt.k);
        row.recall_pct = relative_recall(run, base_run, *qrels, opt.k);
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace qirat::metrics
