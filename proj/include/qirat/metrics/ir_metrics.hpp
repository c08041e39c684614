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
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "qirat/common.hpp"

namespace qirat::metrics {

/// query id -> relevant passage ids
using Qrels = std::map<std::string, std::set<std::string>>;
/// query id -> retrieved passage ids, best first
using RunRanking = std::map<std::string, std::vector<std::string>>;

namespace detail {

inline void
check_inputs(const RunRanking& run, const Qrels& qrels, const char* metric) {
    if (run.empty()) {
        throw InvalidArgument(std::string(metric) + ": run has no queries");
    }
    std::string missing;
    for (const auto& [qid, ranking] : run) {
        if (!qrels.contains(qid)) {
            missing += (missing.empty() ? "" : ", ") + qid;
        }
    }
    if (!missing.empty()) {
        throw InvalidArgument(std::string(metric) + ": queries without judgments: " + missing);
    }
    for (const auto& [qid, rel] : qrels) {
        if (rel.empty()) {
            throw InvalidArgument(std::string(metric) + ": query " + qid + " has an empty relevance set");
        }
    }
    for (const auto& [qid, ranking] : run) {
        std::unordered_set<std::string> seen;
        for (const auto& pid : ranking) {
            if (!seen.insert(pid).second) {
                throw InvalidArgument(std::string(metric) + ": passage " + pid + " listed twice for query " + qid);
            }
        }
    }
}

}  // namespace detail

/// Mean over run queries of |relevant in top k| / |relevant|.
inline double
recall_at_k(const RunRanking& run, const Qrels& qrels, std::size_t k) {
    detail::check_inputs(run, qrels, "recall_at_k");
    double sum = 0.0;
    for (const auto& [qid, ranking] : run) {
        const auto& rel = qrels.at(qid);
        std::size_t hits = 0;
        const std::size_t depth = std::min(k, ranking.size());
        for (std::size_t i = 0; i < depth; ++i) {
            hits += rel.contains(ranking[i]) ? 1 : 0;
        }
        sum += static_cast<double>(hits) / static_cast<double>(rel.size());
    }
    return sum / static_cast<double>(run.size());
}

/// Mean over run queries of 1 / rank of the first relevant passage in the
/// top k (0 when there is none).
inline double
mrr_at_k(const RunRanking& run, const Qrels& qrels, std::size_t k = 10) {
    detail::check_inputs(run, qrels, "mrr_at_k");
    double sum = 0.0;
    for (const auto& [qid, ranking] : run) {
        const auto& rel = qrels.at(qid);
        const std::size_t depth = std::min(k, ranking.size());
        for (std::size_t i = 0; i < depth; ++i) {
            if (rel.contains(ranking[i])) {
                sum += 1.0 / static_cast<double>(i + 1);
                break;
            }
        }
    }
    return sum / static_cast<double>(run.size());
}

/// 100 * recall(sut) / recall(baseline) over the same query set.
inline double
relative_recall(const RunRanking& sut, const RunRanking& baseline, const Qrels& qrels, std::size_t k) {
    if (sut.size() != baseline.size() ||
        !std::equal(sut.begin(), sut.end(), baseline.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; })) {
        throw InvalidArgument("relative_recall: runs cover different query sets");
    }
    const double base = recall_at_k(baseline, qrels, k);
    if (base == 0.0) {
        throw InvalidArgument("relative_recall: baseline recall is zero");
    }
    return 100.0 * recall_at_k(sut, qrels, k) / base;
}

/// Reads "query_id<TAB>passage_id" lines. Four-column TREC lines
/// ("qid 0 pid rel") are accepted too; rel <= 0 is ignored.
inline Qrels
read_qrels(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(FormatErrorKind::kIo, path + ": cannot open for reading");
    }
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream fields(line);
        std::vector<std::string> cols;
        for (std::string f; fields >> f;) {
            cols.push_back(f);
        }
        if (cols.empty()) {
            continue;
        }
        if (cols.size() == 2) {
            qrels[cols[0]].insert(cols[1]);
        } else if (cols.size() == 4) {
            if (std::stod(cols[3]) > 0) {
                qrels[cols[0]].insert(cols[2]);
            }
        } else {
            throw FormatError(FormatErrorKind::kCorrupt, path + ":" + std::to_string(lineno) +
                                                             ": expected 2 or 4 columns");
        }
    }
    return qrels;
}

inline void
write_qrels(const std::string& path, const Qrels& qrels) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError(FormatErrorKind::kIo, path + ": cannot open for writing");
    }
    for (const auto& [qid, rel] : qrels) {
        for (const auto& pid : rel) {
            out << qid << '\t' << pid << '\n';
        }
    }
}

struct QueryRecord {
    std::string id;
    std::optional<std::string> text;
    std::optional<std::vector<float>> vector;
};

/// JSON-lines queries: {"id": ..., "text": ...} and/or {"vector": [...]}.
inline std::vector<QueryRecord>
read_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(FormatErrorKind::kIo, path + ": cannot open for reading");
    }
    std::vector<QueryRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto doc = nlohmann::json::parse(line);
            QueryRecord q;
            q.id = doc.at("id").is_string() ? doc.at("id").get<std::string>() : doc.at("id").dump();
            if (doc.contains("text")) {
                q.text = doc.at("text").get<std::string>();
            }
            if (doc.contains("vector")) {
                q.vector = doc.at("vector").get<std::vector<float>>();
            }
            if (!q.text && !q.vector) {
                throw InvalidArgument("query has neither text nor vector");
            }
            out.push_back(std::move(q));
        } catch (const std::exception& e) {
            throw FormatError(FormatErrorKind::kCorrupt, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void
write_queries(const std::string& path, const std::vector<QueryRecord>& queries) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError(FormatErrorKind::kIo, path + ": cannot open for writing");
    }
    for (const auto& q : queries) {
        nlohmann::json doc = {{"id", q.id}};
        if (q.text) {
            doc["text"] = *q.text;
        }
        if (q.vector) {
            doc["vector"] = *q.vector;
        }
        out << doc.dump() << '\n';
    }
}

}  // namespace qirat::metrics
