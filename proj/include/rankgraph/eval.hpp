#pragma once

#include "rankgraph/graph.hpp"
#include "rankgraph/rng.hpp"
#include "rankgraph/serving.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace rankgraph {

// --- interaction log ----------------------------------------------------------

struct InteractionRecord {
    std::int64_t hour = 0;
    std::string user;
    std::string item;
    std::string kind;  // interaction type, e.g. click/like/share
    double weight = 0.0;
};

struct InteractionLog {
    std::vector<InteractionRecord> records;  // canonically sorted

    void canonicalize() {
        std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
            if (a.hour != b.hour) return a.hour < b.hour;
            if (a.user != b.user) return a.user < b.user;
            if (a.item != b.item) return a.item < b.item;
            return a.kind < b.kind;
        });
    }
};

// TSV: `hour<TAB>user<TAB>item<TAB>type<TAB>weight`, '#' comments.
inline InteractionLog load_interaction_log(std::istream& in) {
    InteractionLog log;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::string cols[5];
        std::size_t start = 0, field = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                if (field < 5) cols[field] = line.substr(start, i - start);
                ++field;
                start = i + 1;
            }
        }
        if (field != 5)
            fail_validation("interaction log line " + std::to_string(line_no) +
                            ": expected 5 fields");
        InteractionRecord r;
        try {
            r.hour = std::stoll(cols[0]);
            r.weight = std::stod(cols[4]);
        } catch (const std::exception&) {
            fail_validation("interaction log line " + std::to_string(line_no) + ": bad number");
        }
        if (r.weight <= 0.0)
            fail_validation("interaction log line " + std::to_string(line_no) +
                            ": weight must be positive");
        r.user = cols[1];
        r.item = cols[2];
        r.kind = cols[3];
        log.records.push_back(std::move(r));
    }
    log.canonicalize();
    return log;
}

inline InteractionLog load_interaction_log_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_validation("cannot open interaction log: " + path);
    return load_interaction_log(in);
}

// --- recall reports -------------------------------------------------------------

struct RecallReport {
    std::vector<std::size_t> k_values;
    std::vector<double> recall_at_k;
    std::size_t sampled = 0;           // edges (edge recall) or users (engagement recall)
    std::size_t candidates = 0;        // ranking pool size M (edge recall only)
    std::size_t excluded = 0;          // users with no ground truth in the horizon
    std::size_t skipped_triggers = 0;  // trigger items absent from the table
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["k"] = k_values;
        j["recall"] = recall_at_k;
        j["sampled"] = sampled;
        j["candidates"] = candidates;
        j["excluded"] = excluded;
        j["skipped_triggers"] = skipped_triggers;
        j["seed"] = seed;
        return j;
    }
};

// Expected recall@k when embeddings carry no signal and each node has one
// ground-truth partner among M candidates.
inline double random_baseline_recall(std::size_t candidates, std::size_t k) {
    if (candidates < 2) fail_validation("random_baseline_recall: needs at least 2 candidates");
    if (k < 1) fail_validation("random_baseline_recall: k must be >= 1");
    if (k >= candidates) return 1.0;
    return static_cast<double>(k) / static_cast<double>(candidates - 1);
}

// --- next-period edge recall (protocol 1) ----------------------------------------

struct EdgeRecallConfig {
    std::size_t sample_size = 1000;
    std::vector<std::size_t> k_values{5, 10, 50, 100};
    std::uint64_t seed = 0;
    std::vector<std::string> relations;  // empty = every engagement relation
};

// Sample edges from the next-period graph, pool their endpoints, rank every
// candidate against every other by cosine, and score each node's ground-truth
// partners (its sampled-edge neighbors) against its top k.
inline RecallReport eval_edge_recall(const std::vector<const EmbeddingTable*>& tables,
                                     const HeteroGraph& next_period, const EdgeRecallConfig& cfg) {
    if (cfg.sample_size == 0) fail_validation("edge recall: sample_size must be >= 1");
    for (std::size_t k : cfg.k_values)
        if (k == 0) fail_validation("edge recall: k values must be >= 1");

    std::unordered_map<std::string, const EmbeddingTable*> table_by_type;
    for (const EmbeddingTable* t : tables) {
        if (!t) continue;
        table_by_type[t->type_name] = t;
    }

    std::vector<int> rel_ids;
    if (cfg.relations.empty()) {
        for (const auto& r : next_period.relations())
            if (r.kind == RelationKind::engagement) rel_ids.push_back(r.relation_id);
    } else {
        for (const auto& n : cfg.relations) rel_ids.push_back(next_period.relation_id_of(n));
    }

    // (type name, external id) pairs per edge.
    using Node = std::pair<std::string, std::string>;
    std::vector<std::pair<Node, Node>> all_edges;
    for (int rid : rel_ids) {
        const RelationSchema& rel = next_period.relation(rid);
        const std::string& sname = next_period.node_types()[static_cast<std::size_t>(rel.src_type)].name;
        const std::string& dname = next_period.node_types()[static_cast<std::size_t>(rel.dst_type)].name;
        const IdDictionary& sd = next_period.dictionary(rel.src_type);
        const IdDictionary& dd = next_period.dictionary(rel.dst_type);
        for (const EdgeRecord& e : next_period.edges(rid))
            all_edges.push_back({{sname, sd.external(e.src)}, {dname, dd.external(e.dst)}});
    }
    if (all_edges.empty()) fail_validation("edge recall: next-period graph has no eligible edges");

    Rng rng(cfg.seed, "eval/edge-recall");
    std::vector<std::pair<Node, Node>> sampled;
    if (all_edges.size() <= cfg.sample_size) {
        sampled = all_edges;
    } else {
        for (std::size_t pick : rng.sample_without_replacement(all_edges.size(), cfg.sample_size))
            sampled.push_back(all_edges[pick]);
    }

    std::set<Node> candidate_set;
    for (const auto& [a, b] : sampled) {
        candidate_set.insert(a);
        candidate_set.insert(b);
    }
    std::vector<Node> candidates(candidate_set.begin(), candidate_set.end());
    std::size_t m = candidates.size();

    // Embedding row per candidate; errors name the missing node.
    std::size_t dim = 0;
    std::vector<const double*> rows(m);
    std::map<Node, std::size_t> candidate_index;
    for (std::size_t i = 0; i < m; ++i) {
        candidate_index[candidates[i]] = i;
        auto it = table_by_type.find(candidates[i].first);
        if (it == table_by_type.end())
            fail_validation("edge recall: no embedding table for node type '" +
                            candidates[i].first + "'");
        std::int64_t local = it->second->lookup(candidates[i].second);
        if (local < 0)
            fail_validation("edge recall: node '" + candidates[i].second +
                            "' (type '" + candidates[i].first + "') missing from embedding table");
        if (dim == 0) dim = it->second->rows.cols();
        if (it->second->rows.cols() != dim)
            fail_validation("edge recall: embedding tables disagree on dimension");
        rows[i] = it->second->rows.row_ptr(static_cast<std::size_t>(local));
    }

    // Ground truth is undirected over the sampled edges.
    std::vector<std::set<std::size_t>> partners(m);
    for (const auto& [a, b] : sampled) {
        std::size_t ia = candidate_index[a], ib = candidate_index[b];
        if (ia == ib) continue;
        partners[ia].insert(ib);
        partners[ib].insert(ia);
    }

    std::vector<double> recall_sum(cfg.k_values.size(), 0.0);
    std::size_t evaluated = 0;
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < m; ++i) {
        if (partners[i].empty()) continue;
        scored.clear();
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            double s = 0.0;
            for (std::size_t x = 0; x < dim; ++x) s += rows[i][x] * rows[j][x];
            scored.push_back({s, j});
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t ki = 0; ki < cfg.k_values.size(); ++ki) {
            std::size_t k = std::min(cfg.k_values[ki], scored.size());
            std::size_t hits = 0;
            for (std::size_t r = 0; r < k; ++r)
                if (partners[i].count(scored[r].second)) ++hits;
            recall_sum[ki] += static_cast<double>(hits) / static_cast<double>(partners[i].size());
        }
        ++evaluated;
    }

    RecallReport report;
    report.k_values = cfg.k_values;
    report.sampled = sampled.size();
    report.candidates = m;
    report.seed = cfg.seed;
    for (double s : recall_sum)
        report.recall_at_k.push_back(evaluated ? s / static_cast<double>(evaluated) : 0.0);
    return report;
}

// --- engagement recall (protocol 2) ----------------------------------------------

struct EngagementRecallConfig {
    std::int64_t eval_hour = 168;       // t
    std::int64_t trigger_window = 168;  // hours, triggers from [t-window, t]
    std::size_t neighbors_per_trigger = 20;
    std::int64_t horizon = 4;           // ground truth from (t, t+horizon]
    std::vector<std::size_t> k_values{100, 200, 500};
    std::map<std::string, double> type_weights;  // per interaction type, default 1.0
};

// Per user: trigger items from the window weighted by interaction type,
// predictions from each trigger's nearest neighbors scored
// trigger_weight * cosine (dedup by max), recall of the horizon's distinct
// items in the top k. Mean over users with ground truth.
inline RecallReport eval_engagement_recall(const EmbeddingTable& items, const InteractionLog& log,
                                           const EngagementRecallConfig& cfg) {
    if (cfg.neighbors_per_trigger == 0)
        fail_validation("engagement recall: neighbor count must be >= 1");
    if (cfg.horizon < 1) fail_validation("engagement recall: horizon must start after t");
    for (std::size_t k : cfg.k_values)
        if (k == 0) fail_validation("engagement recall: k values must be >= 1");

    auto type_weight = [&](const std::string& kind) {
        auto it = cfg.type_weights.find(kind);
        return it == cfg.type_weights.end() ? 1.0 : it->second;
    };

    std::map<std::string, std::map<std::string, double>> triggers;    // user -> item -> weight
    std::map<std::string, std::set<std::string>> ground_truth;        // user -> items
    for (const InteractionRecord& r : log.records) {
        if (r.hour >= cfg.eval_hour - cfg.trigger_window && r.hour <= cfg.eval_hour)
            triggers[r.user][r.item] += r.weight * type_weight(r.kind);
        if (r.hour > cfg.eval_hour && r.hour <= cfg.eval_hour + cfg.horizon)
            ground_truth[r.user].insert(r.item);
    }
    if (ground_truth.empty())
        fail_validation("engagement recall: no users with ground truth in the horizon");

    RecallReport report;
    report.k_values = cfg.k_values;

    // Neighbor lists per distinct trigger item, computed once.
    std::unordered_map<std::uint32_t, std::vector<std::pair<std::uint32_t, double>>> knn_cache;
    auto neighbors_of = [&](std::uint32_t local) -> const std::vector<std::pair<std::uint32_t, double>>& {
        auto it = knn_cache.find(local);
        if (it == knn_cache.end())
            it = knn_cache.emplace(local, knn(items, local, cfg.neighbors_per_trigger)).first;
        return it->second;
    };

    std::vector<double> recall_sum(cfg.k_values.size(), 0.0);
    std::size_t evaluated = 0;
    for (const auto& [user, gt] : ground_truth) {
        // Predictions: union over triggers of scored neighbor items.
        std::map<std::string, double> scores;
        auto tit = triggers.find(user);
        if (tit != triggers.end()) {
            for (const auto& [item, tw] : tit->second) {
                std::int64_t local = items.lookup(item);
                if (local < 0) {
                    ++report.skipped_triggers;
                    continue;
                }
                for (const auto& [nbr, cos] : neighbors_of(static_cast<std::uint32_t>(local))) {
                    double s = tw * cos;
                    auto [sit, fresh] = scores.emplace(items.ids[nbr], s);
                    if (!fresh && s > sit->second) sit->second = s;
                }
            }
        }
        std::vector<std::pair<double, std::string>> ranked;
        ranked.reserve(scores.size());
        for (const auto& [item, s] : scores) ranked.push_back({s, item});
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t ki = 0; ki < cfg.k_values.size(); ++ki) {
            std::size_t k = std::min(cfg.k_values[ki], ranked.size());
            std::size_t hits = 0;
            for (std::size_t r = 0; r < k; ++r)
                if (gt.count(ranked[r].second)) ++hits;
            recall_sum[ki] += static_cast<double>(hits) / static_cast<double>(gt.size());
        }
        ++evaluated;
    }

    report.sampled = evaluated;
    for (const auto& [user, tw] : triggers)
        if (!ground_truth.count(user)) ++report.excluded;
    for (double s : recall_sum)
        report.recall_at_k.push_back(evaluated ? s / static_cast<double>(evaluated) : 0.0);
    return report;
}

// Unit-row table with the same shape and ids, seeded Gaussian rows; the
// no-signal reference point for both protocols.
inline EmbeddingTable random_table_like(const EmbeddingTable& table, std::uint64_t seed) {
    EmbeddingTable out = table;
    Rng rng(seed, "eval/random-table");
    for (std::size_t i = 0; i < out.rows.rows(); ++i) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < out.rows.cols(); ++j) {
            out.rows.at(i, j) = rng.normal();
            norm2 += out.rows.at(i, j) * out.rows.at(i, j);
        }
        double norm = std::sqrt(norm2);
        if (norm < 1e-12) {
            out.rows.at(i, 0) = 1.0;
            for (std::size_t j = 1; j < out.rows.cols(); ++j) out.rows.at(i, j) = 0.0;
        } else {
            for (std::size_t j = 0; j < out.rows.cols(); ++j) out.rows.at(i, j) /= norm;
        }
    }
    return out;
}

}  // namespace rankgraph
