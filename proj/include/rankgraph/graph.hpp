#pragma once

#include "rankgraph/error.hpp"
#include "rankgraph/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace rankgraph {

enum class RelationKind { engagement, semantic, self_loop };

inline const char* to_string(RelationKind k) {
    switch (k) {
        case RelationKind::engagement: return "engagement";
        case RelationKind::semantic: return "semantic";
        case RelationKind::self_loop: return "self_loop";
    }
    return "?";
}

inline RelationKind relation_kind_from(const std::string& s) {
    if (s == "engagement") return RelationKind::engagement;
    if (s == "semantic") return RelationKind::semantic;
    if (s == "self_loop") return RelationKind::self_loop;
    fail_validation("unknown relation kind '" + s + "'");
}

struct NodeTypeSchema {
    int type_id = -1;
    std::string name;
    std::vector<std::size_t> block_dims;  // one entry per feature block

    std::size_t n_features() const { return block_dims.size(); }
};

struct RelationSchema {
    int relation_id = -1;
    std::string name;
    int src_type = -1;
    int dst_type = -1;
    RelationKind kind = RelationKind::engagement;
};

struct EdgeRecord {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    double weight = 0.0;
};

// External string ids mapped to dense per-type local ids in first-seen order.
class IdDictionary {
public:
    std::uint32_t get_or_create(const std::string& ext) {
        auto it = to_local_.find(ext);
        if (it != to_local_.end()) return it->second;
        auto id = static_cast<std::uint32_t>(to_ext_.size());
        to_ext_.push_back(ext);
        to_local_.emplace(ext, id);
        return id;
    }

    // -1 when absent.
    std::int64_t lookup(const std::string& ext) const {
        auto it = to_local_.find(ext);
        return it == to_local_.end() ? -1 : static_cast<std::int64_t>(it->second);
    }

    const std::string& external(std::uint32_t local) const { return to_ext_[local]; }
    std::size_t size() const { return to_ext_.size(); }

private:
    std::vector<std::string> to_ext_;
    std::unordered_map<std::string, std::uint32_t> to_local_;
};

struct NodeRef {
    int type_id = -1;
    std::uint32_t local_id = 0;
};

// Training positive pairs for one relation, sampled by edge weight.
struct EdgeBatch {
    int relation_id = -1;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    std::vector<double> weights;
};

class HeteroGraph;
HeteroGraph finalize_graph(std::vector<NodeTypeSchema> types, std::vector<RelationSchema> relations,
                           std::vector<IdDictionary> dicts, std::vector<std::vector<EdgeRecord>> edges);

// Finalized heterogeneous graph: canonical edge order, duplicates merged,
// one self-loop relation injected per node type. Immutable; all reads are
// safe to call concurrently.
class HeteroGraph {
public:
    const std::vector<NodeTypeSchema>& node_types() const { return types_; }
    const std::vector<RelationSchema>& relations() const { return relations_; }
    std::size_t node_count(int type_id) const { return dicts_[check_type(type_id)].size(); }
    const IdDictionary& dictionary(int type_id) const { return dicts_[check_type(type_id)]; }

    int type_id_of(const std::string& name) const {
        for (const auto& t : types_)
            if (t.name == name) return t.type_id;
        fail_validation("unknown node type '" + name + "'");
    }

    int relation_id_of(const std::string& name) const {
        for (const auto& r : relations_)
            if (r.name == name) return r.relation_id;
        fail_validation("unknown relation '" + name + "'");
    }

    const RelationSchema& relation(int relation_id) const {
        if (relation_id < 0 || relation_id >= static_cast<int>(relations_.size()))
            fail_validation("relation id out of range");
        return relations_[static_cast<std::size_t>(relation_id)];
    }

    // Edges of one relation in canonical (src, dst) ascending order.
    const std::vector<EdgeRecord>& edges(int relation_id) const {
        relation(relation_id);
        return edges_[static_cast<std::size_t>(relation_id)];
    }

    std::size_t total_edges() const {
        std::size_t n = 0;
        for (const auto& e : edges_) n += e.size();
        return n;
    }

    // Out-neighbors of node under relation, ascending neighbor id.
    std::vector<std::pair<std::uint32_t, double>> neighbors(NodeRef node, int relation_id) const {
        const RelationSchema& rel = relation(relation_id);
        if (node.type_id != rel.src_type)
            fail_validation("neighbors: node type " + types_[check_type(node.type_id)].name +
                            " does not match relation '" + rel.name + "' source type");
        if (node.local_id >= node_count(node.type_id))
            fail_validation("neighbors: node id out of range");
        const auto& offs = out_offsets_[static_cast<std::size_t>(relation_id)];
        const auto& es = edges_[static_cast<std::size_t>(relation_id)];
        std::vector<std::pair<std::uint32_t, double>> out;
        for (std::size_t k = offs[node.local_id]; k < offs[node.local_id + 1]; ++k)
            out.emplace_back(es[k].dst, es[k].weight);
        return out;
    }

    // In-neighbor weighted degree per destination node (message-passing norm).
    std::vector<double> in_weight_sums(int relation_id) const {
        const RelationSchema& rel = relation(relation_id);
        std::vector<double> sums(node_count(rel.dst_type), 0.0);
        for (const EdgeRecord& e : edges(relation_id)) sums[e.dst] += e.weight;
        return sums;
    }

    // True if src -> dst exists under the relation.
    bool has_edge(int relation_id, std::uint32_t src, std::uint32_t dst) const {
        const auto& offs = out_offsets_[static_cast<std::size_t>(relation_id)];
        if (src + 1 >= offs.size()) return false;
        const auto& es = edges_[static_cast<std::size_t>(relation_id)];
        auto lo = es.begin() + static_cast<std::ptrdiff_t>(offs[src]);
        auto hi = es.begin() + static_cast<std::ptrdiff_t>(offs[src + 1]);
        auto it = std::lower_bound(lo, hi, dst, [](const EdgeRecord& e, std::uint32_t d) {
            return e.dst < d;
        });
        return it != hi && it->dst == dst;
    }

    // One weighted-sample batch per listed relation; reproducible per rng.
    std::vector<EdgeBatch> sample_edge_batch(const std::vector<int>& relation_ids,
                                             std::size_t batch_size, Rng& rng) const {
        if (batch_size == 0) fail_validation("sample_edge_batch: batch_size must be positive");
        std::vector<EdgeBatch> out;
        for (int rid : relation_ids) {
            const auto& es = edges(rid);
            if (es.empty())
                fail_validation("sample_edge_batch: relation '" + relation(rid).name +
                                "' has no edges");
            const auto& cum = edge_weight_cumsum_[static_cast<std::size_t>(rid)];
            if (cum.back() <= 0.0)
                fail_validation("sample_edge_batch: relation '" + relation(rid).name +
                                "' has zero total weight");
            EdgeBatch batch;
            batch.relation_id = rid;
            batch.pairs.reserve(batch_size);
            batch.weights.reserve(batch_size);
            for (std::size_t i = 0; i < batch_size; ++i) {
                const EdgeRecord& e = es[rng.weighted(cum)];
                batch.pairs.emplace_back(e.src, e.dst);
                batch.weights.push_back(e.weight);
            }
            out.push_back(std::move(batch));
        }
        return out;
    }

private:
    friend HeteroGraph finalize_graph(std::vector<NodeTypeSchema>, std::vector<RelationSchema>,
                                      std::vector<IdDictionary>, std::vector<std::vector<EdgeRecord>>);

    std::size_t check_type(int type_id) const {
        if (type_id < 0 || type_id >= static_cast<int>(types_.size()))
            fail_validation("node type id out of range");
        return static_cast<std::size_t>(type_id);
    }

    std::vector<NodeTypeSchema> types_;
    std::vector<RelationSchema> relations_;
    std::vector<IdDictionary> dicts_;
    std::vector<std::vector<EdgeRecord>> edges_;         // per relation, canonical order
    std::vector<std::vector<std::size_t>> out_offsets_;  // per relation CSR by src
    std::vector<std::vector<double>> edge_weight_cumsum_;
};

namespace detail {

inline void sort_and_merge(std::vector<EdgeRecord>& es) {
    std::sort(es.begin(), es.end(), [](const EdgeRecord& a, const EdgeRecord& b) {
        return a.src != b.src ? a.src < b.src : a.dst < b.dst;
    });
    std::size_t w = 0;
    for (std::size_t i = 0; i < es.size(); ++i) {
        if (w > 0 && es[w - 1].src == es[i].src && es[w - 1].dst == es[i].dst) {
            es[w - 1].weight += es[i].weight;  // duplicates merge by weight summation
        } else {
            es[w++] = es[i];
        }
    }
    es.resize(w);
}

}  // namespace detail

// Canonicalizes edges, injects one self-loop relation per node type (weight
// 1.0, degree exactly 1) and builds the CSR/sampling indexes.
inline HeteroGraph finalize_graph(std::vector<NodeTypeSchema> types,
                                  std::vector<RelationSchema> relations,
                                  std::vector<IdDictionary> dicts,
                                  std::vector<std::vector<EdgeRecord>> edges) {
    // Schema sanity.
    for (std::size_t i = 0; i < types.size(); ++i) {
        if (types[i].type_id != static_cast<int>(i)) fail_validation("node type ids must be dense");
        if (types[i].block_dims.empty())
            fail_validation("node type '" + types[i].name + "' declares no feature blocks");
        for (std::size_t d : types[i].block_dims)
            if (d == 0) fail_validation("node type '" + types[i].name + "' has a zero-dim block");
        for (std::size_t j = 0; j < i; ++j)
            if (types[j].name == types[i].name)
                fail_validation("duplicate node type name '" + types[i].name + "'");
    }
    for (std::size_t i = 0; i < relations.size(); ++i) {
        const auto& r = relations[i];
        if (r.relation_id != static_cast<int>(i)) fail_validation("relation ids must be dense");
        if (r.src_type < 0 || r.src_type >= static_cast<int>(types.size()) || r.dst_type < 0 ||
            r.dst_type >= static_cast<int>(types.size()))
            fail_validation("relation '" + r.name + "' references an unknown node type");
        if (r.kind == RelationKind::self_loop)
            fail_validation("self_loop relations are injected at finalization, not declared");
        for (std::size_t j = 0; j < i; ++j)
            if (relations[j].name == r.name)
                fail_validation("duplicate relation name '" + r.name + "'");
    }
    if (dicts.size() != types.size() || edges.size() != relations.size())
        fail_validation("finalize_graph: dictionary/edge list counts do not match schema");

    for (std::size_t rid = 0; rid < relations.size(); ++rid) {
        const auto& r = relations[rid];
        for (const EdgeRecord& e : edges[rid]) {
            if (e.weight < 0.0) fail_validation("relation '" + r.name + "': negative edge weight");
            if (e.src >= dicts[static_cast<std::size_t>(r.src_type)].size() ||
                e.dst >= dicts[static_cast<std::size_t>(r.dst_type)].size())
                fail_validation("relation '" + r.name + "': edge endpoint out of range");
        }
        detail::sort_and_merge(edges[rid]);
    }

    // Self-loop relation per node type, after all declared relations.
    for (std::size_t t = 0; t < types.size(); ++t) {
        RelationSchema self;
        self.relation_id = static_cast<int>(relations.size());
        self.name = "__self__" + types[t].name;
        self.src_type = self.dst_type = static_cast<int>(t);
        self.kind = RelationKind::self_loop;
        std::vector<EdgeRecord> loop(dicts[t].size());
        for (std::uint32_t i = 0; i < dicts[t].size(); ++i) loop[i] = {i, i, 1.0};
        relations.push_back(self);
        edges.push_back(std::move(loop));
    }

    HeteroGraph g;
    g.types_ = std::move(types);
    g.relations_ = std::move(relations);
    g.dicts_ = std::move(dicts);
    g.edges_ = std::move(edges);

    g.out_offsets_.resize(g.relations_.size());
    g.edge_weight_cumsum_.resize(g.relations_.size());
    for (std::size_t rid = 0; rid < g.relations_.size(); ++rid) {
        const auto& r = g.relations_[rid];
        std::size_t n_src = g.dicts_[static_cast<std::size_t>(r.src_type)].size();
        auto& offs = g.out_offsets_[rid];
        offs.assign(n_src + 1, 0);
        for (const EdgeRecord& e : g.edges_[rid]) ++offs[e.src + 1];
        for (std::size_t i = 0; i < n_src; ++i) offs[i + 1] += offs[i];
        auto& cum = g.edge_weight_cumsum_[rid];
        cum.resize(g.edges_[rid].size());
        double acc = 0.0;
        for (std::size_t k = 0; k < cum.size(); ++k) {
            acc += g.edges_[rid][k].weight;
            cum[k] = acc;
        }
    }
    return g;
}

// --- weighted co-occurrence projection ------------------------------------

// Shared-neighbor projection: for same-type endpoints u, v connected to a
// common destination m, w(u,v) = sum_m w(u,m) * w(v,m). Per node, only the
// top_k strongest partners with weight >= min_weight survive; the surviving
// directed pairs are symmetrized. Used both to derive semantic relations and
// to emit item-item / user-user subgraphs.
inline std::vector<EdgeRecord> co_occurrence_project(const std::vector<EdgeRecord>& edges,
                                                     std::size_t n_src, std::size_t top_k,
                                                     double min_weight) {
    if (top_k == 0) fail_validation("co_occurrence_project: top_k must be >= 1");
    // Bucket edges by shared destination.
    std::map<std::uint32_t, std::vector<std::pair<std::uint32_t, double>>> by_dst;
    for (const EdgeRecord& e : edges) by_dst[e.dst].emplace_back(e.src, e.weight);

    std::map<std::pair<std::uint32_t, std::uint32_t>, double> pair_weight;
    for (auto& [m, incident] : by_dst) {
        for (std::size_t a = 0; a < incident.size(); ++a)
            for (std::size_t b = a + 1; b < incident.size(); ++b) {
                auto [u, wu] = incident[a];
                auto [v, wv] = incident[b];
                if (u == v) continue;
                auto key = u < v ? std::make_pair(u, v) : std::make_pair(v, u);
                pair_weight[key] += wu * wv;
            }
    }

    std::vector<std::vector<std::pair<std::uint32_t, double>>> partners(n_src);
    for (const auto& [key, w] : pair_weight) {
        if (w < min_weight) continue;
        partners[key.first].emplace_back(key.second, w);
        partners[key.second].emplace_back(key.first, w);
    }

    std::map<std::pair<std::uint32_t, std::uint32_t>, double> selected;
    for (std::uint32_t u = 0; u < n_src; ++u) {
        auto& list = partners[u];
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        if (list.size() > top_k) list.resize(top_k);
        for (const auto& [v, w] : list) {
            selected[{u, v}] = w;
            selected[{v, u}] = w;  // symmetric edge set
        }
    }

    std::vector<EdgeRecord> out;
    out.reserve(selected.size());
    for (const auto& [key, w] : selected) out.push_back({key.first, key.second, w});
    return out;
}

// Adds a semantic relation over the via-relation's source type. Returns a new
// finalized graph; the input is left untouched.
inline HeteroGraph derive_semantic_edges(const HeteroGraph& g, int via_relation,
                                         const std::string& new_relation_name, std::size_t top_k,
                                         double min_weight) {
    const RelationSchema& via = g.relation(via_relation);
    if (top_k == 0) fail_validation("derive_semantic_edges: top_k must be >= 1");
    for (const auto& r : g.relations())
        if (r.name == new_relation_name)
            fail_validation("derive_semantic_edges: relation '" + new_relation_name +
                            "' already exists");

    std::vector<EdgeRecord> projected = co_occurrence_project(
        g.edges(via_relation), g.node_count(via.src_type), top_k, min_weight);

    std::vector<NodeTypeSchema> types = g.node_types();
    std::vector<IdDictionary> dicts;
    for (const auto& t : types) dicts.push_back(g.dictionary(t.type_id));
    std::vector<RelationSchema> relations;
    std::vector<std::vector<EdgeRecord>> edges;
    for (const auto& r : g.relations()) {
        if (r.kind == RelationKind::self_loop) continue;  // re-injected by finalize
        relations.push_back(r);
        edges.push_back(g.edges(r.relation_id));
    }
    RelationSchema sem;
    sem.relation_id = static_cast<int>(relations.size());
    sem.name = new_relation_name;
    sem.src_type = sem.dst_type = via.src_type;
    sem.kind = RelationKind::semantic;
    relations.push_back(sem);
    edges.push_back(std::move(projected));
    return finalize_graph(std::move(types), std::move(relations), std::move(dicts),
                          std::move(edges));
}

}  // namespace rankgraph
