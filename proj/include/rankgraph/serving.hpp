#pragma once

#include "rankgraph/checkpoint.hpp"
#include "rankgraph/features.hpp"
#include "rankgraph/graph.hpp"
#include "rankgraph/model.hpp"
#include "rankgraph/rng.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace rankgraph {

// Final per-node embeddings for one (node type, head): N x d_out unit rows in
// local-id order, plus the external-id map and the schema fingerprint of the
// graph they came from. Immutable after construction/load.
struct EmbeddingTable {
    std::string type_name;
    std::uint8_t head = 0;
    Tensor rows;
    std::vector<std::string> ids;  // external id per local id
    std::array<std::uint8_t, 32> fingerprint{};

    std::unordered_map<std::string, std::uint32_t> index;

    void build_index() {
        index.clear();
        for (std::uint32_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;
    }

    std::int64_t lookup(const std::string& ext) const {
        auto it = index.find(ext);
        return it == index.end() ? -1 : static_cast<std::int64_t>(it->second);
    }
};

// Full forward pass over every node of the type; deterministic.
inline EmbeddingTable export_embeddings(const HeteroGraph& g, const FeatureStore& store,
                                        const ModelParams& params, int type_id,
                                        std::size_t head) {
    if (head >= params.config.heads) fail_validation("export_embeddings: head out of range");
    store.require_complete(g);
    Tape t;
    std::vector<int> pn = register_params(t, params);
    ForwardOutput fo = forward_all(t, g, store, params, pn);
    EmbeddingTable table;
    table.type_name = g.node_types()[static_cast<std::size_t>(type_id)].name;
    table.head = static_cast<std::uint8_t>(head);
    table.rows = t.value(fo.emb[head][static_cast<std::size_t>(type_id)]);
    const IdDictionary& dict = g.dictionary(type_id);
    for (std::uint32_t i = 0; i < dict.size(); ++i) table.ids.push_back(dict.external(i));
    table.fingerprint = schema_fingerprint(g);
    table.build_index();
    return table;
}

// Exact top-k by cosine, query excluded, ties broken by ascending node id,
// scores descending. Result length is min(k, N-1).
inline std::vector<std::pair<std::uint32_t, double>> knn(const EmbeddingTable& table,
                                                         std::uint32_t query, std::size_t k) {
    std::size_t n = table.rows.rows();
    if (query >= n) fail_validation("knn: unknown node id " + std::to_string(query));
    if (k == 0) fail_validation("knn: k must be >= 1");
    // better(a,b): ranking order is score descending, id ascending. The heap
    // top is then the worst kept candidate, the entry to beat.
    auto better = [](const std::pair<double, std::uint32_t>& a,
                     const std::pair<double, std::uint32_t>& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::priority_queue<std::pair<double, std::uint32_t>,
                        std::vector<std::pair<double, std::uint32_t>>, decltype(better)>
        heap(better);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (i == query) continue;
        double s = dot_rows(table.rows, query, table.rows, i);
        if (heap.size() < k) {
            heap.push({s, i});
        } else if (s > heap.top().first ||
                   (s == heap.top().first && i < heap.top().second)) {
            heap.pop();
            heap.push({s, i});
        }
    }
    std::vector<std::pair<std::uint32_t, double>> out(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
        out[i] = {heap.top().second, heap.top().first};
        heap.pop();
    }
    return out;
}

// --- spherical k-means --------------------------------------------------------

struct ClusterModel {
    Tensor centroids;                       // K x d, unit rows
    std::vector<std::uint32_t> assignment;  // node -> cluster
    double inertia = 0.0;                   // sum of 1 - cos(x, centroid)
    std::vector<double> inertia_trace;      // after each assignment pass
};

// k-means++ seeding, assignment by max cosine, centroid = normalized mean.
// Stops on stable assignments or max_iters; inertia is checked non-increasing
// every iteration.
inline ClusterModel cluster(const EmbeddingTable& table, std::size_t k, std::size_t max_iters,
                            std::uint64_t seed) {
    std::size_t n = table.rows.rows();
    std::size_t d = table.rows.cols();
    if (k == 0) fail_validation("cluster: K must be >= 1");
    if (k > n) fail_validation("cluster: K exceeds node count");

    Rng rng(seed, "cluster/seeding");
    std::vector<std::uint32_t> centers;
    std::vector<char> chosen(n, 0);
    centers.push_back(static_cast<std::uint32_t>(rng.below(n)));
    chosen[centers[0]] = 1;
    std::vector<double> dist(n, 0.0);
    while (centers.size() < k) {
        double total = 0.0;
        for (std::uint32_t i = 0; i < n; ++i) {
            if (chosen[i]) {
                dist[i] = 0.0;
                continue;
            }
            double best = -1.0;
            for (std::uint32_t c : centers)
                best = std::max(best, dot_rows(table.rows, i, table.rows, c));
            dist[i] = std::max(0.0, 1.0 - best);
            total += dist[i];
        }
        std::uint32_t pick = 0;
        if (total <= 0.0) {
            // All remaining points coincide with a center; take the lowest
            // unchosen index.
            while (chosen[pick]) ++pick;
        } else {
            double x = rng.uniform() * total;
            double acc = 0.0;
            std::uint32_t last_unchosen = 0;
            for (std::uint32_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                last_unchosen = i;
                acc += dist[i];
                if (acc > x) {
                    pick = i;
                    break;
                }
                pick = last_unchosen;
            }
        }
        chosen[pick] = 1;
        centers.push_back(pick);
    }

    ClusterModel model;
    model.centroids = Tensor(k, d);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < d; ++j) model.centroids.at(c, j) = table.rows.at(centers[c], j);
    model.assignment.assign(n, 0);

    double prev_inertia = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iters, 1); ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (std::uint32_t i = 0; i < n; ++i) {
            double best = -2.0;
            std::uint32_t best_c = 0;
            for (std::uint32_t c = 0; c < k; ++c) {
                double s = dot_rows(table.rows, i, model.centroids, c);
                if (s > best) {
                    best = s;
                    best_c = c;
                }
            }
            if (model.assignment[i] != best_c) {
                model.assignment[i] = best_c;
                changed = true;
            }
            inertia += std::max(0.0, 1.0 - best);
        }
        model.inertia = inertia;
        model.inertia_trace.push_back(inertia);
        if (inertia > prev_inertia + 1e-9)
            throw std::runtime_error("cluster: inertia increased between iterations");
        prev_inertia = inertia;
        if (!changed && iter > 0) break;

        // Centroid update: normalized mean; empty or cancelled clusters keep
        // their previous centroid.
        Tensor sums(k, d);
        std::vector<std::size_t> counts(k, 0);
        for (std::uint32_t i = 0; i < n; ++i) {
            std::uint32_t c = model.assignment[i];
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) sums.at(c, j) += table.rows.at(i, j);
        }
        for (std::uint32_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            double norm = row_norm(sums, c);
            if (norm < 1e-12) continue;
            for (std::size_t j = 0; j < d; ++j) model.centroids.at(c, j) = sums.at(c, j) / norm;
        }
    }
    return model;
}

// --- homogeneous subgraph projection --------------------------------------------

// Same co-engagement rule as derive_semantic_edges, over the forward edges
// when endpoint_type is the relation's source, over the reversed edges when
// it is the destination (e.g. user-user via shared items, item-item via
// shared users).
inline std::vector<EdgeRecord> project_subgraph(const HeteroGraph& g, int endpoint_type,
                                                int via_relation, std::size_t top_k,
                                                double min_weight) {
    const RelationSchema& rel = g.relation(via_relation);
    std::vector<EdgeRecord> edges;
    if (endpoint_type == rel.src_type) {
        edges = g.edges(via_relation);
    } else if (endpoint_type == rel.dst_type) {
        for (const EdgeRecord& e : g.edges(via_relation)) edges.push_back({e.dst, e.src, e.weight});
    } else {
        fail_validation("project_subgraph: endpoint type is not part of relation '" + rel.name +
                        "'");
    }
    return co_occurrence_project(edges, g.node_count(endpoint_type), top_k, min_weight);
}

// Projection emitted in the ingestion TSV format (round-trippable).
inline void write_projection(std::ostream& out, const HeteroGraph& g, int endpoint_type,
                             const std::string& relation_name,
                             const std::vector<EdgeRecord>& edges) {
    const IdDictionary& dict = g.dictionary(endpoint_type);
    std::ostringstream os;
    os.precision(17);
    for (const EdgeRecord& e : edges)
        os << relation_name << '\t' << dict.external(e.src) << '\t' << dict.external(e.dst) << '\t'
           << e.weight << '\n';
    out << os.str();
}

// --- table and token files -------------------------------------------------------

// RGE1: magic, u32 N, u32 d_out, u8 head, 32-byte fingerprint, N*d f64 rows.
inline void save_table(std::ostream& out, const EmbeddingTable& t) {
    out.write("RGE1", 4);
    detail::write_u32(out, static_cast<std::uint32_t>(t.rows.rows()));
    detail::write_u32(out, static_cast<std::uint32_t>(t.rows.cols()));
    out.put(static_cast<char>(t.head));
    out.write(reinterpret_cast<const char*>(t.fingerprint.data()), 32);
    for (double x : t.rows.values()) detail::write_f64(out, x);
}

// Companion id map in the shared dictionary TSV format.
inline void save_table_ids(std::ostream& out, const EmbeddingTable& t) {
    for (std::uint32_t i = 0; i < t.ids.size(); ++i)
        out << t.type_name << '\t' << t.ids[i] << '\t' << i << '\n';
}

inline void save_table_files(const std::string& path, const EmbeddingTable& t) {
    std::ofstream bin(path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write table: " + path);
    save_table(bin, t);
    std::ofstream ids(path + ".ids.tsv");
    if (!ids) throw std::runtime_error("cannot write id map: " + path + ".ids.tsv");
    save_table_ids(ids, t);
}

inline EmbeddingTable load_table_files(const std::string& path) {
    std::ifstream bin(path, std::ios::binary);
    if (!bin) fail_validation("cannot open table: " + path);
    char magic[4];
    bin.read(magic, 4);
    if (!bin || std::memcmp(magic, "RGE1", 4) != 0)
        fail_validation("load_table: bad magic, expected RGE1");
    std::uint32_t n = detail::read_u32(bin);
    std::uint32_t d = detail::read_u32(bin);
    EmbeddingTable t;
    int head = bin.get();
    if (head < 0) fail_validation("load_table: truncated header");
    t.head = static_cast<std::uint8_t>(head);
    bin.read(reinterpret_cast<char*>(t.fingerprint.data()), 32);
    if (!bin) fail_validation("load_table: truncated fingerprint");
    std::vector<double> values(static_cast<std::size_t>(n) * d);
    for (double& x : values) x = detail::read_f64(bin);
    t.rows = Tensor(n, d, std::move(values));

    std::ifstream ids(path + ".ids.tsv");
    if (!ids) fail_validation("cannot open id map: " + path + ".ids.tsv");
    std::string line;
    while (std::getline(ids, line)) {
        if (line.empty()) continue;
        auto tab1 = line.find('\t');
        auto tab2 = line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos)
            fail_validation("id map: malformed line");
        t.type_name = line.substr(0, tab1);
        t.ids.push_back(line.substr(tab1 + 1, tab2 - tab1 - 1));
    }
    if (t.ids.size() != n) fail_validation("id map row count does not match table");
    t.build_index();
    return t;
}

// RGK1 graph-token file: magic, u32 N, u32 d_out, u8 head, 32-byte
// fingerprint, then per node a u64 external-id hash and the embedding row.
// Export only; no downstream consumer lives in this repository.
inline void export_graph_tokens(std::ostream& out, const EmbeddingTable& t) {
    out.write("RGK1", 4);
    detail::write_u32(out, static_cast<std::uint32_t>(t.rows.rows()));
    detail::write_u32(out, static_cast<std::uint32_t>(t.rows.cols()));
    out.put(static_cast<char>(t.head));
    out.write(reinterpret_cast<const char*>(t.fingerprint.data()), 32);
    for (std::uint32_t i = 0; i < t.rows.rows(); ++i) {
        detail::write_u64(out, fnv1a64(t.ids[i]));
        for (std::size_t j = 0; j < t.rows.cols(); ++j) detail::write_f64(out, t.rows.at(i, j));
    }
}

struct GraphTokens {
    std::uint8_t head = 0;
    std::vector<std::uint64_t> id_hashes;
    Tensor rows;
};

// Rejects token files whose fingerprint does not match the expected schema.
inline GraphTokens read_graph_tokens(std::istream& in,
                                     const std::array<std::uint8_t, 32>& expected_fingerprint) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RGK1", 4) != 0)
        fail_validation("read_graph_tokens: bad magic, expected RGK1");
    std::uint32_t n = detail::read_u32(in);
    std::uint32_t d = detail::read_u32(in);
    GraphTokens t;
    int head = in.get();
    if (head < 0) fail_validation("read_graph_tokens: truncated header");
    t.head = static_cast<std::uint8_t>(head);
    std::array<std::uint8_t, 32> fp{};
    in.read(reinterpret_cast<char*>(fp.data()), 32);
    if (!in) fail_validation("read_graph_tokens: truncated fingerprint");
    if (fp != expected_fingerprint)
        fail_validation("graph tokens: schema fingerprint mismatch, refusing to import");
    std::vector<double> values(static_cast<std::size_t>(n) * d);
    t.id_hashes.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        t.id_hashes[i] = detail::read_u64(in);
        for (std::uint32_t j = 0; j < d; ++j) values[static_cast<std::size_t>(i) * d + j] = detail::read_f64(in);
    }
    t.rows = Tensor(n, d, std::move(values));
    return t;
}

}  // namespace rankgraph
