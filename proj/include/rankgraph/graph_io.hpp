#pragma once

#include "rankgraph/graph.hpp"
#include "rankgraph/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace rankgraph {

// Declared node types and relations, prior to finalization.
struct GraphSchema {
    std::vector<NodeTypeSchema> types;
    std::vector<RelationSchema> relations;

    int type_id_of(const std::string& name) const {
        for (const auto& t : types)
            if (t.name == name) return t.type_id;
        fail_validation("schema: unknown node type '" + name + "'");
    }
};

// Schema file: JSON with node_types (name, blocks) and relations
// (name, src, dst, kind).
inline GraphSchema parse_schema_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail_validation(std::string("schema: invalid JSON: ") + e.what());
    }
    GraphSchema s;
    if (!j.contains("node_types") || !j["node_types"].is_array() || j["node_types"].empty())
        fail_validation("schema: node_types must be a non-empty array");
    for (const auto& jt : j["node_types"]) {
        NodeTypeSchema t;
        t.type_id = static_cast<int>(s.types.size());
        t.name = jt.at("name").get<std::string>();
        for (const auto& d : jt.at("blocks")) {
            auto dim = d.get<std::int64_t>();
            if (dim < 1) fail_validation("schema: block dims must be >= 1");
            t.block_dims.push_back(static_cast<std::size_t>(dim));
        }
        s.types.push_back(std::move(t));
    }
    for (const auto& jr : j.value("relations", nlohmann::json::array())) {
        RelationSchema r;
        r.relation_id = static_cast<int>(s.relations.size());
        r.name = jr.at("name").get<std::string>();
        r.src_type = s.type_id_of(jr.at("src").get<std::string>());
        r.dst_type = s.type_id_of(jr.at("dst").get<std::string>());
        r.kind = relation_kind_from(jr.value("kind", std::string("engagement")));
        s.relations.push_back(std::move(r));
    }
    return s;
}

inline GraphSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_validation("cannot open schema file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_schema_json(ss.str());
}

inline std::string schema_to_json(const GraphSchema& s) {
    nlohmann::json j;
    j["node_types"] = nlohmann::json::array();
    for (const auto& t : s.types) {
        nlohmann::json jt;
        jt["name"] = t.name;
        jt["blocks"] = t.block_dims;
        j["node_types"].push_back(jt);
    }
    j["relations"] = nlohmann::json::array();
    for (const auto& r : s.relations) {
        nlohmann::json jr;
        jr["name"] = r.name;
        jr["src"] = s.types[static_cast<std::size_t>(r.src_type)].name;
        jr["dst"] = s.types[static_cast<std::size_t>(r.dst_type)].name;
        jr["kind"] = to_string(r.kind);
        j["relations"].push_back(jr);
    }
    return j.dump(2) + "\n";
}

// Edge file: UTF-8 TSV, `relation<TAB>src_ext<TAB>dst_ext<TAB>weight`,
// lines starting with '#' ignored. Builds and finalizes a graph.
inline HeteroGraph ingest_edges(std::istream& in, const GraphSchema& schema) {
    std::vector<IdDictionary> dicts(schema.types.size());
    std::vector<std::vector<EdgeRecord>> edges(schema.relations.size());
    std::unordered_map<std::string, int> rel_by_name;
    for (const auto& r : schema.relations) rel_by_name[r.name] = r.relation_id;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::string cols[4];
        std::size_t start = 0, field = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                if (field < 4) cols[field] = line.substr(start, i - start);
                ++field;
                start = i + 1;
            }
        }
        if (field != 4)
            fail_validation("edge file line " + std::to_string(line_no) + ": expected 4 fields, got " +
                            std::to_string(field));
        auto rit = rel_by_name.find(cols[0]);
        if (rit == rel_by_name.end())
            fail_validation("edge file line " + std::to_string(line_no) + ": unknown relation '" +
                            cols[0] + "'");
        const RelationSchema& rel = schema.relations[static_cast<std::size_t>(rit->second)];
        double w;
        try {
            std::size_t used = 0;
            w = std::stod(cols[3], &used);
            if (used != cols[3].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            fail_validation("edge file line " + std::to_string(line_no) + ": bad weight '" +
                            cols[3] + "'");
        }
        if (w < 0.0)
            fail_validation("edge file line " + std::to_string(line_no) + ": negative weight");
        EdgeRecord e;
        e.src = dicts[static_cast<std::size_t>(rel.src_type)].get_or_create(cols[1]);
        e.dst = dicts[static_cast<std::size_t>(rel.dst_type)].get_or_create(cols[2]);
        e.weight = w;
        edges[static_cast<std::size_t>(rit->second)].push_back(e);
    }
    return finalize_graph(schema.types, schema.relations, std::move(dicts), std::move(edges));
}

inline HeteroGraph ingest_edges_file(const std::string& path, const GraphSchema& schema) {
    std::ifstream in(path);
    if (!in) fail_validation("cannot open edge file: " + path);
    return ingest_edges(in, schema);
}

// Id dictionary TSV: `type_name<TAB>external_id<TAB>local_id`.
inline void write_id_dictionary(std::ostream& out, const HeteroGraph& g) {
    for (const auto& t : g.node_types()) {
        const IdDictionary& d = g.dictionary(t.type_id);
        for (std::uint32_t i = 0; i < d.size(); ++i)
            out << t.name << '\t' << d.external(i) << '\t' << i << '\n';
    }
}

// --- graph binary: magic RGG1 ----------------------------------------------

namespace detail {

inline void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    std::uint32_t n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw std::runtime_error("read_string: truncated input");
    return s;
}

}  // namespace detail

inline void save_graph(std::ostream& out, const HeteroGraph& g) {
    out.write("RGG1", 4);
    detail::write_u32(out, static_cast<std::uint32_t>(g.node_types().size()));
    for (const auto& t : g.node_types()) {
        detail::write_string(out, t.name);
        detail::write_u32(out, static_cast<std::uint32_t>(t.block_dims.size()));
        for (std::size_t d : t.block_dims) detail::write_u32(out, static_cast<std::uint32_t>(d));
        const IdDictionary& dict = g.dictionary(t.type_id);
        detail::write_u32(out, static_cast<std::uint32_t>(dict.size()));
        for (std::uint32_t i = 0; i < dict.size(); ++i) detail::write_string(out, dict.external(i));
    }
    // Self-loop relations are reconstructed at load; persist the rest.
    std::uint32_t n_rel = 0;
    for (const auto& r : g.relations())
        if (r.kind != RelationKind::self_loop) ++n_rel;
    detail::write_u32(out, n_rel);
    for (const auto& r : g.relations()) {
        if (r.kind == RelationKind::self_loop) continue;
        detail::write_string(out, r.name);
        detail::write_u32(out, static_cast<std::uint32_t>(r.src_type));
        detail::write_u32(out, static_cast<std::uint32_t>(r.dst_type));
        detail::write_u32(out, r.kind == RelationKind::engagement ? 0u : 1u);
        const auto& es = g.edges(r.relation_id);
        detail::write_u64(out, es.size());
        for (const EdgeRecord& e : es) {
            detail::write_u32(out, e.src);
            detail::write_u32(out, e.dst);
            detail::write_f64(out, e.weight);
        }
    }
}

inline HeteroGraph load_graph(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RGG1", 4) != 0)
        fail_validation("load_graph: bad magic, expected RGG1");
    std::uint32_t n_types = detail::read_u32(in);
    std::vector<NodeTypeSchema> types;
    std::vector<IdDictionary> dicts(n_types);
    for (std::uint32_t t = 0; t < n_types; ++t) {
        NodeTypeSchema nt;
        nt.type_id = static_cast<int>(t);
        nt.name = detail::read_string(in);
        std::uint32_t n_blocks = detail::read_u32(in);
        for (std::uint32_t b = 0; b < n_blocks; ++b) nt.block_dims.push_back(detail::read_u32(in));
        std::uint32_t n_nodes = detail::read_u32(in);
        for (std::uint32_t i = 0; i < n_nodes; ++i)
            dicts[t].get_or_create(detail::read_string(in));
        types.push_back(std::move(nt));
    }
    std::uint32_t n_rel = detail::read_u32(in);
    std::vector<RelationSchema> relations;
    std::vector<std::vector<EdgeRecord>> edges;
    for (std::uint32_t r = 0; r < n_rel; ++r) {
        RelationSchema rs;
        rs.relation_id = static_cast<int>(r);
        rs.name = detail::read_string(in);
        rs.src_type = static_cast<int>(detail::read_u32(in));
        rs.dst_type = static_cast<int>(detail::read_u32(in));
        rs.kind = detail::read_u32(in) == 0 ? RelationKind::engagement : RelationKind::semantic;
        std::uint64_t n_edges = detail::read_u64(in);
        std::vector<EdgeRecord> es(n_edges);
        for (auto& e : es) {
            e.src = detail::read_u32(in);
            e.dst = detail::read_u32(in);
            e.weight = detail::read_f64(in);
        }
        relations.push_back(std::move(rs));
        edges.push_back(std::move(es));
    }
    return finalize_graph(std::move(types), std::move(relations), std::move(dicts),
                          std::move(edges));
}

inline void save_graph_file(const std::string& path, const HeteroGraph& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write graph file: " + path);
    save_graph(out, g);
}

inline HeteroGraph load_graph_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_validation("cannot open graph file: " + path);
    return load_graph(in);
}

// Finalized schema of a graph, for fingerprinting and checkpoint validation.
inline GraphSchema schema_of(const HeteroGraph& g) {
    GraphSchema s;
    s.types = g.node_types();
    s.relations = g.relations();
    return s;
}

}  // namespace rankgraph
