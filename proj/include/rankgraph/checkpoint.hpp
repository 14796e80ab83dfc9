#pragma once

#include "rankgraph/graph_io.hpp"
#include "rankgraph/model.hpp"
#include "rankgraph/sha256.hpp"

#include <json.hpp>

#include <array>
#include <fstream>
#include <string>

namespace rankgraph {

// 32-byte digest of the finalized schema (types, blocks, relations including
// injected self-loops). Embedding tables, token files and checkpoints all
// carry it so mismatched graph/model pairings are rejected early.
inline std::array<std::uint8_t, 32> schema_fingerprint(const HeteroGraph& g) {
    return Sha256::digest(schema_to_json(schema_of(g)));
}

inline std::string schema_fingerprint_hex(const HeteroGraph& g) {
    return Sha256::hex(schema_fingerprint(g));
}

// Checkpoint container: magic RGC1, u64 header length, JSON header (config,
// fingerprint, tensor manifest in canonical order), then RGT1 tensors.
inline void save_checkpoint(std::ostream& out, const ModelParams& p, const std::string& fp_hex) {
    nlohmann::json h;
    h["config"] = {{"d", p.config.d},
                   {"d_out", p.config.d_out},
                   {"layers", p.config.layers},
                   {"heads", p.config.heads},
                   {"encoder_hidden", p.config.encoder_hidden},
                   {"relation_hidden", p.config.relation_hidden}};
    h["fingerprint"] = fp_hex;
    h["manifest"] = p.names;
    std::string header = h.dump();
    out.write("RGC1", 4);
    detail::write_u64(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const Tensor& t : p.values) write_tensor(out, t);
}

inline void save_checkpoint_file(const std::string& path, const ModelParams& p,
                                 const std::string& fp_hex) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    save_checkpoint(out, p, fp_hex);
}

// Rebuilds the parameter layout from the graph and the stored config, then
// loads tensors by manifest. The graph must fingerprint-match the one the
// checkpoint was trained on.
inline ModelParams load_checkpoint(std::istream& in, const HeteroGraph& g) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RGC1", 4) != 0)
        fail_validation("load_checkpoint: bad magic, expected RGC1");
    std::uint64_t hlen = detail::read_u64(in);
    std::string header(hlen, '\0');
    in.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!in) fail_validation("load_checkpoint: truncated header");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        fail_validation(std::string("load_checkpoint: bad header JSON: ") + e.what());
    }

    std::string fp = h.at("fingerprint").get<std::string>();
    if (fp != schema_fingerprint_hex(g))
        fail_validation("checkpoint schema fingerprint does not match this graph");

    ModelConfig config;
    const auto& jc = h.at("config");
    config.d = jc.at("d").get<std::size_t>();
    config.d_out = jc.at("d_out").get<std::size_t>();
    config.layers = jc.at("layers").get<std::size_t>();
    config.heads = jc.at("heads").get<std::size_t>();
    config.encoder_hidden = jc.at("encoder_hidden").get<std::size_t>();
    config.relation_hidden = jc.at("relation_hidden").get<std::size_t>();

    ModelParams p = init_params(g, config, 0);
    auto manifest = h.at("manifest").get<std::vector<std::string>>();
    if (manifest != p.names)
        fail_validation("checkpoint manifest does not match the parameter layout for this graph");
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        Tensor t = read_tensor(in);
        if (!t.same_shape(p.values[i]))
            fail_validation("checkpoint tensor '" + p.names[i] + "' has shape " + t.shape_str() +
                            ", expected " + p.values[i].shape_str());
        p.values[i] = std::move(t);
    }
    return p;
}

inline ModelParams load_checkpoint_file(const std::string& path, const HeteroGraph& g) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_validation("cannot open checkpoint: " + path);
    return load_checkpoint(in, g);
}

}  // namespace rankgraph
