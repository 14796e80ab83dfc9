#pragma once

#include "rankgraph/features.hpp"
#include "rankgraph/graph.hpp"
#include "rankgraph/rng.hpp"
#include "rankgraph/tape.hpp"
#include "rankgraph/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace rankgraph {

struct ModelConfig {
    std::size_t d = 32;            // shared hidden width
    std::size_t d_out = 32;        // head output width
    std::size_t layers = 2;        // message-passing depth L
    std::size_t heads = 2;         // output heads H
    std::size_t encoder_hidden = 32;   // 0 = plain affine feature encoders
    std::size_t relation_hidden = 0;   // 0 = plain affine f_r

    void validate() const {
        if (d == 0 || d_out == 0 || layers == 0 || heads == 0)
            fail_validation("model config: d, d_out, layers, heads must all be >= 1");
    }
};

// Indices into ModelParams::values.
struct MlpRef {
    int w1 = -1, b1 = -1;  // hidden layer, absent when hidden width is 0
    int w2 = -1, b2 = -1;  // output layer
    bool has_hidden() const { return w1 >= 0; }
};

struct AffineRef {
    int w = -1, b = -1;
};

struct EncoderRef {
    std::vector<MlpRef> blocks;  // f_{t,j}, one per feature block
    AffineRef mixer;             // M_t over concat + pairwise products
};

struct RelationRef {
    int weight = -1;  // W_r
    MlpRef post;      // f_r
};

struct LayerRef {
    std::vector<RelationRef> rel;       // indexed by relation id (unused slots stay -1)
    std::vector<AffineRef> mixer;       // per destination type M_t^{(l)}
};

// All learnable weights in one flat canonical-order vector, with index
// structures per module. The flat layout keeps Adam moments, gradients and
// checkpoint manifests trivially aligned.
struct ModelParams {
    ModelConfig config;
    std::vector<Tensor> values;
    std::vector<std::string> names;
    std::vector<EncoderRef> encoders;  // by node type
    std::vector<LayerRef> layer_refs;  // by layer
    std::vector<AffineRef> heads;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Tensor& t : values) n += t.size();
        return n;
    }
};

// Relations aggregated into type t, ascending relation id (self-loops come
// last since finalize_graph appends them).
inline std::vector<int> incoming_relations(const HeteroGraph& g, int type_id) {
    std::vector<int> out;
    for (const auto& r : g.relations())
        if (r.dst_type == type_id) out.push_back(r.relation_id);
    return out;
}

inline std::size_t mix_input_width(std::size_t k, std::size_t d) {
    return k * d + (k * (k - 1) / 2) * d;
}

namespace detail {

inline int push_param(ModelParams& p, const std::string& name, std::size_t rows, std::size_t cols,
                      Rng& rng, bool zero) {
    Tensor t(rows, cols);
    if (!zero) {
        double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-s, s);
    }
    p.values.push_back(std::move(t));
    p.names.push_back(name);
    return static_cast<int>(p.values.size()) - 1;
}

inline MlpRef push_mlp(ModelParams& p, const std::string& prefix, std::size_t in, std::size_t hidden,
                       std::size_t out, Rng& rng) {
    MlpRef m;
    if (hidden > 0) {
        m.w1 = push_param(p, prefix + ".w1", in, hidden, rng, false);
        m.b1 = push_param(p, prefix + ".b1", 1, hidden, rng, true);
        m.w2 = push_param(p, prefix + ".w2", hidden, out, rng, false);
        m.b2 = push_param(p, prefix + ".b2", 1, out, rng, true);
    } else {
        m.w2 = push_param(p, prefix + ".w", in, out, rng, false);
        m.b2 = push_param(p, prefix + ".b", 1, out, rng, true);
    }
    return m;
}

inline AffineRef push_affine(ModelParams& p, const std::string& prefix, std::size_t in,
                             std::size_t out, Rng& rng) {
    AffineRef a;
    a.w = push_param(p, prefix + ".w", in, out, rng, false);
    a.b = push_param(p, prefix + ".b", 1, out, rng, true);
    return a;
}

}  // namespace detail

// Xavier-uniform weights (sqrt(6/(fan_in+fan_out)) bound), zero biases, all
// draws in canonical parameter order so a seed pins every value.
inline ModelParams init_params(const HeteroGraph& g, const ModelConfig& config,
                               std::uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    Rng rng(seed, "model/init");

    for (const auto& t : g.node_types()) {
        EncoderRef enc;
        for (std::size_t j = 0; j < t.block_dims.size(); ++j)
            enc.blocks.push_back(detail::push_mlp(p, "enc." + t.name + ".blk" + std::to_string(j),
                                                  t.block_dims[j], config.encoder_hidden, config.d,
                                                  rng));
        enc.mixer = detail::push_affine(p, "enc." + t.name + ".mix",
                                        mix_input_width(t.block_dims.size(), config.d), config.d,
                                        rng);
        p.encoders.push_back(std::move(enc));
    }

    for (std::size_t l = 0; l < config.layers; ++l) {
        LayerRef layer;
        layer.rel.resize(g.relations().size());
        std::string lp = "layer" + std::to_string(l);
        for (const auto& r : g.relations()) {
            RelationRef rr;
            rr.weight = detail::push_param(p, lp + ".rel." + r.name + ".W", config.d, config.d, rng,
                                           false);
            rr.post = detail::push_mlp(p, lp + ".rel." + r.name + ".f", config.d,
                                       config.relation_hidden, config.d, rng);
            layer.rel[static_cast<std::size_t>(r.relation_id)] = rr;
        }
        for (const auto& t : g.node_types()) {
            std::size_t k = incoming_relations(g, t.type_id).size();
            layer.mixer.push_back(detail::push_affine(p, lp + ".mix." + t.name,
                                                      mix_input_width(k, config.d), config.d, rng));
        }
        p.layer_refs.push_back(std::move(layer));
    }

    for (std::size_t h = 0; h < config.heads; ++h)
        p.heads.push_back(
            detail::push_affine(p, "head" + std::to_string(h), config.d, config.d_out, rng));
    return p;
}

inline std::vector<int> register_params(Tape& tape, const ModelParams& p) {
    std::vector<int> ids;
    ids.reserve(p.values.size());
    for (const Tensor& t : p.values) ids.push_back(tape.param(t));
    return ids;
}

// --- tape builders ----------------------------------------------------------

inline int build_mlp(Tape& t, int x, const MlpRef& m, const std::vector<int>& pn) {
    if (m.has_hidden()) {
        int h = t.relu(t.affine(x, pn[static_cast<std::size_t>(m.w1)],
                                pn[static_cast<std::size_t>(m.b1)]));
        return t.affine(h, pn[static_cast<std::size_t>(m.w2)], pn[static_cast<std::size_t>(m.b2)]);
    }
    return t.affine(x, pn[static_cast<std::size_t>(m.w2)], pn[static_cast<std::size_t>(m.b2)]);
}

// concat(blocks) ++ concat(hadamard(b_i, b_j) for i < j); the pre-mixer
// vector of the feature/relation mix rule.
inline int build_interaction_concat(Tape& t, std::span<const int> blocks) {
    if (blocks.empty()) fail_validation("mix: needs at least one block");
    std::vector<int> parts(blocks.begin(), blocks.end());
    for (std::size_t i = 0; i < blocks.size(); ++i)
        for (std::size_t j = i + 1; j < blocks.size(); ++j)
            parts.push_back(t.hadamard(blocks[i], blocks[j]));
    return t.concat_cols(parts);
}

inline int build_feature_mix(Tape& t, std::span<const int> blocks, int mixer_w, int mixer_b) {
    return t.relu(t.affine(build_interaction_concat(t, blocks), mixer_w, mixer_b));
}

// h_t = M_t(concat_j f_{t,j}(x_{t,j})) over all nodes of the type.
inline int build_encoder(Tape& t, const FeatureStore& store, int type_id, const ModelParams& p,
                         const std::vector<int>& pn) {
    const EncoderRef& enc = p.encoders[static_cast<std::size_t>(type_id)];
    std::vector<int> outs;
    for (std::size_t j = 0; j < enc.blocks.size(); ++j) {
        int x = t.constant(store.block(type_id, j));
        outs.push_back(build_mlp(t, x, enc.blocks[j], pn));
    }
    return build_feature_mix(t, outs, pn[static_cast<std::size_t>(enc.mixer.w)],
                             pn[static_cast<std::size_t>(enc.mixer.b)]);
}

// One relational message-passing step for every node type:
//   a_r = f_r(c_{i,r} * sum_{j in N_i^r} w_ij W_r h_j),  c_{i,r} = 1/sum w_ij
//   h_i' = M_t(mix of the per-relation a_r)
// Neighborhoods with zero weight mass contribute a zero vector, keeping the
// mixer input width static across nodes.
inline std::vector<int> build_rgcn_layer(Tape& t, const HeteroGraph& g,
                                         const std::vector<int>& state_by_type,
                                         const ModelParams& p, std::size_t layer,
                                         const std::vector<int>& pn) {
    if (state_by_type.size() != g.node_types().size())
        fail_validation("rgcn layer: state must cover every node type");
    const LayerRef& lr = p.layer_refs[layer];
    std::vector<int> next(g.node_types().size(), -1);
    for (const auto& nt : g.node_types()) {
        std::vector<int> per_relation;
        for (int rid : incoming_relations(g, nt.type_id)) {
            const RelationSchema& rel = g.relation(rid);
            const RelationRef& rr = lr.rel[static_cast<std::size_t>(rid)];
            const auto& es = g.edges(rid);
            std::vector<double> wsum = g.in_weight_sums(rid);
            std::size_t n_dst = g.node_count(rel.dst_type);

            int projected = t.matmul(state_by_type[static_cast<std::size_t>(rel.src_type)],
                                     pn[static_cast<std::size_t>(rr.weight)]);
            std::vector<std::size_t> src_idx(es.size()), dst_idx(es.size());
            std::vector<double> coeff(es.size());
            for (std::size_t k = 0; k < es.size(); ++k) {
                src_idx[k] = es[k].src;
                dst_idx[k] = es[k].dst;
                coeff[k] = wsum[es[k].dst] > 0.0 ? es[k].weight / wsum[es[k].dst] : 0.0;
            }
            int agg = t.weighted_scatter_add(projected, std::move(src_idx), std::move(dst_idx),
                                             std::move(coeff), n_dst);
            int post = build_mlp(t, agg, rr.post, pn);
            std::vector<double> mask(n_dst);
            for (std::size_t i = 0; i < n_dst; ++i) mask[i] = wsum[i] > 0.0 ? 1.0 : 0.0;
            per_relation.push_back(t.row_scale(post, std::move(mask)));
        }
        const AffineRef& mix = lr.mixer[static_cast<std::size_t>(nt.type_id)];
        next[static_cast<std::size_t>(nt.type_id)] =
            build_feature_mix(t, per_relation, pn[static_cast<std::size_t>(mix.w)],
                              pn[static_cast<std::size_t>(mix.b)]);
    }
    return next;
}

struct ForwardOutput {
    std::vector<int> state_by_type;        // final layer state, N_t x d
    std::vector<std::vector<int>> emb;     // [head][type], row-normalized N_t x d_out
};

// encode -> L message-passing layers -> per-head affine -> row L2 normalize.
inline ForwardOutput forward_all(Tape& t, const HeteroGraph& g, const FeatureStore& store,
                                 const ModelParams& p, const std::vector<int>& pn) {
    std::vector<int> state;
    for (const auto& nt : g.node_types()) state.push_back(build_encoder(t, store, nt.type_id, p, pn));
    for (std::size_t l = 0; l < p.config.layers; ++l)
        state = build_rgcn_layer(t, g, state, p, l, pn);
    ForwardOutput out;
    out.state_by_type = state;
    out.emb.resize(p.config.heads);
    for (std::size_t h = 0; h < p.config.heads; ++h) {
        for (const auto& nt : g.node_types()) {
            const AffineRef& head = p.heads[h];
            int e = t.affine(state[static_cast<std::size_t>(nt.type_id)],
                             pn[static_cast<std::size_t>(head.w)],
                             pn[static_cast<std::size_t>(head.b)]);
            out.emb[h].push_back(t.row_l2_normalize(e));
        }
    }
    return out;
}

// --- plain-value wrappers (no gradients) ------------------------------------

// Per-type next state from explicit per-type current state.
inline std::vector<Tensor> rgcn_layer(const HeteroGraph& g, const std::vector<Tensor>& state,
                                      const ModelParams& p, std::size_t layer) {
    Tape t;
    std::vector<int> pn = register_params(t, p);
    std::vector<int> ids;
    for (const Tensor& s : state) ids.push_back(t.constant(s));
    std::vector<int> next = build_rgcn_layer(t, g, ids, p, layer, pn);
    std::vector<Tensor> out;
    for (int id : next) out.push_back(t.value(id));
    return out;
}

// Encoded rows for the requested nodes of one type.
inline Tensor encode_node_features(const HeteroGraph& g, const FeatureStore& store, int type_id,
                                   const std::vector<std::uint32_t>& ids, const ModelParams& p) {
    store.require_complete(g);
    Tape t;
    std::vector<int> pn = register_params(t, p);
    int enc = build_encoder(t, store, type_id, p, pn);
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    return t.value(t.gather_rows(enc, std::move(rows)));
}

// Per-head embedding rows for the requested nodes of one type.
inline std::vector<Tensor> forward(const HeteroGraph& g, const FeatureStore& store,
                                   const ModelParams& p, int type_id,
                                   const std::vector<std::uint32_t>& ids) {
    store.require_complete(g);
    Tape t;
    std::vector<int> pn = register_params(t, p);
    ForwardOutput fo = forward_all(t, g, store, p, pn);
    std::vector<Tensor> out;
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    for (std::size_t h = 0; h < p.config.heads; ++h)
        out.push_back(t.value(t.gather_rows(fo.emb[h][static_cast<std::size_t>(type_id)], rows)));
    return out;
}

}  // namespace rankgraph
