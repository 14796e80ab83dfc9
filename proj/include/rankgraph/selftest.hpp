#pragma once

#include "rankgraph/features.hpp"
#include "rankgraph/graph_io.hpp"
#include "rankgraph/train.hpp"

#include <sstream>
#include <string>
#include <vector>

namespace rankgraph {

// Built-in 10-node fixture for the end-to-end gradient self-test: two node
// types, two engagement relations, two heads, and all three negative sources
// active. Everything random is pre-drawn from the seed so the assembled loss
// is a pure function of the parameters.
struct SelfTestFixture {
    HeteroGraph graph;
    FeatureStore store;
    ModelParams params;
    ModelConfig model;
    LossConfig loss;
    std::vector<LossInstance> instances;

    SelfTestFixture(HeteroGraph g, FeatureStore s, ModelParams p)
        : graph(std::move(g)), store(std::move(s)), params(std::move(p)) {}
};

inline SelfTestFixture make_gradcheck_fixture(std::uint64_t seed) {
    static const char* kSchema = R"({
        "node_types": [
            {"name": "user", "blocks": [5]},
            {"name": "item", "blocks": [4]}
        ],
        "relations": [
            {"name": "u2i", "src": "user", "dst": "item", "kind": "engagement"},
            {"name": "i2u", "src": "item", "dst": "user", "kind": "engagement"}
        ]
    })";
    static const char* kEdges =
        "u2i\tu0\ti0\t1.0\n"
        "u2i\tu0\ti1\t2.0\n"
        "u2i\tu1\ti0\t0.5\n"
        "u2i\tu1\ti2\t1.0\n"
        "u2i\tu2\ti2\t1.5\n"
        "u2i\tu3\ti3\t1.0\n"
        "u2i\tu4\ti4\t3.0\n"
        "i2u\ti0\tu0\t1.0\n"
        "i2u\ti0\tu1\t1.0\n"
        "i2u\ti1\tu2\t2.0\n"
        "i2u\ti2\tu3\t0.5\n"
        "i2u\ti3\tu4\t1.0\n"
        "i2u\ti4\tu0\t2.5\n";

    GraphSchema schema = parse_schema_json(kSchema);
    std::istringstream edges(kEdges);
    HeteroGraph g = ingest_edges(edges, schema);

    FeatureStore store(g);
    Rng feat_rng(seed, "selftest/features");
    for (const auto& t : g.node_types()) {
        for (std::uint32_t n = 0; n < g.node_count(t.type_id); ++n)
            for (std::size_t b = 0; b < t.block_dims.size(); ++b) {
                std::vector<double> row(t.block_dims[b]);
                for (double& x : row) x = feat_rng.uniform(-1.0, 1.0);
                store.set(t.type_id, n, b, std::move(row));
            }
    }

    ModelConfig mc;
    mc.d = 6;
    mc.d_out = 5;
    mc.layers = 2;
    mc.heads = 2;
    mc.encoder_hidden = 4;
    mc.relation_hidden = 0;

    ModelParams params = init_params(g, mc, seed);
    // Evaluate at a generic point: zero-initialized biases can park relu
    // preactivations exactly on the kink (a dead hidden row feeds 0 into the
    // mixer), where subgradients and central differences legitimately
    // disagree. A small jitter moves every kink to a measure-zero event.
    Rng jitter(seed, "selftest/jitter");
    for (Tensor& t : params.values)
        for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] += jitter.uniform(-0.05, 0.05);
    SelfTestFixture fx(std::move(g), std::move(store), std::move(params));
    fx.model = mc;
    fx.loss.margin = 0.4;
    fx.loss.temperature = 0.1;
    fx.loss.n_neg = 2;
    fx.loss.pool_capacity = 8;
    fx.loss.semantic_negatives = true;

    // Pool snapshots: random unit rows standing in for earlier-step
    // embeddings (out-of-batch source).
    Rng pool_rng(seed, "selftest/pool");
    auto random_snapshot = [&]() {
        Tensor rows(mc.heads, mc.d_out);
        for (std::size_t h = 0; h < mc.heads; ++h) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < mc.d_out; ++j) {
                rows.at(h, j) = pool_rng.normal();
                norm2 += rows.at(h, j) * rows.at(h, j);
            }
            double norm = std::sqrt(norm2);
            for (std::size_t j = 0; j < mc.d_out; ++j) rows.at(h, j) /= norm;
        }
        return rows;
    };

    Rng batch_rng(seed, "selftest/batch");
    Rng neg_rng(seed, "selftest/negatives");
    std::vector<int> rel_ids{fx.graph.relation_id_of("u2i"), fx.graph.relation_id_of("i2u")};
    std::vector<EdgeBatch> batches = fx.graph.sample_edge_batch(rel_ids, 3, batch_rng);
    for (const EdgeBatch& batch : batches) {
        const RelationSchema& rel = fx.graph.relation(batch.relation_id);
        for (std::size_t i = 0; i < batch.pairs.size(); ++i) {
            auto [u, v] = batch.pairs[i];
            LossInstance inst;
            inst.anchor_type = rel.src_type;
            inst.positive_type = rel.dst_type;
            inst.anchor = u;
            inst.positive = v;
            auto got = sample_in_batch_negatives(
                batch.pairs, i,
                [&](std::uint32_t c) { return fx.graph.has_edge(batch.relation_id, u, c); },
                fx.loss.n_neg, neg_rng);
            inst.in_batch = std::move(got.ids);
            for (std::size_t s = 0; s < fx.loss.n_neg; ++s)
                inst.pool_rows.push_back(random_snapshot());
            fx.instances.push_back(std::move(inst));
        }
    }
    return fx;
}

// Max relative error of the full-model analytic gradient (encoder, layers,
// heads, triplet+infonce over all three negative sources) against central
// finite differences.
inline double run_gradcheck(std::uint64_t seed, double epsilon = 1e-5) {
    SelfTestFixture fx = make_gradcheck_fixture(seed);
    LossBuilder builder = [&](Tape& tape, const std::vector<int>& pnodes) {
        ModelParams probe = fx.params;  // layout only; values come from pnodes
        ForwardOutput fo = forward_all(tape, fx.graph, fx.store, probe, pnodes);
        StepLoss sl = build_step_loss(tape, fo, fx.instances, fx.loss, fx.model.heads);
        return sl.combined;
    };
    return grad_check(builder, fx.params.values, epsilon);
}

}  // namespace rankgraph
