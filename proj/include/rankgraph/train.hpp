#pragma once

#include "rankgraph/features.hpp"
#include "rankgraph/graph.hpp"
#include "rankgraph/loss.hpp"
#include "rankgraph/model.hpp"
#include "rankgraph/negatives.hpp"
#include "rankgraph/rng.hpp"

#include <cmath>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace rankgraph {

struct LossConfig {
    double margin = 0.4;
    double temperature = 0.1;
    double alpha = 1.0;  // triplet mixing weight
    double beta = 1.0;   // infonce mixing weight
    std::size_t n_neg = 8;  // per negative source, per anchor
    std::size_t pool_capacity = 4096;
    bool semantic_negatives = true;
    bool detach_semantic = false;

    void validate() const {
        if (alpha < 0.0 || beta < 0.0 || alpha + beta <= 0.0)
            fail_validation("loss config: alpha, beta must be non-negative with alpha+beta > 0");
        if (temperature <= 0.0) fail_validation("loss config: temperature must be positive");
        if (n_neg == 0) fail_validation("loss config: n_neg must be >= 1");
        if (pool_capacity == 0) fail_validation("loss config: pool capacity must be >= 1");
    }
};

struct TrainConfig {
    LossConfig loss;
    std::size_t steps = 300;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool symmetric_anchors = true;  // also anchor at the destination of each pair
    std::vector<std::string> train_relations;  // empty = every non-self-loop relation
    bool checked = true;  // finite checks after every tape op

    void validate() const {
        loss.validate();
        if (batch_size == 0) fail_validation("train config: batch_size must be >= 1");
        if (lr <= 0.0) fail_validation("train config: lr must be positive");
    }
};

struct StepMetrics {
    std::size_t step = 0;
    double loss = 0.0;
    double triplet = 0.0;
    double infonce = 0.0;
};

// --- Adam --------------------------------------------------------------------

struct AdamMoments {
    std::vector<Tensor> m;  // first moment
    std::vector<Tensor> v;  // second moment

    static AdamMoments zeros_like(const std::vector<Tensor>& params) {
        AdamMoments out;
        for (const Tensor& p : params) {
            out.m.emplace_back(p.rows(), p.cols());
            out.v.emplace_back(p.rows(), p.cols());
        }
        return out;
    }
};

// Standard bias-corrected Adam; step is 1-based.
inline void adam_update(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                        AdamMoments& moments, std::size_t step, double lr, double beta1,
                        double beta2, double eps) {
    if (params.size() != grads.size() || params.size() != moments.m.size())
        fail_validation("adam_update: parameter/gradient/moment count mismatch");
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p].same_shape(grads[p]))
            fail_validation("adam_update: gradient shape " + grads[p].shape_str() +
                            " != parameter shape " + params[p].shape_str());
        double* w = params[p].data();
        const double* g = grads[p].data();
        double* m = moments.m[p].data();
        double* v = moments.v[p].data();
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// --- step loss assembly --------------------------------------------------------

// One contrastive instance: an anchor/positive pair plus its pre-drawn
// negative sources. Sampling happens before tape construction so a step's
// loss is a pure function of the parameters.
struct LossInstance {
    int anchor_type = -1;
    int positive_type = -1;
    std::uint32_t anchor = 0;
    std::uint32_t positive = 0;
    std::vector<std::uint32_t> in_batch;  // negative node ids, positive's type
    std::vector<Tensor> pool_rows;        // detached snapshots, each heads x d_out
};

struct StepLoss {
    int combined = -1;        // tape node, 1x1
    double triplet = 0.0;     // mean triplet term value
    double infonce = 0.0;     // mean infonce term value
    std::size_t instances = 0;
    std::size_t skipped = 0;  // anchors that ended up with zero negatives
};

inline StepLoss build_step_loss(Tape& t, const ForwardOutput& fo,
                                const std::vector<LossInstance>& instances,
                                const LossConfig& cfg, std::size_t heads) {
    StepLoss out;
    int triplet_sum = -1, infonce_sum = -1;
    for (const LossInstance& inst : instances) {
        for (std::size_t h = 0; h < heads; ++h) {
            int anchor = t.gather_rows(fo.emb[h][static_cast<std::size_t>(inst.anchor_type)],
                                       {inst.anchor});
            int positive = t.gather_rows(fo.emb[h][static_cast<std::size_t>(inst.positive_type)],
                                         {inst.positive});
            std::vector<int> neg_rows;
            for (std::uint32_t id : inst.in_batch)
                neg_rows.push_back(t.gather_rows(
                    fo.emb[h][static_cast<std::size_t>(inst.positive_type)], {id}));
            for (const Tensor& snapshot : inst.pool_rows) {
                Tensor row(1, snapshot.cols());
                for (std::size_t j = 0; j < snapshot.cols(); ++j) row.at(0, j) = snapshot.at(h, j);
                neg_rows.push_back(t.constant(std::move(row)));
            }
            if (cfg.semantic_negatives) {
                for (std::size_t other : semantic_negative_heads(heads, h)) {
                    int row = t.gather_rows(
                        fo.emb[other][static_cast<std::size_t>(inst.positive_type)],
                        {inst.positive});
                    if (cfg.detach_semantic) row = t.constant(t.value(row));
                    neg_rows.push_back(row);
                }
            }
            if (neg_rows.empty()) {
                ++out.skipped;
                continue;
            }
            int negatives = t.concat_rows(neg_rows);
            int tl = build_triplet(t, anchor, positive, negatives, cfg.margin);
            int il = build_infonce(t, anchor, positive, negatives, cfg.temperature);
            triplet_sum = triplet_sum < 0 ? tl : t.add(triplet_sum, tl);
            infonce_sum = infonce_sum < 0 ? il : t.add(infonce_sum, il);
            ++out.instances;
        }
    }
    if (out.instances == 0) {
        out.combined = t.constant(Tensor(1, 1));
        return out;
    }
    double inv = 1.0 / static_cast<double>(out.instances);
    int tmean = t.scale(triplet_sum, inv);
    int imean = t.scale(infonce_sum, inv);
    out.combined = t.add(t.scale(tmean, cfg.alpha), t.scale(imean, cfg.beta));
    out.triplet = t.value(tmean).at(0, 0);
    out.infonce = t.value(imean).at(0, 0);
    return out;
}

// --- training loop -------------------------------------------------------------

struct TrainState {
    ModelParams params;
    AdamMoments moments;
    NegativePool pools;
    std::size_t step = 0;
};

struct TrainResult {
    ModelParams params;
    std::vector<StepMetrics> log;
    std::size_t skipped_instances = 0;
    std::size_t short_negative_instances = 0;
};

inline std::vector<int> resolve_train_relations(const HeteroGraph& g,
                                                const std::vector<std::string>& names) {
    std::vector<int> out;
    if (names.empty()) {
        for (const auto& r : g.relations())
            if (r.kind != RelationKind::self_loop) out.push_back(r.relation_id);
    } else {
        for (const auto& n : names) out.push_back(g.relation_id_of(n));
    }
    if (out.empty()) fail_validation("train: graph has no trainable relation");
    return out;
}

// Runs S contrastive steps: weighted positive-pair batches, full-graph
// forward, in-batch + pool + semantic negatives, triplet + infonce loss,
// Adam. Fully reproducible from the seed.
inline TrainResult train(const HeteroGraph& g, const FeatureStore& store, const ModelConfig& mc,
                         const TrainConfig& tc, std::uint64_t seed) {
    tc.validate();
    store.require_complete(g);
    std::vector<int> rel_ids = resolve_train_relations(g, tc.train_relations);

    TrainState state{init_params(g, mc, seed),
                     AdamMoments{},
                     NegativePool(g.node_types().size(), tc.loss.pool_capacity)};
    state.moments = AdamMoments::zeros_like(state.params.values);

    Rng batch_rng(seed, "train/batch");
    Rng neg_rng(seed, "train/inbatch");
    Rng pool_rng(seed, "train/pool");

    TrainResult result;
    for (std::size_t step = 1; step <= tc.steps; ++step) {
        std::vector<EdgeBatch> batches = g.sample_edge_batch(rel_ids, tc.batch_size, batch_rng);

        // Draw every negative up front; the tape below is then a pure
        // function of the parameters.
        std::vector<LossInstance> instances;
        for (const EdgeBatch& batch : batches) {
            const RelationSchema& rel = g.relation(batch.relation_id);
            std::vector<std::pair<std::uint32_t, std::uint32_t>> reversed;
            if (tc.symmetric_anchors) {
                reversed.reserve(batch.pairs.size());
                for (auto [u, v] : batch.pairs) reversed.emplace_back(v, u);
            }
            for (std::size_t i = 0; i < batch.pairs.size(); ++i) {
                auto [u, v] = batch.pairs[i];
                LossInstance fwd;
                fwd.anchor_type = rel.src_type;
                fwd.positive_type = rel.dst_type;
                fwd.anchor = u;
                fwd.positive = v;
                if (batch.pairs.size() >= 2) {
                    auto got = sample_in_batch_negatives(
                        batch.pairs, i,
                        [&](std::uint32_t c) { return g.has_edge(batch.relation_id, u, c); },
                        tc.loss.n_neg, neg_rng);
                    fwd.in_batch = std::move(got.ids);
                    if (got.short_of_request) ++result.short_negative_instances;
                }
                if (state.pools.size(rel.dst_type) > 0)
                    for (const PoolEntry* e :
                         state.pools.sample(rel.dst_type, tc.loss.n_neg, pool_rng))
                        fwd.pool_rows.push_back(e->head_rows);
                instances.push_back(std::move(fwd));

                if (!tc.symmetric_anchors) continue;
                LossInstance rev;
                rev.anchor_type = rel.dst_type;
                rev.positive_type = rel.src_type;
                rev.anchor = v;
                rev.positive = u;
                if (reversed.size() >= 2) {
                    auto got = sample_in_batch_negatives(
                        reversed, i,
                        [&](std::uint32_t c) { return g.has_edge(batch.relation_id, c, v); },
                        tc.loss.n_neg, neg_rng);
                    rev.in_batch = std::move(got.ids);
                    if (got.short_of_request) ++result.short_negative_instances;
                }
                if (state.pools.size(rel.src_type) > 0)
                    for (const PoolEntry* e :
                         state.pools.sample(rel.src_type, tc.loss.n_neg, pool_rng))
                        rev.pool_rows.push_back(e->head_rows);
                instances.push_back(std::move(rev));
            }
        }

        Tape tape;
        tape.set_checked(tc.checked);
        StepLoss step_loss;
        try {
            std::vector<int> pn = register_params(tape, state.params);
            ForwardOutput fo = forward_all(tape, g, store, state.params, pn);
            step_loss = build_step_loss(tape, fo, instances, tc.loss, mc.heads);
            double total = tape.value(step_loss.combined).at(0, 0);
            if (!std::isfinite(total) || !std::isfinite(step_loss.triplet) ||
                !std::isfinite(step_loss.infonce))
                throw std::runtime_error("non-finite loss");
            tape.backward(step_loss.combined);
            std::vector<Tensor> grads;
            grads.reserve(pn.size());
            for (int id : pn) grads.push_back(tape.grad(id));
            adam_update(state.params.values, grads, state.moments, step, tc.lr, tc.beta1,
                        tc.beta2, tc.eps);
            result.skipped_instances += step_loss.skipped;
            result.log.push_back({step, total, step_loss.triplet, step_loss.infonce});

            // Pool refresh from this step's (pre-update) embeddings.
            std::set<std::pair<int, std::uint32_t>> seen;
            for (const EdgeBatch& batch : batches) {
                const RelationSchema& rel = g.relation(batch.relation_id);
                for (auto [u, v] : batch.pairs) {
                    for (auto [type_id, node] :
                         {std::pair<int, std::uint32_t>{rel.src_type, u},
                          std::pair<int, std::uint32_t>{rel.dst_type, v}}) {
                        if (!seen.insert({type_id, node}).second) continue;
                        Tensor rows(mc.heads, state.params.config.d_out);
                        for (std::size_t h = 0; h < mc.heads; ++h) {
                            const Tensor& emb =
                                tape.value(fo.emb[h][static_cast<std::size_t>(type_id)]);
                            for (std::size_t j = 0; j < emb.cols(); ++j)
                                rows.at(h, j) = emb.at(node, j);
                        }
                        state.pools.insert(type_id, node, std::move(rows));
                    }
                }
            }
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "training aborted at step " << step << " (triplet=" << step_loss.triplet
                << ", infonce=" << step_loss.infonce << "): " << e.what();
            throw std::runtime_error(msg.str());
        }
        state.step = step;
    }
    result.params = std::move(state.params);
    return result;
}

// Metrics log: one line per step, `step<TAB>loss<TAB>triplet<TAB>infonce`.
inline void write_metrics(std::ostream& out, const std::vector<StepMetrics>& log) {
    std::ostringstream os;
    os.precision(17);
    for (const StepMetrics& m : log)
        os << m.step << '\t' << m.loss << '\t' << m.triplet << '\t' << m.infonce << '\n';
    out << os.str();
}

}  // namespace rankgraph
