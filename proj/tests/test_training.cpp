#include "rankgraph/loss.hpp"
#include "rankgraph/negatives.hpp"
#include "rankgraph/selftest.hpp"
#include "rankgraph/serving.hpp"
#include "rankgraph/train.hpp"
#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

using namespace rankgraph;

namespace {

// Unit row in 2D with a chosen cosine against [1, 0].
Tensor unit_row_with_cos(double c) {
    return Tensor(1, 2, {c, std::sqrt(std::max(0.0, 1.0 - c * c))});
}

Tensor stack(const std::vector<Tensor>& rows) {
    Tensor out(rows.size(), rows[0].cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[0].cols(); ++j) out.at(i, j) = rows[i].at(0, j);
    return out;
}

const Tensor kAnchor = Tensor(1, 2, {1.0, 0.0});

}  // namespace

TEST_CASE("in-batch negatives: candidates, exclusions, exhaustion") {
    Rng rng(3);
    SECTION("two-pair batch offers the only other destination") {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs{{0, 10}, {1, 11}};
        auto got = sample_in_batch_negatives(pairs, 0, nullptr, 1, rng);
        REQUIRE(got.ids == std::vector<std::uint32_t>{11});
        CHECK_FALSE(got.short_of_request);
    }
    SECTION("true neighbors of the anchor are excluded; exhaustion sets the flag") {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs{{0, 10}, {1, 11}, {2, 12}};
        std::set<std::uint32_t> neighbors{11, 12};
        auto got = sample_in_batch_negatives(
            pairs, 0, [&](std::uint32_t c) { return neighbors.count(c) > 0; }, 2, rng);
        CHECK(got.ids.empty());
        CHECK(got.short_of_request);
    }
    SECTION("single-pair batch is an error") {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs{{0, 10}};
        CHECK_THROWS_AS(sample_in_batch_negatives(pairs, 0, nullptr, 1, rng), ValidationError);
    }
    SECTION("uniform over the eligible candidates (Monte-Carlo)") {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs{{0, 10}, {1, 11}, {2, 12}, {3, 13}};
        Rng mc(29);
        std::map<std::uint32_t, int> counts;
        for (int i = 0; i < 1000; ++i) {
            auto got = sample_in_batch_negatives(pairs, 0, nullptr, 1, mc);
            REQUIRE(got.ids.size() == 1);
            ++counts[got.ids[0]];
        }
        for (std::uint32_t c : {11u, 12u, 13u})
            CHECK(std::abs(counts[c] / 1000.0 - 1.0 / 3.0) < 0.05);
    }
}

TEST_CASE("negative pool: FIFO eviction, detachment, sampling") {
    SECTION("capacity 2 keeps the two newest entries") {
        NegativePool pool(1, 2);
        pool.insert(0, 1, Tensor{{1, 0}});
        pool.insert(0, 2, Tensor{{0, 1}});
        pool.insert(0, 3, Tensor{{0.6, 0.8}});
        auto entries = pool.entries(0);
        REQUIRE(entries.size() == 2);
        CHECK(entries[0]->node == 2);
        CHECK(entries[1]->node == 3);
    }
    SECTION("sampling an empty pool is an error") {
        NegativePool pool(1, 4);
        Rng rng(1);
        CHECK_THROWS_AS(pool.sample(0, 1, rng), ValidationError);
    }
    SECTION("snapshots stay bitwise unchanged when the source mutates") {
        NegativePool pool(1, 4);
        Tensor snapshot{{0.25, 0.75}};
        pool.insert(0, 7, snapshot);
        snapshot.at(0, 0) = -1.0;  // simulates a parameter update after the write
        CHECK(pool.entries(0)[0]->head_rows == Tensor{{0.25, 0.75}});
    }
    SECTION("uniform with replacement over a 64-entry pool") {
        NegativePool pool(1, 64);
        for (std::uint32_t i = 0; i < 64; ++i) pool.insert(0, i, Tensor{{double(i), 1.0}});
        Rng rng(31);
        std::vector<long> counts(64, 0);
        const long total = 1000000;
        for (int chunk = 0; chunk < 10; ++chunk)
            for (const PoolEntry* e : pool.sample(0, total / 10, rng)) ++counts[e->node];
        double expected = double(total) / 64.0;
        for (long c : counts) CHECK(std::abs(c - expected) / expected < 0.05);
    }
    SECTION("dimension mismatch between snapshots is rejected") {
        NegativePool pool(1, 4);
        pool.insert(0, 0, Tensor{{1.0, 2.0}});
        CHECK_THROWS_AS(pool.insert(0, 1, Tensor{{1.0, 2.0, 3.0}}), ValidationError);
    }
    SECTION("fixed seed draws identically") {
        NegativePool pool(1, 8);
        for (std::uint32_t i = 0; i < 8; ++i) pool.insert(0, i, Tensor{{double(i)}});
        Rng a(5), b(5);
        auto pa = pool.sample(0, 16, a);
        auto pb = pool.sample(0, 16, b);
        for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->node == pb[i]->node);
    }
    SECTION("a single entry sampled three times repeats it") {
        NegativePool pool(1, 4);
        pool.insert(0, 9, Tensor{{1.0}});
        Rng rng(2);
        auto picks = pool.sample(0, 3, rng);
        REQUIRE(picks.size() == 3);
        for (const PoolEntry* e : picks) CHECK(e->node == 9);
    }
}

TEST_CASE("semantic negatives: other heads of the positive") {
    CHECK(semantic_negative_heads(1, 0).empty());
    CHECK(semantic_negative_heads(3, 0) == std::vector<std::size_t>{1, 2});
    Tensor head_rows{{1, 0}, {0, 1}, {0.6, 0.8}};
    Tensor got = semantic_negatives(head_rows, 1);
    CHECK(got == Tensor{{1, 0}, {0.6, 0.8}});
}

TEST_CASE("triplet loss closed forms") {
    // d(a,p) = 0.2, d(a,n) = 0.5, m = 0.4 -> 0.1
    CHECK(triplet_loss(kAnchor, unit_row_with_cos(0.8), unit_row_with_cos(0.5), 0.4) ==
          Catch::Approx(0.1).margin(1e-12));
    // p = n -> loss = margin
    CHECK(triplet_loss(kAnchor, unit_row_with_cos(0.3), unit_row_with_cos(0.3), 0.4) ==
          Catch::Approx(0.4).margin(1e-12));
    // clamped at zero
    CHECK(triplet_loss(kAnchor, unit_row_with_cos(0.9), unit_row_with_cos(0.1), 0.4) == 0.0);
    // empty negatives rejected
    CHECK_THROWS_AS(triplet_loss(kAnchor, unit_row_with_cos(0.5), Tensor(0, 2), 0.4),
                    ValidationError);
}

TEST_CASE("infonce loss closed forms") {
    SECTION("equal positive and negative scores give ln 2") {
        CHECK(infonce_loss(kAnchor, unit_row_with_cos(0.5), unit_row_with_cos(0.5), 0.1) ==
              Catch::Approx(std::log(2.0)).margin(1e-12));
    }
    SECTION("cos(a,p)=1, cos(a,n)=-1, tau=0.1 -> softplus(-20)") {
        // the result is ~2e-9 recovered from logits ~10, so cancellation
        // caps agreement at ~1e-15 absolute
        double got = infonce_loss(kAnchor, unit_row_with_cos(1.0), unit_row_with_cos(-1.0), 0.1);
        CHECK(got == Catch::Approx(2.0611536203143807e-9).margin(1e-14));
    }
    SECTION("k equal-score negatives give ln(k+1)") {
        for (std::size_t k : {1u, 3u, 7u}) {
            std::vector<Tensor> rows(k, unit_row_with_cos(0.42));
            double got = infonce_loss(kAnchor, unit_row_with_cos(0.42), stack(rows), 0.1);
            CHECK(std::abs(got - std::log(double(k + 1))) <= 1e-12);
        }
    }
    SECTION("temperature must be positive") {
        CHECK_THROWS_AS(infonce_loss(kAnchor, unit_row_with_cos(0.5), unit_row_with_cos(0.1), 0.0),
                        ValidationError);
    }
}

TEST_CASE("infonce is invariant to a constant shift of all logits") {
    Tensor scores(1, 5, {0.8, 0.1, -0.3, 0.5, 0.2});
    double base = infonce_from_scores(scores, 0.1);
    for (double shift : {1.0, -2.5, 10.0}) {
        Tensor shifted = scores;
        for (std::size_t i = 0; i < shifted.size(); ++i)
            // shift the cosine by shift*tau so the logits shift by `shift`
            shifted.data()[i] += shift * 0.1;
        CHECK(std::abs(infonce_from_scores(shifted, 0.1) - base) <= 1e-10);
    }
}

TEST_CASE("loss bounds hold on random unit rows") {
    Rng rng(47, "loss-bounds");
    for (int trial = 0; trial < 50; ++trial) {
        auto unit = [&](std::size_t n) {
            Tensor t(n, 4);
            for (std::size_t i = 0; i < n; ++i) {
                double norm2 = 0;
                for (std::size_t j = 0; j < 4; ++j) {
                    t.at(i, j) = rng.normal();
                    norm2 += t.at(i, j) * t.at(i, j);
                }
                for (std::size_t j = 0; j < 4; ++j) t.at(i, j) /= std::sqrt(norm2);
            }
            return t;
        };
        std::size_t n_neg = 1 + rng.below(6);
        double margin = rng.uniform(0.0, 1.0);
        double tau = rng.uniform(0.05, 1.0);
        Tensor a = unit(1), p = unit(1), n = unit(n_neg);
        double tl = triplet_loss(a, p, n, margin);
        double il = infonce_loss(a, p, n, tau);
        CHECK(tl >= 0.0);
        CHECK(tl <= margin + 2.0 + 1e-12);
        CHECK(il >= 0.0);
        CHECK(il <= std::log(1.0 + double(n_neg)) + 2.0 / tau + 1e-12);
    }
}

TEST_CASE("combined loss mixes the two means") {
    CHECK(combined_loss({0.1, 0.3}, {0.7, 0.7}, 0.0, 1.0) == Catch::Approx(0.7));
    CHECK(combined_loss({0.1, 0.3}, {0.7, 0.7}, 1.0, 0.0) == Catch::Approx(0.2));
    CHECK(combined_loss({0.1}, {0.7}, 1.0, 1.0) == Catch::Approx(0.8));
}

TEST_CASE("adam: no-op on zero gradients, unit step at t=1, converges on x^2") {
    SECTION("zero gradient on fresh moments leaves parameters unchanged") {
        std::vector<Tensor> params{Tensor{{1.5}}};
        std::vector<Tensor> grads{Tensor{{0.0}}};
        AdamMoments m = AdamMoments::zeros_like(params);
        adam_update(params, grads, m, 1, 0.1, 0.9, 0.999, 1e-8);
        CHECK(params[0].at(0, 0) == 1.5);
        CHECK(m.m[0].at(0, 0) == 0.0);
        CHECK(m.v[0].at(0, 0) == 0.0);
    }
    SECTION("zero gradient decays accumulated moments") {
        std::vector<Tensor> params{Tensor{{1.5}}};
        std::vector<Tensor> grads{Tensor{{0.0}}};
        AdamMoments m = AdamMoments::zeros_like(params);
        m.m[0].at(0, 0) = 0.5;
        m.v[0].at(0, 0) = 0.25;
        adam_update(params, grads, m, 2, 0.1, 0.9, 0.999, 1e-8);
        CHECK(m.m[0].at(0, 0) == Catch::Approx(0.45));
        CHECK(m.v[0].at(0, 0) == Catch::Approx(0.25 * 0.999));
    }
    SECTION("first-step magnitude is ~lr regardless of gradient scale") {
        for (double g : {1e-4, 1.0, 1e4}) {
            std::vector<Tensor> params{Tensor{{0.0}}};
            std::vector<Tensor> grads{Tensor{{g}}};
            AdamMoments m = AdamMoments::zeros_like(params);
            adam_update(params, grads, m, 1, 0.01, 0.9, 0.999, 1e-8);
            CHECK(std::abs(params[0].at(0, 0)) == Catch::Approx(0.01).epsilon(1e-3));
        }
    }
    SECTION("minimizes x^2 to |x| < 1e-3 within 500 steps at lr 0.1") {
        std::vector<Tensor> params{Tensor{{1.0}}};
        AdamMoments m = AdamMoments::zeros_like(params);
        std::size_t step = 0;
        for (; step < 500 && std::abs(params[0].at(0, 0)) >= 1e-3; ) {
            std::vector<Tensor> grads{Tensor{{2.0 * params[0].at(0, 0)}}};
            adam_update(params, grads, m, ++step, 0.1, 0.9, 0.999, 1e-8);
        }
        CHECK(std::abs(params[0].at(0, 0)) < 1e-3);
    }
    SECTION("shape mismatch is rejected") {
        std::vector<Tensor> params{Tensor{{1.0}}};
        std::vector<Tensor> grads{Tensor{{1.0, 2.0}}};
        AdamMoments m = AdamMoments::zeros_like(params);
        CHECK_THROWS_AS(adam_update(params, grads, m, 1, 0.1, 0.9, 0.999, 1e-8), ValidationError);
    }
}

TEST_CASE("full combined-loss gradient matches finite differences on the 10-node fixture") {
    CHECK(run_gradcheck(11) <= 1e-4);
}

TEST_CASE("with semantic negatives on, every head receives gradient") {
    SelfTestFixture fx = make_gradcheck_fixture(13);
    Tape tape;
    std::vector<int> pn = register_params(tape, fx.params);
    ForwardOutput fo = forward_all(tape, fx.graph, fx.store, fx.params, pn);
    StepLoss sl = build_step_loss(tape, fo, fx.instances, fx.loss, fx.model.heads);
    tape.backward(sl.combined);
    for (const AffineRef& head : fx.params.heads) {
        const Tensor& gw = tape.grad(pn[static_cast<std::size_t>(head.w)]);
        double mass = 0.0;
        for (double x : gw.values()) mass += std::abs(x);
        CHECK(mass > 0.0);
    }
}

TEST_CASE("train: zero steps returns the initialization; fixed seed reproduces runs") {
    SelfTestFixture fx = make_gradcheck_fixture(21);
    TrainConfig tc;
    tc.steps = 0;
    tc.batch_size = 4;
    tc.train_relations = {"u2i"};
    TrainResult r0 = train(fx.graph, fx.store, fx.model, tc, 99);
    ModelParams reference = init_params(fx.graph, fx.model, 99);
    REQUIRE(r0.params.values.size() == reference.values.size());
    for (std::size_t i = 0; i < reference.values.size(); ++i)
        CHECK(r0.params.values[i] == reference.values[i]);
    CHECK(r0.log.empty());

    tc.steps = 5;
    TrainResult a = train(fx.graph, fx.store, fx.model, tc, 123);
    TrainResult b = train(fx.graph, fx.store, fx.model, tc, 123);
    REQUIRE(a.log.size() == 5);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].loss == b.log[i].loss);
        CHECK(a.log[i].triplet == b.log[i].triplet);
        CHECK(a.log[i].infonce == b.log[i].infonce);
    }
    for (std::size_t i = 0; i < a.params.values.size(); ++i)
        CHECK(a.params.values[i] == b.params.values[i]);
}

TEST_CASE("metrics log format is step<TAB>loss<TAB>triplet<TAB>infonce") {
    std::vector<StepMetrics> log{{1, 0.5, 0.25, 0.25}, {2, 0.375, 0.25, 0.125}};
    std::ostringstream os;
    write_metrics(os, log);
    CHECK(os.str() == "1\t0.5\t0.25\t0.25\n2\t0.375\t0.25\t0.125\n");
}

TEST_CASE("semantic negatives drive the heads apart on a planted run") {
    SyntheticConfig sc;
    sc.users = 40;
    sc.items = 40;
    sc.communities = 4;
    sc.p_in = 0.3;
    sc.p_out = 0.02;
    sc.feature_dim = 8;
    sc.noise = 0.2;
    sc.log_hours = 1;
    sc.events_per_hour = 1;
    auto data = generate_synthetic(sc, 5);
    auto m = testutil::materialize(data);

    ModelConfig mc;
    mc.d = 8;
    mc.d_out = 8;
    mc.layers = 1;
    mc.heads = 2;
    mc.encoder_hidden = 8;
    TrainConfig tc;
    tc.steps = 150;
    tc.batch_size = 16;
    tc.lr = 3e-3;
    tc.train_relations = {"engage"};
    tc.loss.semantic_negatives = true;
    TrainResult r = train(m.graph, m.store, mc, tc, 7);

    Tape tape;
    std::vector<int> pn = register_params(tape, r.params);
    ForwardOutput fo = forward_all(tape, m.graph, m.store, r.params, pn);
    const Tensor& items_h0 = tape.value(fo.emb[0][1]);
    const Tensor& items_h1 = tape.value(fo.emb[1][1]);
    const Tensor& users_h0 = tape.value(fo.emb[0][0]);

    double cross = 0.0;
    for (std::size_t i = 0; i < items_h0.rows(); ++i)
        cross += dot_rows(items_h0, i, items_h1, i);
    cross /= static_cast<double>(items_h0.rows());

    int rid = m.graph.relation_id_of("engage");
    double positive = 0.0;
    for (const EdgeRecord& e : m.graph.edges(rid))
        positive += dot_rows(users_h0, e.src, items_h0, e.dst);
    positive /= static_cast<double>(m.graph.edges(rid).size());

    INFO("cross-head " << cross << " vs positive-pair " << positive);
    CHECK(cross < positive);
}
