#include "rankgraph/selftest.hpp"
#include "rankgraph/serving.hpp"
#include "rankgraph/parallel.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <sstream>

using namespace rankgraph;

namespace {

EmbeddingTable random_unit_table(Rng& rng, std::size_t n, std::size_t d) {
    EmbeddingTable t;
    t.type_name = "item";
    t.rows = Tensor(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            t.rows.at(i, j) = rng.normal();
            norm2 += t.rows.at(i, j) * t.rows.at(i, j);
        }
        for (std::size_t j = 0; j < d; ++j) t.rows.at(i, j) /= std::sqrt(norm2);
        t.ids.push_back("n" + std::to_string(i));
    }
    t.build_index();
    return t;
}

// Full-sort oracle with the same ranking order (score desc, id asc) but a
// different algorithm than the heap-based knn.
std::vector<std::pair<std::uint32_t, double>> knn_oracle(const EmbeddingTable& t,
                                                         std::uint32_t query, std::size_t k) {
    std::vector<std::pair<std::uint32_t, double>> all;
    for (std::uint32_t i = 0; i < t.rows.rows(); ++i) {
        if (i == query) continue;
        all.push_back({i, dot_rows(t.rows, query, t.rows, i)});
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

}  // namespace

TEST_CASE("export_embeddings: deterministic, complete, fingerprinted") {
    SelfTestFixture fx = make_gradcheck_fixture(51);
    EmbeddingTable a = export_embeddings(fx.graph, fx.store, fx.params, 1, 0);
    EmbeddingTable b = export_embeddings(fx.graph, fx.store, fx.params, 1, 0);
    CHECK(a.rows == b.rows);
    CHECK(a.rows.rows() == fx.graph.node_count(1));
    CHECK(a.fingerprint == schema_fingerprint(fx.graph));
    CHECK(a.ids[0] == fx.graph.dictionary(1).external(0));
    CHECK_THROWS_AS(export_embeddings(fx.graph, fx.store, fx.params, 1, 99), ValidationError);
}

TEST_CASE("knn basics") {
    Rng rng(61, "knn");
    SECTION("two rows: the other row is the single neighbor for any k") {
        EmbeddingTable t = random_unit_table(rng, 2, 4);
        for (std::size_t k : {1u, 5u, 100u}) {
            auto got = knn(t, 0, k);
            REQUIRE(got.size() == 1);
            CHECK(got[0].first == 1);
        }
    }
    SECTION("duplicate embedding rows rank first with score 1") {
        EmbeddingTable t = random_unit_table(rng, 5, 4);
        for (std::size_t j = 0; j < 4; ++j) t.rows.at(3, j) = t.rows.at(0, j);
        auto got = knn(t, 0, 2);
        CHECK(got[0].first == 3);
        CHECK(got[0].second == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("unknown id / zero k rejected") {
        EmbeddingTable t = random_unit_table(rng, 3, 4);
        CHECK_THROWS_AS(knn(t, 17, 2), ValidationError);
        CHECK_THROWS_AS(knn(t, 0, 0), ValidationError);
    }
    SECTION("cosine symmetry: knn scores agree in both directions") {
        EmbeddingTable t = random_unit_table(rng, 20, 6);
        auto fwd = knn(t, 4, 1);
        REQUIRE(fwd.size() == 1);
        std::uint32_t b = fwd[0].first;
        auto back = knn(t, b, 19);
        for (const auto& [id, score] : back)
            if (id == 4) CHECK(score == fwd[0].second);
    }
}

TEST_CASE("knn matches the full-sort oracle including tie order") {
    Rng rng(67, "knn-oracle");
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 2 + rng.below(120);
        std::size_t d = 2 + rng.below(6);
        EmbeddingTable t = random_unit_table(rng, n, d);
        if (trial % 3 == 0 && n >= 4) {
            // plant exact duplicates to force score ties
            for (std::size_t j = 0; j < d; ++j) {
                t.rows.at(1, j) = t.rows.at(0, j);
                t.rows.at(3, j) = t.rows.at(2, j);
            }
        }
        std::uint32_t query = static_cast<std::uint32_t>(rng.below(n));
        std::size_t k = 1 + rng.below(12);
        auto got = knn(t, query, k);
        auto want = knn_oracle(t, query, k);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].first == want[i].first);
            CHECK(got[i].second == want[i].second);
        }
    }
}

TEST_CASE("knn is safe to call concurrently") {
    Rng rng(71, "knn-threads");
    EmbeddingTable t = random_unit_table(rng, 64, 8);
    std::vector<std::vector<std::pair<std::uint32_t, double>>> serial(64), threaded(64);
    for (std::uint32_t i = 0; i < 64; ++i) serial[i] = knn(t, i, 5);
    parallel_for(64, 4, [&](std::size_t i) {
        threaded[i] = knn(t, static_cast<std::uint32_t>(i), 5);
    });
    CHECK(serial == threaded);
}

TEST_CASE("spherical k-means") {
    Rng rng(73, "cluster");
    SECTION("K = N puts every node in its own cluster with inertia 0") {
        EmbeddingTable t = random_unit_table(rng, 12, 5);
        ClusterModel m = cluster(t, 12, 20, 3);
        std::set<std::uint32_t> used(m.assignment.begin(), m.assignment.end());
        CHECK(used.size() == 12);
        CHECK(m.inertia <= 1e-12);
    }
    SECTION("K = 1 centroid is the normalized mean") {
        EmbeddingTable t = random_unit_table(rng, 9, 4);
        ClusterModel m = cluster(t, 1, 10, 1);
        Tensor mean(1, 4);
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t j = 0; j < 4; ++j) mean.at(0, j) += t.rows.at(i, j);
        double norm = row_norm(mean, 0);
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(m.centroids.at(0, j) == Catch::Approx(mean.at(0, j) / norm).margin(1e-12));
    }
    SECTION("two antipodal bundles are recovered with K = 2") {
        EmbeddingTable t;
        t.type_name = "x";
        t.rows = Tensor(10, 3);
        Rng noise(5, "bundles");
        for (std::size_t i = 0; i < 10; ++i) {
            double base = i < 5 ? 1.0 : -1.0;
            double v[3] = {base + 0.05 * noise.normal(), 0.05 * noise.normal(),
                           0.05 * noise.normal()};
            double n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            for (std::size_t j = 0; j < 3; ++j) t.rows.at(i, j) = v[j] / std::sqrt(n2);
            t.ids.push_back("n" + std::to_string(i));
        }
        t.build_index();
        ClusterModel m = cluster(t, 2, 30, 11);
        for (std::size_t i = 1; i < 5; ++i) CHECK(m.assignment[i] == m.assignment[0]);
        for (std::size_t i = 6; i < 10; ++i) CHECK(m.assignment[i] == m.assignment[5]);
        CHECK(m.assignment[0] != m.assignment[5]);
    }
    SECTION("inertia trace is non-increasing on random tables") {
        for (int trial = 0; trial < 5; ++trial) {
            EmbeddingTable t = random_unit_table(rng, 30 + rng.below(40), 6);
            ClusterModel m = cluster(t, 1 + rng.below(8), 25, trial);
            for (std::size_t i = 1; i < m.inertia_trace.size(); ++i)
                CHECK(m.inertia_trace[i] <= m.inertia_trace[i - 1] + 1e-10);
        }
    }
    SECTION("K out of range is rejected") {
        EmbeddingTable t = random_unit_table(rng, 4, 3);
        CHECK_THROWS_AS(cluster(t, 0, 10, 1), ValidationError);
        CHECK_THROWS_AS(cluster(t, 5, 10, 1), ValidationError);
    }
}

TEST_CASE("project_subgraph shares the semantic-edge rule") {
    // Two users engage one item: user-user edge via the forward direction,
    // item-item empty via the reverse (no item pair shares a user... the one
    // item has both users, so reversing gives nothing to pair).
    GraphSchema schema = parse_schema_json(R"({
        "node_types": [
            {"name": "user", "blocks": [2]},
            {"name": "item", "blocks": [2]}
        ],
        "relations": [{"name": "engage", "src": "user", "dst": "item", "kind": "engagement"}]
    })");
    std::istringstream edges("engage\tu1\ta1\t1\nengage\tu2\ta1\t1\n");
    HeteroGraph g = ingest_edges(edges, schema);
    int rid = g.relation_id_of("engage");

    auto user_user = project_subgraph(g, 0, rid, 5, 0.0);
    REQUIRE(user_user.size() == 2);  // symmetric pair
    CHECK(user_user[0].weight == 1.0);

    auto item_item = project_subgraph(g, 1, rid, 5, 0.0);
    CHECK(item_item.empty());

    CHECK_THROWS_AS(project_subgraph(g, 0, g.relation_id_of("__self__item"), 5, 0.0),
                    ValidationError);

    SECTION("projection equals derive_semantic_edges on identical inputs") {
        HeteroGraph g2 = derive_semantic_edges(g, rid, "uu", 5, 0.0);
        const auto& sem = g2.edges(g2.relation_id_of("uu"));
        REQUIRE(sem.size() == user_user.size());
        for (std::size_t i = 0; i < sem.size(); ++i) {
            CHECK(sem[i].src == user_user[i].src);
            CHECK(sem[i].dst == user_user[i].dst);
            CHECK(sem[i].weight == user_user[i].weight);
        }
    }

    SECTION("projection TSV round-trips through ingestion") {
        std::ostringstream os;
        write_projection(os, g, 0, "uu", user_user);
        GraphSchema uu_schema = parse_schema_json(R"({
            "node_types": [{"name": "user", "blocks": [2]}],
            "relations": [{"name": "uu", "src": "user", "dst": "user", "kind": "engagement"}]
        })");
        std::istringstream in(os.str());
        HeteroGraph round = ingest_edges(in, uu_schema);
        CHECK(round.edges(round.relation_id_of("uu")).size() == user_user.size());
    }
}

TEST_CASE("embedding table files round-trip bitwise") {
    SelfTestFixture fx = make_gradcheck_fixture(81);
    EmbeddingTable t = export_embeddings(fx.graph, fx.store, fx.params, 0, 1);
    auto dir = std::filesystem::temp_directory_path() / "rg_table_test";
    std::filesystem::create_directories(dir);
    std::string path = (dir / "t.rge").string();
    save_table_files(path, t);
    save_table_files((dir / "t2.rge").string(), t);

    // identical exports produce identical bytes
    std::ifstream f1(path, std::ios::binary), f2((dir / "t2.rge").string(), std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());

    EmbeddingTable back = load_table_files(path);
    CHECK(back.rows == t.rows);
    CHECK(back.ids == t.ids);
    CHECK(back.fingerprint == t.fingerprint);
    CHECK(back.head == t.head);
    CHECK(back.type_name == t.type_name);
    std::filesystem::remove_all(dir);
}

TEST_CASE("graph tokens: round trip and fingerprint gate") {
    SelfTestFixture fx = make_gradcheck_fixture(83);
    EmbeddingTable t = export_embeddings(fx.graph, fx.store, fx.params, 1, 0);
    std::stringstream ss;
    export_graph_tokens(ss, t);

    GraphTokens tokens = read_graph_tokens(ss, t.fingerprint);
    CHECK(tokens.rows == t.rows);  // bitwise-equal vectors
    REQUIRE(tokens.id_hashes.size() == t.ids.size());
    for (std::size_t i = 0; i < t.ids.size(); ++i)
        CHECK(tokens.id_hashes[i] == fnv1a64(t.ids[i]));

    std::stringstream ss2;
    export_graph_tokens(ss2, t);
    std::array<std::uint8_t, 32> wrong = t.fingerprint;
    wrong[0] ^= 0xff;
    CHECK_THROWS_AS(read_graph_tokens(ss2, wrong), ValidationError);
}

TEST_CASE("checkpoint: save/load round trip and fingerprint mismatch") {
    SelfTestFixture fx = make_gradcheck_fixture(85);
    std::stringstream ss;
    save_checkpoint(ss, fx.params, schema_fingerprint_hex(fx.graph));
    ModelParams back = load_checkpoint(ss, fx.graph);
    REQUIRE(back.values.size() == fx.params.values.size());
    for (std::size_t i = 0; i < back.values.size(); ++i)
        CHECK(back.values[i] == fx.params.values[i]);
    CHECK(back.names == fx.params.names);

    // a graph with a different schema must be rejected
    GraphSchema other = parse_schema_json(R"({
        "node_types": [{"name": "z", "blocks": [2]}],
        "relations": [{"name": "r", "src": "z", "dst": "z", "kind": "engagement"}]
    })");
    std::istringstream edges("r\ta\tb\t1\n");
    HeteroGraph og = ingest_edges(edges, other);
    std::stringstream ss2;
    save_checkpoint(ss2, fx.params, schema_fingerprint_hex(fx.graph));
    CHECK_THROWS_AS(load_checkpoint(ss2, og), ValidationError);
}
