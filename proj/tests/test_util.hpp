#pragma once

// Shared helpers for the test suites: materialize an in-memory synthetic
// dataset into graph/store/log objects without touching the filesystem.

#include "rankgraph/eval.hpp"
#include "rankgraph/features.hpp"
#include "rankgraph/graph_io.hpp"
#include "rankgraph/synthetic.hpp"

#include <sstream>

namespace rankgraph::testutil {

struct Materialized {
    HeteroGraph graph;
    FeatureStore store;
    HeteroGraph next_graph;
    InteractionLog log;
};

inline Materialized materialize(const SyntheticDataset& data) {
    GraphSchema schema = parse_schema_json(data.schema_json);
    std::istringstream edges(data.edges_tsv);
    HeteroGraph g = ingest_edges(edges, schema);
    std::istringstream feats(data.features_tsv);
    FeatureStore store = load_features(feats, g);
    std::istringstream next(data.next_edges_tsv);
    HeteroGraph ng = ingest_edges(next, schema);
    std::istringstream logss(data.log_tsv);
    InteractionLog log = load_interaction_log(logss);
    return Materialized{std::move(g), std::move(store), std::move(ng), std::move(log)};
}

}  // namespace rankgraph::testutil
