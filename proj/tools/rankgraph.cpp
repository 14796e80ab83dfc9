// rankgraph: command-line front end wiring graph construction, training,
// serving and evaluation into reproducible pipelines. Every subcommand
// accepts --seed/--config/--out, writes a manifest (input digests, resolved
// config, seed) before its outputs, and exits 0 on success, 1 on validation
// errors, 2 on runtime errors.

#include "rankgraph/checkpoint.hpp"
#include "rankgraph/config.hpp"
#include "rankgraph/eval.hpp"
#include "rankgraph/graph_io.hpp"
#include "rankgraph/manifest.hpp"
#include "rankgraph/parallel.hpp"
#include "rankgraph/selftest.hpp"
#include "rankgraph/serving.hpp"
#include "rankgraph/synthetic.hpp"
#include "rankgraph/train.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

namespace fs = std::filesystem;
using namespace rankgraph;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string config_path;
    std::string out;
    std::size_t threads = 1;
};

void add_common(CLI::App* sub, Common& c, bool out_required = true) {
    sub->add_option("--seed", c.seed, "Seed for all randomness in this run");
    sub->add_option("--config", c.config_path, "JSON config file");
    auto* out = sub->add_option("--out", c.out, "Output path");
    if (out_required) out->required();
    sub->add_option("--threads", c.threads, "Worker threads where supported (default 1)");
}

RunConfig resolve_config(const Common& c) {
    if (c.config_path.empty()) return RunConfig{};
    return load_run_config(c.config_path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << text;
}

RunManifest start_manifest(const std::string& subcommand, const Common& c, const RunConfig& cfg,
                           const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs) {
    RunManifest m;
    m.subcommand = subcommand;
    m.resolved_config = run_config_to_json(cfg);
    m.seed = c.seed;
    for (const auto& p : inputs) m.add_input(p);
    m.outputs = outputs;
    return m;
}

std::string manifest_path(const std::string& out_path) { return out_path + ".manifest.json"; }

void print_recall(const RecallReport& r) {
    std::cout.precision(10);
    for (std::size_t i = 0; i < r.k_values.size(); ++i)
        std::cout << "recall@" << r.k_values[i] << '\t' << r.recall_at_k[i] << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RankGraph: heterogeneous graph embeddings, retrieval and recall evaluation"};
    app.require_subcommand(1);

    int rc = 0;

    // ---- generate -------------------------------------------------------
    Common gen_c;
    auto* gen = app.add_subcommand("generate", "Write a synthetic planted-partition dataset");
    add_common(gen, gen_c);
    gen->callback([&]() {
        RunConfig cfg = resolve_config(gen_c);
        fs::create_directories(gen_c.out);
        SyntheticDataset data = generate_synthetic(cfg.synthetic, gen_c.seed);
        std::vector<std::string> outputs = {gen_c.out + "/schema.json", gen_c.out + "/edges.tsv",
                                            gen_c.out + "/next_edges.tsv",
                                            gen_c.out + "/features.tsv", gen_c.out + "/log.tsv"};
        RunManifest m = start_manifest("generate", gen_c, cfg, {}, outputs);
        write_manifest(gen_c.out + "/manifest.json", m);
        write_text(outputs[0], data.schema_json);
        write_text(outputs[1], data.edges_tsv);
        write_text(outputs[2], data.next_edges_tsv);
        write_text(outputs[3], data.features_tsv);
        write_text(outputs[4], data.log_tsv);
        std::cout << "wrote synthetic dataset to " << gen_c.out << '\n';
    });

    // ---- ingest ---------------------------------------------------------
    Common ing_c;
    std::string ing_schema, ing_edges;
    auto* ing = app.add_subcommand("ingest", "Build a graph binary from a schema and edge TSV");
    add_common(ing, ing_c);
    ing->add_option("--schema", ing_schema, "Schema JSON")->required();
    ing->add_option("--edges", ing_edges, "Edge TSV")->required();
    ing->callback([&]() {
        RunConfig cfg = resolve_config(ing_c);
        GraphSchema schema = load_schema(ing_schema);
        HeteroGraph g = ingest_edges_file(ing_edges, schema);
        RunManifest m = start_manifest("ingest", ing_c, cfg, {ing_schema, ing_edges},
                                       {ing_c.out, ing_c.out + ".ids.tsv"});
        write_manifest(manifest_path(ing_c.out), m);
        save_graph_file(ing_c.out, g);
        std::ofstream ids(ing_c.out + ".ids.tsv");
        write_id_dictionary(ids, g);
        std::size_t nodes = 0;
        for (const auto& t : g.node_types()) nodes += g.node_count(t.type_id);
        std::cout << "graph: " << nodes << " nodes, " << g.total_edges()
                  << " edges (self-loops included)\n";
    });

    // ---- semantic-edges -------------------------------------------------
    Common sem_c;
    std::string sem_graph, sem_via, sem_name;
    std::size_t sem_topk = 10;
    double sem_minw = 0.0;
    auto* sem = app.add_subcommand("semantic-edges",
                                   "Derive a same-type semantic relation from co-engagement");
    add_common(sem, sem_c);
    sem->add_option("--graph", sem_graph, "Graph binary")->required();
    sem->add_option("--via", sem_via, "Relation to project over")->required();
    sem->add_option("--name", sem_name, "Name of the new relation")->required();
    sem->add_option("--top-k", sem_topk, "Partners kept per node");
    sem->add_option("--min-weight", sem_minw, "Minimum projected weight");
    sem->callback([&]() {
        RunConfig cfg = resolve_config(sem_c);
        HeteroGraph g = load_graph_file(sem_graph);
        HeteroGraph g2 =
            derive_semantic_edges(g, g.relation_id_of(sem_via), sem_name, sem_topk, sem_minw);
        RunManifest m = start_manifest("semantic-edges", sem_c, cfg, {sem_graph}, {sem_c.out});
        write_manifest(manifest_path(sem_c.out), m);
        save_graph_file(sem_c.out, g2);
        std::cout << "added relation '" << sem_name << "' with "
                  << g2.edges(g2.relation_id_of(sem_name)).size() << " directed edges\n";
    });

    // ---- train ----------------------------------------------------------
    Common tr_c;
    std::string tr_graph, tr_features;
    std::int64_t tr_steps = -1;
    auto* tr = app.add_subcommand("train", "Contrastive training; writes a checkpoint");
    add_common(tr, tr_c);
    tr->add_option("--graph", tr_graph, "Graph binary")->required();
    tr->add_option("--features", tr_features, "Feature TSV")->required();
    tr->add_option("--steps", tr_steps, "Override training steps from config");
    tr->callback([&]() {
        RunConfig cfg = resolve_config(tr_c);
        if (tr_steps >= 0) cfg.training.steps = static_cast<std::size_t>(tr_steps);
        HeteroGraph g = load_graph_file(tr_graph);
        FeatureStore store = load_features_file(tr_features, g);
        RunManifest m = start_manifest("train", tr_c, cfg, {tr_graph, tr_features},
                                       {tr_c.out, tr_c.out + ".metrics.tsv"});
        write_manifest(manifest_path(tr_c.out), m);
        TrainResult result = train(g, store, cfg.model, cfg.training, tr_c.seed);
        save_checkpoint_file(tr_c.out, result.params, schema_fingerprint_hex(g));
        std::ofstream metrics(tr_c.out + ".metrics.tsv");
        write_metrics(metrics, result.log);
        if (!result.log.empty())
            std::cout << "trained " << result.log.size() << " steps, loss "
                      << result.log.front().loss << " -> " << result.log.back().loss << '\n';
        else
            std::cout << "trained 0 steps (checkpoint equals init)\n";
    });

    // ---- embed ----------------------------------------------------------
    Common em_c;
    std::string em_ckpt, em_graph, em_features, em_type;
    std::size_t em_head = 0;
    auto* em = app.add_subcommand("embed", "Export an embedding table for one node type");
    add_common(em, em_c);
    em->add_option("--checkpoint", em_ckpt, "Checkpoint file")->required();
    em->add_option("--graph", em_graph, "Graph binary")->required();
    em->add_option("--features", em_features, "Feature TSV")->required();
    em->add_option("--type", em_type, "Node type name")->required();
    em->add_option("--head", em_head, "Output head index");
    em->callback([&]() {
        RunConfig cfg = resolve_config(em_c);
        HeteroGraph g = load_graph_file(em_graph);
        FeatureStore store = load_features_file(em_features, g);
        ModelParams params = load_checkpoint_file(em_ckpt, g);
        EmbeddingTable table = export_embeddings(g, store, params, g.type_id_of(em_type), em_head);
        RunManifest m = start_manifest("embed", em_c, cfg, {em_ckpt, em_graph, em_features},
                                       {em_c.out, em_c.out + ".ids.tsv"});
        write_manifest(manifest_path(em_c.out), m);
        save_table_files(em_c.out, table);
        std::cout << "embedded " << table.rows.rows() << " '" << em_type << "' nodes (head "
                  << em_head << ")\n";
    });

    // ---- retrieve -------------------------------------------------------
    Common re_c;
    std::string re_table, re_ids;
    std::size_t re_k = 10;
    auto* re = app.add_subcommand("retrieve", "Exact kNN for the listed external ids");
    add_common(re, re_c, /*out_required=*/false);
    re->add_option("--table", re_table, "Embedding table")->required();
    re->add_option("--ids", re_ids, "Comma-separated external ids")->required();
    re->add_option("--k", re_k, "Neighbors per query");
    re->callback([&]() {
        EmbeddingTable table = load_table_files(re_table);
        std::vector<std::string> queries;
        std::stringstream ss(re_ids);
        std::string id;
        while (std::getline(ss, id, ',')) queries.push_back(id);
        std::vector<std::string> blocks(queries.size());
        parallel_for(queries.size(), re_c.threads, [&](std::size_t qi) {
            std::int64_t local = table.lookup(queries[qi]);
            if (local < 0) fail_validation("retrieve: unknown id '" + queries[qi] + "'");
            std::ostringstream os;
            os.precision(10);
            auto nbrs = knn(table, static_cast<std::uint32_t>(local), re_k);
            for (std::size_t r = 0; r < nbrs.size(); ++r)
                os << queries[qi] << '\t' << r + 1 << '\t' << table.ids[nbrs[r].first] << '\t'
                   << nbrs[r].second << '\n';
            blocks[qi] = os.str();
        });
        std::string text;
        for (const auto& b : blocks) text += b;
        std::cout << text;
        if (!re_c.out.empty()) write_text(re_c.out, text);
    });

    // ---- cluster ----------------------------------------------------------
    Common cl_c;
    std::string cl_table;
    std::size_t cl_k = 8, cl_iters = 50;
    auto* cl = app.add_subcommand("cluster", "Spherical k-means over an embedding table");
    add_common(cl, cl_c);
    cl->add_option("--table", cl_table, "Embedding table")->required();
    cl->add_option("--clusters", cl_k, "Cluster count K");
    cl->add_option("--max-iters", cl_iters, "Iteration cap");
    cl->callback([&]() {
        RunConfig cfg = resolve_config(cl_c);
        EmbeddingTable table = load_table_files(cl_table);
        RunManifest m = start_manifest("cluster", cl_c, cfg, {cl_table}, {cl_c.out});
        write_manifest(manifest_path(cl_c.out), m);
        ClusterModel model = cluster(table, cl_k, cl_iters, cl_c.seed);
        std::ostringstream os;
        for (std::size_t i = 0; i < model.assignment.size(); ++i)
            os << table.ids[i] << '\t' << model.assignment[i] << '\n';
        write_text(cl_c.out, os.str());
        std::cout.precision(10);
        std::cout << "K=" << cl_k << " inertia=" << model.inertia << " iterations="
                  << model.inertia_trace.size() << '\n';
    });

    // ---- subgraph ---------------------------------------------------------
    Common sg_c;
    std::string sg_graph, sg_type, sg_via, sg_rel = "projected";
    std::size_t sg_topk = 10;
    double sg_minw = 0.0;
    auto* sg = app.add_subcommand("subgraph",
                                  "Project a homogeneous co-engagement graph (item-item, user-user)");
    add_common(sg, sg_c);
    sg->add_option("--graph", sg_graph, "Graph binary")->required();
    sg->add_option("--type", sg_type, "Endpoint node type")->required();
    sg->add_option("--via", sg_via, "Relation to project over")->required();
    sg->add_option("--top-k", sg_topk, "Partners kept per node");
    sg->add_option("--min-weight", sg_minw, "Minimum projected weight");
    sg->add_option("--relation-name", sg_rel, "Relation name in the output TSV");
    sg->callback([&]() {
        RunConfig cfg = resolve_config(sg_c);
        HeteroGraph g = load_graph_file(sg_graph);
        int type_id = g.type_id_of(sg_type);
        std::vector<EdgeRecord> edges =
            project_subgraph(g, type_id, g.relation_id_of(sg_via), sg_topk, sg_minw);
        RunManifest m = start_manifest("subgraph", sg_c, cfg, {sg_graph}, {sg_c.out});
        write_manifest(manifest_path(sg_c.out), m);
        std::ofstream out(sg_c.out);
        if (!out) throw std::runtime_error("cannot write: " + sg_c.out);
        write_projection(out, g, type_id, sg_rel, edges);
        std::cout << "projected " << edges.size() << " directed edges over type '" << sg_type
                  << "'\n";
    });

    // ---- export-tokens ------------------------------------------------------
    Common tk_c;
    std::string tk_table;
    auto* tk = app.add_subcommand("export-tokens",
                                  "Write embeddings as graph tokens for sequence-model consumers");
    add_common(tk, tk_c);
    tk->add_option("--table", tk_table, "Embedding table")->required();
    tk->callback([&]() {
        RunConfig cfg = resolve_config(tk_c);
        EmbeddingTable table = load_table_files(tk_table);
        RunManifest m = start_manifest("export-tokens", tk_c, cfg, {tk_table}, {tk_c.out});
        write_manifest(manifest_path(tk_c.out), m);
        std::ofstream out(tk_c.out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write: " + tk_c.out);
        export_graph_tokens(out, table);
        std::cout << "exported " << table.rows.rows() << " graph tokens\n";
    });

    // ---- eval-edge-recall -----------------------------------------------------
    Common er_c;
    std::string er_tables, er_graph;
    auto* er = app.add_subcommand("eval-edge-recall",
                                  "Recall of next-period edges among sampled-edge endpoints");
    add_common(er, er_c);
    er->add_option("--tables", er_tables, "Comma-separated embedding tables")->required();
    er->add_option("--next-graph", er_graph, "Next-period graph binary")->required();
    er->callback([&]() {
        RunConfig cfg = resolve_config(er_c);
        std::vector<EmbeddingTable> tables;
        std::stringstream ss(er_tables);
        std::string path;
        std::vector<std::string> inputs{er_graph};
        while (std::getline(ss, path, ',')) {
            tables.push_back(load_table_files(path));
            inputs.push_back(path);
        }
        std::vector<const EmbeddingTable*> refs;
        for (const auto& t : tables) refs.push_back(&t);
        HeteroGraph next = load_graph_file(er_graph);
        EdgeRecallConfig ecfg = cfg.eval.edge;
        ecfg.seed = er_c.seed;
        RecallReport report = eval_edge_recall(refs, next, ecfg);
        RunManifest m = start_manifest("eval-edge-recall", er_c, cfg, inputs, {er_c.out});
        write_manifest(manifest_path(er_c.out), m);
        nlohmann::json j = report.to_json();
        j["config"] = run_config_to_json(cfg)["eval"]["edge_recall"];
        write_text(er_c.out, j.dump(2) + "\n");
        print_recall(report);
    });

    // ---- eval-engagement-recall ---------------------------------------------
    Common en_c;
    std::string en_table, en_log;
    auto* en = app.add_subcommand("eval-engagement-recall",
                                  "Trigger-based future-engagement recall from a temporal log");
    add_common(en, en_c);
    en->add_option("--table", en_table, "Item embedding table")->required();
    en->add_option("--log", en_log, "Interaction log TSV")->required();
    en->callback([&]() {
        RunConfig cfg = resolve_config(en_c);
        EmbeddingTable table = load_table_files(en_table);
        InteractionLog log = load_interaction_log_file(en_log);
        RecallReport report = eval_engagement_recall(table, log, cfg.eval.engagement);
        RunManifest m = start_manifest("eval-engagement-recall", en_c, cfg, {en_table, en_log},
                                       {en_c.out});
        write_manifest(manifest_path(en_c.out), m);
        nlohmann::json j = report.to_json();
        j["config"] = run_config_to_json(cfg)["eval"]["engagement"];
        write_text(en_c.out, j.dump(2) + "\n");
        print_recall(report);
    });

    // ---- grad-check -----------------------------------------------------------
    Common gc_c;
    double gc_eps = 1e-5;
    auto* gc = app.add_subcommand("grad-check",
                                  "Full-model gradient self-test on a built-in 10-node fixture");
    add_common(gc, gc_c, /*out_required=*/false);
    gc->add_option("--epsilon", gc_eps, "Finite-difference step");
    gc->callback([&]() {
        double err = run_gradcheck(gc_c.seed == 0 ? 7 : gc_c.seed, gc_eps);
        std::cout.precision(10);
        std::cout << "max relative error = " << err << " (threshold 1e-4)\n";
        if (!(err <= 1e-4)) {
            std::cerr << "grad-check FAILED\n";
            rc = 2;
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return rc;
}
