#pragma once

#include "rankgraph/eval.hpp"
#include "rankgraph/model.hpp"
#include "rankgraph/synthetic.hpp"
#include "rankgraph/train.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace rankgraph {

struct EvalSection {
    std::size_t head = 0;
    EdgeRecallConfig edge;
    EngagementRecallConfig engagement;
};

// Everything a run can configure, in one JSON file shared by the CLI
// subcommands. Unknown keys are rejected so typos fail loudly.
struct RunConfig {
    ModelConfig model;
    TrainConfig training;
    SyntheticConfig synthetic;
    EvalSection eval;
};

namespace detail_config {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& known,
                       const std::string& section) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            fail_validation("config: unknown key '" + it.key() + "' in section '" + section + "'");
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail_config

inline RunConfig parse_run_config(const std::string& text) {
    namespace dc = detail_config;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail_validation(std::string("config: invalid JSON: ") + e.what());
    }
    dc::check_keys(j, {"model", "training", "synthetic", "eval"}, "<root>");
    RunConfig c;

    if (j.contains("model")) {
        const auto& m = j["model"];
        dc::check_keys(m, {"d", "d_out", "layers", "heads", "encoder_hidden", "relation_hidden"},
                       "model");
        dc::get_if(m, "d", c.model.d);
        dc::get_if(m, "d_out", c.model.d_out);
        dc::get_if(m, "layers", c.model.layers);
        dc::get_if(m, "heads", c.model.heads);
        dc::get_if(m, "encoder_hidden", c.model.encoder_hidden);
        dc::get_if(m, "relation_hidden", c.model.relation_hidden);
        c.model.validate();
    }

    if (j.contains("training")) {
        const auto& t = j["training"];
        dc::check_keys(t,
                       {"steps", "batch_size", "lr", "beta1", "beta2", "eps", "margin",
                        "temperature", "alpha", "beta", "n_neg", "pool_capacity",
                        "semantic_negatives", "detach_semantic", "symmetric_anchors", "relations",
                        "checked"},
                       "training");
        dc::get_if(t, "steps", c.training.steps);
        dc::get_if(t, "batch_size", c.training.batch_size);
        dc::get_if(t, "lr", c.training.lr);
        dc::get_if(t, "beta1", c.training.beta1);
        dc::get_if(t, "beta2", c.training.beta2);
        dc::get_if(t, "eps", c.training.eps);
        dc::get_if(t, "margin", c.training.loss.margin);
        dc::get_if(t, "temperature", c.training.loss.temperature);
        dc::get_if(t, "alpha", c.training.loss.alpha);
        dc::get_if(t, "beta", c.training.loss.beta);
        dc::get_if(t, "n_neg", c.training.loss.n_neg);
        dc::get_if(t, "pool_capacity", c.training.loss.pool_capacity);
        dc::get_if(t, "semantic_negatives", c.training.loss.semantic_negatives);
        dc::get_if(t, "detach_semantic", c.training.loss.detach_semantic);
        dc::get_if(t, "symmetric_anchors", c.training.symmetric_anchors);
        dc::get_if(t, "relations", c.training.train_relations);
        dc::get_if(t, "checked", c.training.checked);
        c.training.validate();
    }

    if (j.contains("synthetic")) {
        const auto& s = j["synthetic"];
        dc::check_keys(s,
                       {"users", "items", "communities", "p_in", "p_out", "intra_weight",
                        "inter_weight", "feature_dim", "noise", "log_hours", "events_per_hour",
                        "interaction_weights"},
                       "synthetic");
        dc::get_if(s, "users", c.synthetic.users);
        dc::get_if(s, "items", c.synthetic.items);
        dc::get_if(s, "communities", c.synthetic.communities);
        dc::get_if(s, "p_in", c.synthetic.p_in);
        dc::get_if(s, "p_out", c.synthetic.p_out);
        dc::get_if(s, "intra_weight", c.synthetic.intra_weight);
        dc::get_if(s, "inter_weight", c.synthetic.inter_weight);
        dc::get_if(s, "feature_dim", c.synthetic.feature_dim);
        dc::get_if(s, "noise", c.synthetic.noise);
        dc::get_if(s, "log_hours", c.synthetic.log_hours);
        dc::get_if(s, "events_per_hour", c.synthetic.events_per_hour);
        if (s.contains("interaction_weights"))
            c.synthetic.interaction_weights =
                s.at("interaction_weights").get<std::map<std::string, double>>();
        c.synthetic.validate();
    }

    if (j.contains("eval")) {
        const auto& e = j["eval"];
        dc::check_keys(e, {"head", "edge_recall", "engagement"}, "eval");
        dc::get_if(e, "head", c.eval.head);
        if (e.contains("edge_recall")) {
            const auto& er = e["edge_recall"];
            dc::check_keys(er, {"sample_size", "k", "relations"}, "eval.edge_recall");
            dc::get_if(er, "sample_size", c.eval.edge.sample_size);
            dc::get_if(er, "k", c.eval.edge.k_values);
            dc::get_if(er, "relations", c.eval.edge.relations);
        }
        if (e.contains("engagement")) {
            const auto& en = e["engagement"];
            dc::check_keys(en, {"t", "window", "neighbors", "horizon", "k", "type_weights"},
                           "eval.engagement");
            dc::get_if(en, "t", c.eval.engagement.eval_hour);
            dc::get_if(en, "window", c.eval.engagement.trigger_window);
            dc::get_if(en, "neighbors", c.eval.engagement.neighbors_per_trigger);
            dc::get_if(en, "horizon", c.eval.engagement.horizon);
            dc::get_if(en, "k", c.eval.engagement.k_values);
            if (en.contains("type_weights"))
                c.eval.engagement.type_weights =
                    en.at("type_weights").get<std::map<std::string, double>>();
        }
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_validation("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

// Resolved-config echo for manifests and reports.
inline nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["model"] = {{"d", c.model.d},
                  {"d_out", c.model.d_out},
                  {"layers", c.model.layers},
                  {"heads", c.model.heads},
                  {"encoder_hidden", c.model.encoder_hidden},
                  {"relation_hidden", c.model.relation_hidden}};
    j["training"] = {{"steps", c.training.steps},
                     {"batch_size", c.training.batch_size},
                     {"lr", c.training.lr},
                     {"beta1", c.training.beta1},
                     {"beta2", c.training.beta2},
                     {"eps", c.training.eps},
                     {"margin", c.training.loss.margin},
                     {"temperature", c.training.loss.temperature},
                     {"alpha", c.training.loss.alpha},
                     {"beta", c.training.loss.beta},
                     {"n_neg", c.training.loss.n_neg},
                     {"pool_capacity", c.training.loss.pool_capacity},
                     {"semantic_negatives", c.training.loss.semantic_negatives},
                     {"detach_semantic", c.training.loss.detach_semantic},
                     {"symmetric_anchors", c.training.symmetric_anchors},
                     {"relations", c.training.train_relations},
                     {"checked", c.training.checked}};
    j["synthetic"] = {{"users", c.synthetic.users},
                      {"items", c.synthetic.items},
                      {"communities", c.synthetic.communities},
                      {"p_in", c.synthetic.p_in},
                      {"p_out", c.synthetic.p_out},
                      {"intra_weight", c.synthetic.intra_weight},
                      {"inter_weight", c.synthetic.inter_weight},
                      {"feature_dim", c.synthetic.feature_dim},
                      {"noise", c.synthetic.noise},
                      {"log_hours", c.synthetic.log_hours},
                      {"events_per_hour", c.synthetic.events_per_hour},
                      {"interaction_weights", c.synthetic.interaction_weights}};
    j["eval"] = {{"head", c.eval.head},
                 {"edge_recall",
                  {{"sample_size", c.eval.edge.sample_size},
                   {"k", c.eval.edge.k_values},
                   {"relations", c.eval.edge.relations}}},
                 {"engagement",
                  {{"t", c.eval.engagement.eval_hour},
                   {"window", c.eval.engagement.trigger_window},
                   {"neighbors", c.eval.engagement.neighbors_per_trigger},
                   {"horizon", c.eval.engagement.horizon},
                   {"k", c.eval.engagement.k_values},
                   {"type_weights", c.eval.engagement.type_weights}}}};
    return j;
}

}  // namespace rankgraph
