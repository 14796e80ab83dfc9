#pragma once

#include "rankgraph/error.hpp"
#include "rankgraph/features.hpp"
#include "rankgraph/rng.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace rankgraph {

// Planted-partition generator: users and items share C hidden communities,
// intra-community engagement is denser than inter, features are community
// centroids plus Gaussian noise, and a temporal log draws from the same
// preference so both recall protocols have consistent ground truth.
struct SyntheticConfig {
    std::size_t users = 200;
    std::size_t items = 200;
    std::size_t communities = 8;
    double p_in = 0.2;
    double p_out = 0.01;
    double intra_weight = 1.0;
    double inter_weight = 1.0;
    std::size_t feature_dim = 16;
    double noise = 0.25;
    std::size_t log_hours = 173;        // covers [t-window, t+horizon] at defaults
    std::size_t events_per_hour = 40;
    std::map<std::string, double> interaction_weights{{"click", 1.0}, {"like", 2.0}, {"share", 3.0}};

    void validate() const {
        if (communities < 2) fail_validation("synthetic: needs at least 2 communities");
        if (p_in <= p_out)
            fail_validation("synthetic: p_in must exceed p_out (no learnable signal)");
        if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0)
            fail_validation("synthetic: probabilities must lie in [0, 1]");
        if (users < communities || items < communities)
            fail_validation("synthetic: need at least one user and item per community");
        if (feature_dim == 0) fail_validation("synthetic: feature_dim must be >= 1");
        if (interaction_weights.empty())
            fail_validation("synthetic: needs at least one interaction type");
    }
};

struct SyntheticDataset {
    std::string schema_json;
    std::string edges_tsv;       // training period
    std::string next_edges_tsv;  // held-out next period, same distribution
    std::string features_tsv;
    std::string log_tsv;
};

namespace detail {

inline std::string format_weight(double w) {
    std::ostringstream os;
    os.precision(17);
    os << w;
    return os.str();
}

}  // namespace detail

inline SyntheticDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t C = cfg.communities;
    auto user_comm = [&](std::size_t u) { return u % C; };
    auto item_comm = [&](std::size_t i) { return i % C; };

    std::vector<std::vector<std::size_t>> items_of(C);
    for (std::size_t i = 0; i < cfg.items; ++i) items_of[item_comm(i)].push_back(i);
    std::vector<std::vector<std::size_t>> users_of(C);
    for (std::size_t u = 0; u < cfg.users; ++u) users_of[user_comm(u)].push_back(u);

    SyntheticDataset out;
    {
        std::ostringstream os;
        os << "{\n"
           << "  \"node_types\": [\n"
           << "    {\"name\": \"user\", \"blocks\": [" << cfg.feature_dim << "]},\n"
           << "    {\"name\": \"item\", \"blocks\": [" << cfg.feature_dim << "]}\n"
           << "  ],\n"
           << "  \"relations\": [\n"
           << "    {\"name\": \"engage\", \"src\": \"user\", \"dst\": \"item\", \"kind\": \"engagement\"},\n"
           << "    {\"name\": \"engage_rev\", \"src\": \"item\", \"dst\": \"user\", \"kind\": \"engagement\"}\n"
           << "  ]\n"
           << "}\n";
        out.schema_json = os.str();
    }

    // Unit centroids per (type, community), then per-node noisy copies.
    Rng centroid_rng(seed, "synthetic/centroids");
    auto draw_centroids = [&](std::size_t count) {
        std::vector<std::vector<double>> cs(count, std::vector<double>(cfg.feature_dim));
        for (auto& c : cs) {
            double norm2 = 0.0;
            for (double& x : c) {
                x = centroid_rng.normal();
                norm2 += x * x;
            }
            double norm = std::sqrt(norm2);
            if (norm < 1e-12) {
                c[0] = 1.0;
            } else {
                for (double& x : c) x /= norm;
            }
        }
        return cs;
    };
    auto user_centroids = draw_centroids(C);
    auto item_centroids = draw_centroids(C);

    Rng feature_rng(seed, "synthetic/features");
    {
        std::ostringstream os;
        std::vector<double> row(cfg.feature_dim);
        for (std::size_t u = 0; u < cfg.users; ++u) {
            for (std::size_t j = 0; j < cfg.feature_dim; ++j)
                row[j] = user_centroids[user_comm(u)][j] + cfg.noise * feature_rng.normal();
            write_feature_line(os, "user", "u" + std::to_string(u), 0, row);
        }
        for (std::size_t i = 0; i < cfg.items; ++i) {
            for (std::size_t j = 0; j < cfg.feature_dim; ++j)
                row[j] = item_centroids[item_comm(i)][j] + cfg.noise * feature_rng.normal();
            write_feature_line(os, "item", "i" + std::to_string(i), 0, row);
        }
        out.features_tsv = os.str();
    }

    // Bernoulli engagement edges; both directions are materialized so message
    // passing reaches users as well as items.
    auto draw_edges = [&](Rng& rng, bool ensure_degree) {
        std::ostringstream os;
        std::vector<char> user_has(cfg.users, 0), item_has(cfg.items, 0);
        auto emit = [&](std::size_t u, std::size_t i, double w) {
            std::string ws = detail::format_weight(w);
            os << "engage\tu" << u << "\ti" << i << '\t' << ws << '\n';
            os << "engage_rev\ti" << i << "\tu" << u << '\t' << ws << '\n';
            user_has[u] = 1;
            item_has[i] = 1;
        };
        for (std::size_t u = 0; u < cfg.users; ++u)
            for (std::size_t i = 0; i < cfg.items; ++i) {
                bool same = user_comm(u) == item_comm(i);
                double p = same ? cfg.p_in : cfg.p_out;
                if (rng.uniform() < p) emit(u, i, same ? cfg.intra_weight : cfg.inter_weight);
            }
        if (ensure_degree) {
            // Isolated nodes get one intra edge so every node is trainable
            // and resolvable by the eval protocols.
            for (std::size_t u = 0; u < cfg.users; ++u) {
                if (user_has[u]) continue;
                const auto& pool = items_of[user_comm(u)];
                emit(u, pool[rng.below(pool.size())], cfg.intra_weight);
            }
            for (std::size_t i = 0; i < cfg.items; ++i) {
                if (item_has[i]) continue;
                const auto& pool = users_of[item_comm(i)];
                emit(pool[rng.below(pool.size())], i, cfg.intra_weight);
            }
        }
        return os.str();
    };
    Rng edge_rng(seed, "synthetic/edges");
    out.edges_tsv = draw_edges(edge_rng, true);
    Rng next_rng(seed, "synthetic/next-edges");
    out.next_edges_tsv = draw_edges(next_rng, false);

    // Temporal log from the same community preference.
    double intra_mass = cfg.p_in * (static_cast<double>(cfg.items) / static_cast<double>(C));
    double inter_mass =
        cfg.p_out * (static_cast<double>(cfg.items) * static_cast<double>(C - 1) /
                     static_cast<double>(C));
    double q_intra = intra_mass / (intra_mass + inter_mass);
    std::vector<std::pair<std::string, double>> kinds(cfg.interaction_weights.begin(),
                                                      cfg.interaction_weights.end());
    std::vector<double> kind_cum;
    {
        // Frequencies decay with weight rank: cheap interactions dominate.
        double acc = 0.0;
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            acc += 1.0 / static_cast<double>(i + 1);
            kind_cum.push_back(acc);
        }
    }
    Rng log_rng(seed, "synthetic/log");
    {
        std::ostringstream os;
        for (std::size_t hour = 0; hour < cfg.log_hours; ++hour) {
            for (std::size_t e = 0; e < cfg.events_per_hour; ++e) {
                std::size_t u = log_rng.below(cfg.users);
                std::size_t c = user_comm(u);
                std::size_t item;
                if (log_rng.uniform() < q_intra) {
                    const auto& pool = items_of[c];
                    item = pool[log_rng.below(pool.size())];
                } else {
                    std::size_t others = cfg.items - items_of[c].size();
                    std::size_t pick = log_rng.below(others);
                    item = 0;
                    for (std::size_t i = 0; i < cfg.items; ++i) {
                        if (item_comm(i) == c) continue;
                        if (pick == 0) {
                            item = i;
                            break;
                        }
                        --pick;
                    }
                }
                const auto& [kind, weight] = kinds[log_rng.weighted(kind_cum)];
                os << hour << "\tu" << u << "\ti" << item << '\t' << kind << '\t'
                   << detail::format_weight(weight) << '\n';
            }
        }
        out.log_tsv = os.str();
    }
    return out;
}

}  // namespace rankgraph
