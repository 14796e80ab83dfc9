#pragma once

#include "rankgraph/graph.hpp"
#include "rankgraph/tensor.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace rankgraph {

// Per node type, one dense matrix per feature block (row = local id). Blocks
// must be fully populated before encoding; presence is tracked per node.
class FeatureStore {
public:
    explicit FeatureStore(const HeteroGraph& g) {
        const auto& types = g.node_types();
        blocks_.resize(types.size());
        present_.resize(types.size());
        for (const auto& t : types) {
            std::size_t n = g.node_count(t.type_id);
            auto ti = static_cast<std::size_t>(t.type_id);
            for (std::size_t dim : t.block_dims) {
                blocks_[ti].emplace_back(n, dim);
                present_[ti].emplace_back(n, 0);
            }
        }
    }

    void set(int type_id, std::uint32_t local_id, std::size_t block, std::vector<double> values) {
        auto ti = static_cast<std::size_t>(type_id);
        if (ti >= blocks_.size() || block >= blocks_[ti].size())
            fail_validation("feature store: unknown (type, block)");
        Tensor& m = blocks_[ti][block];
        if (local_id >= m.rows()) fail_validation("feature store: node id out of range");
        if (values.size() != m.cols())
            fail_validation("feature store: block " + std::to_string(block) + " expects dim " +
                            std::to_string(m.cols()) + ", got " + std::to_string(values.size()));
        for (std::size_t j = 0; j < values.size(); ++j) {
            if (!std::isfinite(values[j])) fail_validation("feature store: non-finite feature");
            m.at(local_id, j) = values[j];
        }
        present_[ti][block][local_id] = 1;
    }

    const Tensor& block(int type_id, std::size_t b) const {
        return blocks_[static_cast<std::size_t>(type_id)][b];
    }

    std::size_t block_count(int type_id) const {
        return blocks_[static_cast<std::size_t>(type_id)].size();
    }

    // Error names the first missing (type, block) pair.
    void require_complete(const HeteroGraph& g) const {
        for (const auto& t : g.node_types()) {
            auto ti = static_cast<std::size_t>(t.type_id);
            for (std::size_t b = 0; b < present_[ti].size(); ++b)
                for (std::size_t i = 0; i < present_[ti][b].size(); ++i)
                    if (!present_[ti][b][i])
                        fail_validation("missing feature block (type '" + t.name + "', block " +
                                        std::to_string(b) + ") for node '" +
                                        g.dictionary(t.type_id).external(
                                            static_cast<std::uint32_t>(i)) +
                                        "'");
        }
    }

    std::size_t skipped_unknown() const { return skipped_unknown_; }
    void note_skipped() { ++skipped_unknown_; }

private:
    std::vector<std::vector<Tensor>> blocks_;           // [type][block]
    std::vector<std::vector<std::vector<char>>> present_;
    std::size_t skipped_unknown_ = 0;
};

// Feature file: TSV `type_name<TAB>external_id<TAB>block_index<TAB>v1 v2 ...`.
// Lines whose external id is not in the graph are counted and skipped (the
// file may cover a larger universe than the edges produced).
inline FeatureStore load_features(std::istream& in, const HeteroGraph& g) {
    FeatureStore store(g);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::string cols[4];
        std::size_t start = 0, field = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                if (field < 4) cols[field] = line.substr(start, i - start);
                ++field;
                start = i + 1;
            }
        }
        if (field != 4)
            fail_validation("feature file line " + std::to_string(line_no) +
                            ": expected 4 fields");
        int type_id = g.type_id_of(cols[0]);
        std::int64_t local = g.dictionary(type_id).lookup(cols[1]);
        if (local < 0) {
            store.note_skipped();
            continue;
        }
        std::size_t block = 0;
        try {
            block = static_cast<std::size_t>(std::stoul(cols[2]));
        } catch (const std::exception&) {
            fail_validation("feature file line " + std::to_string(line_no) + ": bad block index");
        }
        std::vector<double> values;
        std::istringstream vs(cols[3]);
        double x;
        while (vs >> x) values.push_back(x);
        try {
            store.set(type_id, static_cast<std::uint32_t>(local), block, std::move(values));
        } catch (const ValidationError& e) {
            fail_validation("feature file line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return store;
}

inline FeatureStore load_features_file(const std::string& path, const HeteroGraph& g) {
    std::ifstream in(path);
    if (!in) fail_validation("cannot open feature file: " + path);
    return load_features(in, g);
}

inline void write_feature_line(std::ostream& out, const std::string& type_name,
                               const std::string& ext_id, std::size_t block,
                               const std::vector<double>& values) {
    std::ostringstream os;
    os.precision(17);
    os << type_name << '\t' << ext_id << '\t' << block << '\t';
    for (std::size_t j = 0; j < values.size(); ++j) {
        if (j) os << ' ';
        os << values[j];
    }
    os << '\n';
    out << os.str();
}

}  // namespace rankgraph
