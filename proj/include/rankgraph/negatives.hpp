#pragma once

#include "rankgraph/error.hpp"
#include "rankgraph/rng.hpp"
#include "rankgraph/tensor.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <set>
#include <vector>

namespace rankgraph {

// One pool entry: a node and a detached snapshot of its per-head embedding
// rows (H x d_out). Snapshots never carry gradients; later parameter updates
// leave them bitwise unchanged.
struct PoolEntry {
    std::uint32_t node = 0;
    Tensor head_rows;
};

// Per node type, a fixed-capacity ring buffer with FIFO eviction.
class NegativePool {
public:
    NegativePool(std::size_t n_types, std::size_t capacity)
        : rings_(n_types), cursor_(n_types, 0), capacity_(capacity) {
        if (capacity == 0) fail_validation("negative pool: capacity must be >= 1");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size(int type_id) const { return rings_[check(type_id)].size(); }

    void insert(int type_id, std::uint32_t node, Tensor head_rows) {
        if (head_rows.rows() == 0 || head_rows.cols() == 0)
            fail_validation("negative pool: empty embedding snapshot");
        auto ti = check(type_id);
        if (!rings_[ti].empty() && rings_[ti].front().head_rows.cols() != head_rows.cols())
            fail_validation("negative pool: embedding dimension mismatch");
        if (rings_[ti].size() < capacity_) {
            rings_[ti].push_back({node, std::move(head_rows)});
        } else {
            rings_[ti][cursor_[ti]] = {node, std::move(head_rows)};
            cursor_[ti] = (cursor_[ti] + 1) % capacity_;
        }
    }

    // Uniform with replacement; the caller skips the pool source entirely
    // while a type's pool is still empty in early steps.
    std::vector<const PoolEntry*> sample(int type_id, std::size_t n, Rng& rng) const {
        auto ti = check(type_id);
        if (rings_[ti].empty())
            fail_validation("negative pool: sampling from empty pool for type " +
                            std::to_string(type_id));
        std::vector<const PoolEntry*> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(&rings_[ti][rng.below(rings_[ti].size())]);
        return out;
    }

    // Entries in FIFO order, oldest first (test hook).
    std::vector<const PoolEntry*> entries(int type_id) const {
        auto ti = check(type_id);
        std::vector<const PoolEntry*> out;
        std::size_t n = rings_[ti].size();
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t pos = n < capacity_ ? i : (cursor_[ti] + i) % capacity_;
            out.push_back(&rings_[ti][pos]);
        }
        return out;
    }

private:
    std::size_t check(int type_id) const {
        if (type_id < 0 || static_cast<std::size_t>(type_id) >= rings_.size())
            fail_validation("negative pool: unknown node type");
        return static_cast<std::size_t>(type_id);
    }

    std::vector<std::vector<PoolEntry>> rings_;
    std::vector<std::size_t> cursor_;
    std::size_t capacity_;
};

struct InBatchNegatives {
    std::vector<std::uint32_t> ids;
    bool short_of_request = false;  // fewer candidates than requested survived exclusion
};

// Negatives for one anchor from the other pairs of the same batch: distinct
// destinations, excluding the anchor's positive and its true neighbors under
// the batch relation. Draws without replacement.
inline InBatchNegatives sample_in_batch_negatives(
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs, std::size_t anchor_index,
    const std::function<bool(std::uint32_t)>& is_true_neighbor, std::size_t n_neg, Rng& rng) {
    if (pairs.size() < 2)
        fail_validation("in-batch negatives: batch must contain at least two pairs");
    if (anchor_index >= pairs.size())
        fail_validation("in-batch negatives: anchor index out of range");
    std::uint32_t positive = pairs[anchor_index].second;
    std::set<std::uint32_t> candidate_set;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (i == anchor_index) continue;
        std::uint32_t c = pairs[i].second;
        if (c == positive) continue;
        if (is_true_neighbor && is_true_neighbor(c)) continue;
        candidate_set.insert(c);
    }
    std::vector<std::uint32_t> candidates(candidate_set.begin(), candidate_set.end());
    InBatchNegatives out;
    if (candidates.size() <= n_neg) {
        out.ids = candidates;
        out.short_of_request = candidates.size() < n_neg;
        return out;
    }
    for (std::size_t pick : rng.sample_without_replacement(candidates.size(), n_neg))
        out.ids.push_back(candidates[pick]);
    return out;
}

// The positive node's embeddings from every head but the anchor's. Empty for
// single-head models.
inline std::vector<std::size_t> semantic_negative_heads(std::size_t heads,
                                                        std::size_t anchor_head) {
    std::vector<std::size_t> out;
    if (heads < 2) return out;
    if (anchor_head >= heads) fail_validation("semantic negatives: head index out of range");
    for (std::size_t h = 0; h < heads; ++h)
        if (h != anchor_head) out.push_back(h);
    return out;
}

// Tensor-level variant: rows of `head_rows` (H x d) for heads != anchor_head.
inline Tensor semantic_negatives(const Tensor& head_rows, std::size_t anchor_head) {
    std::vector<std::size_t> hs = semantic_negative_heads(head_rows.rows(), anchor_head);
    Tensor out(hs.size(), head_rows.cols());
    for (std::size_t i = 0; i < hs.size(); ++i)
        for (std::size_t j = 0; j < head_rows.cols(); ++j) out.at(i, j) = head_rows.at(hs[i], j);
    return out;
}

}  // namespace rankgraph
