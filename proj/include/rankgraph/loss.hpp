#pragma once

#include "rankgraph/tape.hpp"
#include "rankgraph/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace rankgraph {

// Both losses work on cosine similarity, which equals the dot product on the
// L2-normalized rows the model emits. Inputs must be unit rows; the guard
// below catches degenerate (zero) embeddings before they poison a loss.
namespace detail {

inline void require_unit_rows(const Tape& t, int rows, const char* who) {
    const Tensor& X = t.value(rows);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        double n = row_norm(X, i);
        if (std::abs(n - 1.0) > 1e-6)
            fail_validation(std::string(who) + ": rows must be L2-normalized (row " +
                            std::to_string(i) + " has norm " + std::to_string(n) + ")");
    }
}

}  // namespace detail

// cos(anchor, each row) as a 1 x n row.
inline int build_scores(Tape& t, int anchor, int rows) {
    return t.matmul(anchor, t.transpose(rows));
}

// mean_n max(0, d(a,p) - d(a,n) + m) with d = 1 - cos, which reduces to
// mean_n max(0, cos(a,n) - cos(a,p) + m).
inline int build_triplet(Tape& t, int anchor, int positive, int negatives, double margin) {
    std::size_t n = t.value(negatives).rows();
    if (n == 0) fail_validation("triplet_loss: needs at least one negative");
    detail::require_unit_rows(t, anchor, "triplet_loss");
    detail::require_unit_rows(t, positive, "triplet_loss");
    detail::require_unit_rows(t, negatives, "triplet_loss");
    int sp = build_scores(t, anchor, positive);    // 1x1
    int sn = build_scores(t, anchor, negatives);   // 1xn
    int sp_b = t.matmul(sp, t.constant(Tensor(1, n, 1.0)));
    int hinge = t.relu(t.add_scalar(t.sub(sn, sp_b), margin));
    return t.scale(t.row_sum(hinge), 1.0 / static_cast<double>(n));
}

// Score-level InfoNCE: scores is a 1 x (1+n) row with the positive's cosine
// first. logsumexp keeps it stable and shift-invariant in the scores.
inline int build_infonce_from_scores(Tape& t, int scores, double temperature) {
    if (temperature <= 0.0) fail_validation("infonce_loss: temperature must be positive");
    const Tensor& S = t.value(scores);
    if (S.rows() != 1 || S.cols() < 2)
        fail_validation("infonce_loss: scores must be 1 x (1+n) with n >= 1");
    int logits = t.scale(scores, 1.0 / temperature);
    int lse = t.logsumexp_row(logits);
    int sp = t.gather_rows(t.transpose(logits), {0});
    return t.sub(lse, sp);
}

// -log( exp(cos(a,p)/tau) / (exp(cos(a,p)/tau) + sum_n exp(cos(a,n)/tau)) ).
inline int build_infonce(Tape& t, int anchor, int positive, int negatives, double temperature) {
    if (temperature <= 0.0) fail_validation("infonce_loss: temperature must be positive");
    if (t.value(negatives).rows() == 0)
        fail_validation("infonce_loss: needs at least one negative");
    detail::require_unit_rows(t, anchor, "infonce_loss");
    detail::require_unit_rows(t, positive, "infonce_loss");
    detail::require_unit_rows(t, negatives, "infonce_loss");
    int sp = build_scores(t, anchor, positive);
    int sn = build_scores(t, anchor, negatives);
    std::vector<int> parts{sp, sn};
    return build_infonce_from_scores(t, t.concat_cols(parts), temperature);
}

inline double infonce_from_scores(const Tensor& scores, double temperature) {
    Tape t;
    return t.value(build_infonce_from_scores(t, t.constant(scores), temperature)).at(0, 0);
}

// --- plain-value entry points -----------------------------------------------

inline double triplet_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negatives,
                           double margin) {
    Tape t;
    int loss = build_triplet(t, t.constant(anchor), t.constant(positive), t.constant(negatives),
                             margin);
    return t.value(loss).at(0, 0);
}

inline double infonce_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negatives,
                           double temperature) {
    Tape t;
    int loss = build_infonce(t, t.constant(anchor), t.constant(positive), t.constant(negatives),
                             temperature);
    return t.value(loss).at(0, 0);
}

// alpha * mean(triplet) + beta * mean(infonce) over the step's anchors.
inline double combined_loss(const std::vector<double>& triplet_terms,
                            const std::vector<double>& infonce_terms, double alpha, double beta) {
    if (triplet_terms.size() != infonce_terms.size())
        fail_validation("combined_loss: term count mismatch");
    if (triplet_terms.empty()) return 0.0;
    double ts = 0.0, is = 0.0;
    for (double v : triplet_terms) ts += v;
    for (double v : infonce_terms) is += v;
    auto n = static_cast<double>(triplet_terms.size());
    return alpha * (ts / n) + beta * (is / n);
}

}  // namespace rankgraph
