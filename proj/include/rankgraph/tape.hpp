#pragma once

#include "rankgraph/error.hpp"
#include "rankgraph/tensor.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rankgraph {

// Reverse-mode tape. Ops append nodes in execution order; backward() walks
// the recorded list strictly in reverse, so gradient accumulation order is
// fixed and reruns are bitwise identical. Node ids index the tape. A Tape is
// single-threaded; values are never mutated after recording.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void set_checked(bool on) { checked_ = on; }
    bool checked() const { return checked_; }

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t size() const { return nodes_.size(); }

    // Leaf with no gradient flow (inputs, detached snapshots, masks).
    int constant(Tensor t) { return push(std::move(t), {}, nullptr); }

    // Leaf that wants a gradient.
    int param(Tensor t) {
        int id = push(std::move(t), {}, nullptr);
        nodes_.back().is_param = true;
        return id;
    }

    // y = a . b
    int matmul(int a, int b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.cols() != B.rows())
            fail_validation("matmul: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
        Tensor y(A.rows(), B.cols());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            const double* arow = A.row_ptr(i);
            double* yrow = y.row_ptr(i);
            for (std::size_t k = 0; k < A.cols(); ++k) {
                double aik = arow[k];
                if (aik == 0.0) continue;
                const double* brow = B.row_ptr(k);
                for (std::size_t j = 0; j < B.cols(); ++j) yrow[j] += aik * brow[j];
            }
        }
        return push(std::move(y), {a, b}, [a, b](const Tensor& g, Tape& t) {
            const Tensor& A = t.value(a);
            const Tensor& B = t.value(b);
            Tensor da(A.rows(), A.cols());
            for (std::size_t i = 0; i < A.rows(); ++i)
                for (std::size_t k = 0; k < A.cols(); ++k) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < B.cols(); ++j) s += g.at(i, j) * B.at(k, j);
                    da.at(i, k) = s;
                }
            Tensor db(B.rows(), B.cols());
            for (std::size_t k = 0; k < B.rows(); ++k)
                for (std::size_t j = 0; j < B.cols(); ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < A.rows(); ++i) s += A.at(i, k) * g.at(i, j);
                    db.at(k, j) = s;
                }
            t.accum(a, da);
            t.accum(b, db);
        }, "matmul");
    }

    // y = x . W + b, b a 1xN row broadcast over rows of x.
    int affine(int x, int w, int b) {
        {
            const Tensor& X = value(x);
            const Tensor& W = value(w);
            const Tensor& B = value(b);
            if (X.cols() != W.rows())
                fail_validation("affine: shape mismatch " + X.shape_str() + " vs " + W.shape_str());
            if (B.rows() != 1 || B.cols() != W.cols())
                fail_validation("affine: bias shape " + B.shape_str() + " vs weight " +
                                W.shape_str());
        }
        // matmul's push may reallocate the node store; refetch values after.
        int xw = matmul(x, w);
        Tensor y = value(xw);
        const Tensor& B = value(b);
        for (std::size_t i = 0; i < y.rows(); ++i)
            for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) += B.at(0, j);
        return push(std::move(y), {xw, b}, [xw, b](const Tensor& g, Tape& t) {
            t.accum(xw, g);
            Tensor db(1, g.cols());
            for (std::size_t j = 0; j < g.cols(); ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < g.rows(); ++i) s += g.at(i, j);
                db.at(0, j) = s;
            }
            t.accum(b, db);
        }, "affine");
    }

    // Subgradient at 0 is 0.
    int relu(int x) {
        Tensor y = value(x);
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y.data()[i] <= 0.0) y.data()[i] = 0.0;
        return push(std::move(y), {x}, [x](const Tensor& g, Tape& t) {
            const Tensor& X = t.value(x);
            Tensor dx = g;
            for (std::size_t i = 0; i < dx.size(); ++i)
                if (X.data()[i] <= 0.0) dx.data()[i] = 0.0;
            t.accum(x, dx);
        }, "relu");
    }

    int add(int a, int b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B))
            fail_validation("add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
        Tensor y = A;
        for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += B.data()[i];
        return push(std::move(y), {a, b}, [a, b](const Tensor& g, Tape& t) {
            t.accum(a, g);
            t.accum(b, g);
        }, "add");
    }

    int sub(int a, int b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B))
            fail_validation("sub: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
        Tensor y = A;
        for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] -= B.data()[i];
        return push(std::move(y), {a, b}, [a, b](const Tensor& g, Tape& t) {
            t.accum(a, g);
            Tensor db = g;
            for (std::size_t i = 0; i < db.size(); ++i) db.data()[i] = -db.data()[i];
            t.accum(b, db);
        }, "sub");
    }

    int scale(int x, double c) {
        Tensor y = value(x);
        for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= c;
        return push(std::move(y), {x}, [x, c](const Tensor& g, Tape& t) {
            Tensor dx = g;
            for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] *= c;
            t.accum(x, dx);
        }, "scale");
    }

    int add_scalar(int x, double c) {
        Tensor y = value(x);
        for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += c;
        return push(std::move(y), {x}, [x](const Tensor& g, Tape& t) { t.accum(x, g); },
                    "add_scalar");
    }

    int hadamard(int a, int b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B))
            fail_validation("hadamard: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
        Tensor y = A;
        for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= B.data()[i];
        return push(std::move(y), {a, b}, [a, b](const Tensor& g, Tape& t) {
            const Tensor& A = t.value(a);
            const Tensor& B = t.value(b);
            Tensor da = g, db = g;
            for (std::size_t i = 0; i < g.size(); ++i) {
                da.data()[i] *= B.data()[i];
                db.data()[i] *= A.data()[i];
            }
            t.accum(a, da);
            t.accum(b, db);
        }, "hadamard");
    }

    int concat_cols(std::span<const int> xs) {
        if (xs.empty()) fail_validation("concat_cols: empty input list");
        std::size_t rows = value(xs[0]).rows();
        std::size_t cols = 0;
        for (int id : xs) {
            if (value(id).rows() != rows)
                fail_validation("concat_cols: row mismatch " + value(xs[0]).shape_str() + " vs " +
                                value(id).shape_str());
            cols += value(id).cols();
        }
        Tensor y(rows, cols);
        std::size_t off = 0;
        for (int id : xs) {
            const Tensor& X = value(id);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < X.cols(); ++j) y.at(i, off + j) = X.at(i, j);
            off += X.cols();
        }
        std::vector<int> parents(xs.begin(), xs.end());
        return push(std::move(y), parents, [parents](const Tensor& g, Tape& t) {
            std::size_t off = 0;
            for (int id : parents) {
                const Tensor& X = t.value(id);
                Tensor dx(X.rows(), X.cols());
                for (std::size_t i = 0; i < X.rows(); ++i)
                    for (std::size_t j = 0; j < X.cols(); ++j) dx.at(i, j) = g.at(i, off + j);
                t.accum(id, dx);
                off += X.cols();
            }
        }, "concat_cols");
    }

    int concat_rows(std::span<const int> xs) {
        if (xs.empty()) fail_validation("concat_rows: empty input list");
        std::size_t cols = value(xs[0]).cols();
        std::size_t rows = 0;
        for (int id : xs) {
            if (value(id).cols() != cols)
                fail_validation("concat_rows: col mismatch " + value(xs[0]).shape_str() + " vs " +
                                value(id).shape_str());
            rows += value(id).rows();
        }
        Tensor y(rows, cols);
        std::size_t off = 0;
        for (int id : xs) {
            const Tensor& X = value(id);
            for (std::size_t i = 0; i < X.rows(); ++i)
                for (std::size_t j = 0; j < cols; ++j) y.at(off + i, j) = X.at(i, j);
            off += X.rows();
        }
        std::vector<int> parents(xs.begin(), xs.end());
        return push(std::move(y), parents, [parents](const Tensor& g, Tape& t) {
            std::size_t off = 0;
            for (int id : parents) {
                const Tensor& X = t.value(id);
                Tensor dx(X.rows(), X.cols());
                for (std::size_t i = 0; i < X.rows(); ++i)
                    for (std::size_t j = 0; j < X.cols(); ++j) dx.at(i, j) = g.at(off + i, j);
                t.accum(id, dx);
                off += X.rows();
            }
        }, "concat_rows");
    }

    // NxD -> Nx1, sum across each row.
    int row_sum(int x) {
        const Tensor& X = value(x);
        Tensor y(X.rows(), 1);
        for (std::size_t i = 0; i < X.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < X.cols(); ++j) s += X.at(i, j);
            y.at(i, 0) = s;
        }
        return push(std::move(y), {x}, [x](const Tensor& g, Tape& t) {
            const Tensor& X = t.value(x);
            Tensor dx(X.rows(), X.cols());
            for (std::size_t i = 0; i < X.rows(); ++i)
                for (std::size_t j = 0; j < X.cols(); ++j) dx.at(i, j) = g.at(i, 0);
            t.accum(x, dx);
        }, "row_sum");
    }

    int sum_all(int x) {
        const Tensor& X = value(x);
        double s = 0.0;
        for (double v : X.values()) s += v;
        return push(Tensor(1, 1, {s}), {x}, [x](const Tensor& g, Tape& t) {
            const Tensor& X = t.value(x);
            Tensor dx(X.rows(), X.cols(), g.at(0, 0));
            t.accum(x, dx);
        }, "sum_all");
    }

    // NxD -> Nx1, log(sum_j exp(x_ij)) with max-shift for stability.
    int logsumexp_row(int x) {
        const Tensor& X = value(x);
        Tensor y(X.rows(), 1);
        for (std::size_t i = 0; i < X.rows(); ++i) {
            double m = X.at(i, 0);
            for (std::size_t j = 1; j < X.cols(); ++j) m = std::max(m, X.at(i, j));
            double s = 0.0;
            for (std::size_t j = 0; j < X.cols(); ++j) s += std::exp(X.at(i, j) - m);
            y.at(i, 0) = m + std::log(s);
        }
        int self = static_cast<int>(nodes_.size());
        return push(std::move(y), {x}, [x, self](const Tensor& g, Tape& t) {
            const Tensor& X = t.value(x);
            const Tensor& Y = t.value(self);
            Tensor dx(X.rows(), X.cols());
            for (std::size_t i = 0; i < X.rows(); ++i)
                for (std::size_t j = 0; j < X.cols(); ++j)
                    dx.at(i, j) = g.at(i, 0) * std::exp(X.at(i, j) - Y.at(i, 0));
            t.accum(x, dx);
        }, "logsumexp_row");
    }

    // Rows with L2 norm below the guard pass through unchanged.
    static constexpr double kNormGuard = 1e-30;

    int row_l2_normalize(int x) {
        const Tensor& X = value(x);
        Tensor y = X;
        for (std::size_t i = 0; i < X.rows(); ++i) {
            double n = row_norm(X, i);
            if (n < kNormGuard) continue;
            for (std::size_t j = 0; j < X.cols(); ++j) y.at(i, j) /= n;
        }
        int self = static_cast<int>(nodes_.size());
        return push(std::move(y), {x}, [x, self](const Tensor& g, Tape& t) {
            const Tensor& X = t.value(x);
            const Tensor& Y = t.value(self);
            Tensor dx(X.rows(), X.cols());
            for (std::size_t i = 0; i < X.rows(); ++i) {
                double n = row_norm(X, i);
                if (n < kNormGuard) {
                    for (std::size_t j = 0; j < X.cols(); ++j) dx.at(i, j) = g.at(i, j);
                    continue;
                }
                // d(x/|x|) = (g - (g.y) y) / |x|
                double gy = 0.0;
                for (std::size_t j = 0; j < X.cols(); ++j) gy += g.at(i, j) * Y.at(i, j);
                for (std::size_t j = 0; j < X.cols(); ++j)
                    dx.at(i, j) = (g.at(i, j) - gy * Y.at(i, j)) / n;
            }
            t.accum(x, dx);
        }, "row_l2_normalize");
    }

    int gather_rows(int x, std::vector<std::size_t> idx) {
        const Tensor& X = value(x);
        for (std::size_t r : idx)
            if (r >= X.rows()) fail_validation("gather_rows: row index out of range");
        Tensor y(idx.size(), X.cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < X.cols(); ++j) y.at(i, j) = X.at(idx[i], j);
        return push(std::move(y), {x}, [x, idx = std::move(idx)](const Tensor& g, Tape& t) {
            const Tensor& X = t.value(x);
            Tensor dx(X.rows(), X.cols());
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < X.cols(); ++j) dx.at(idx[i], j) += g.at(i, j);
            t.accum(x, dx);
        }, "gather_rows");
    }

    // out[dst[k]] += w[k] * x[src[k]] over all k; the message-passing kernel.
    int weighted_scatter_add(int x, std::vector<std::size_t> src, std::vector<std::size_t> dst,
                             std::vector<double> w, std::size_t out_rows) {
        const Tensor& X = value(x);
        if (src.size() != dst.size() || src.size() != w.size())
            fail_validation("weighted_scatter_add: index/weight length mismatch");
        for (std::size_t k = 0; k < src.size(); ++k) {
            if (src[k] >= X.rows()) fail_validation("weighted_scatter_add: src out of range");
            if (dst[k] >= out_rows) fail_validation("weighted_scatter_add: dst out of range");
        }
        Tensor y(out_rows, X.cols());
        for (std::size_t k = 0; k < src.size(); ++k) {
            const double* xin = X.row_ptr(src[k]);
            double* yout = y.row_ptr(dst[k]);
            double wk = w[k];
            for (std::size_t j = 0; j < X.cols(); ++j) yout[j] += wk * xin[j];
        }
        return push(std::move(y), {x},
                    [x, src = std::move(src), dst = std::move(dst),
                     w = std::move(w)](const Tensor& g, Tape& t) {
                        const Tensor& X = t.value(x);
                        Tensor dx(X.rows(), X.cols());
                        for (std::size_t k = 0; k < src.size(); ++k) {
                            const double* gin = g.row_ptr(dst[k]);
                            double* dout = dx.row_ptr(src[k]);
                            double wk = w[k];
                            for (std::size_t j = 0; j < X.cols(); ++j) dout[j] += wk * gin[j];
                        }
                        t.accum(x, dx);
                    }, "weighted_scatter_add");
    }

    // y[i] = coeffs[i] * x[i], constant per-row scale (degree masks etc).
    int row_scale(int x, std::vector<double> coeffs) {
        const Tensor& X = value(x);
        if (coeffs.size() != X.rows())
            fail_validation("row_scale: coeff count " + std::to_string(coeffs.size()) +
                            " vs rows " + std::to_string(X.rows()));
        Tensor y = X;
        for (std::size_t i = 0; i < X.rows(); ++i)
            for (std::size_t j = 0; j < X.cols(); ++j) y.at(i, j) *= coeffs[i];
        return push(std::move(y), {x}, [x, coeffs = std::move(coeffs)](const Tensor& g, Tape& t) {
            Tensor dx = g;
            for (std::size_t i = 0; i < dx.rows(); ++i)
                for (std::size_t j = 0; j < dx.cols(); ++j) dx.at(i, j) *= coeffs[i];
            t.accum(x, dx);
        }, "row_scale");
    }

    int transpose(int x) {
        const Tensor& X = value(x);
        Tensor y(X.cols(), X.rows());
        for (std::size_t i = 0; i < X.rows(); ++i)
            for (std::size_t j = 0; j < X.cols(); ++j) y.at(j, i) = X.at(i, j);
        return push(std::move(y), {x}, [x](const Tensor& g, Tape& t) {
            Tensor dx(g.cols(), g.rows());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) dx.at(j, i) = g.at(i, j);
            t.accum(x, dx);
        }, "transpose");
    }

    // Accumulate gradients for every node reachable from loss. Unreached
    // nodes report a zero tensor from grad().
    void backward(int loss) {
        const Tensor& L = value(loss);
        if (L.rows() != 1 || L.cols() != 1)
            fail_validation("backward: loss must be 1x1, got " + L.shape_str());
        grads_.assign(nodes_.size(), Tensor());
        has_grad_.assign(nodes_.size(), 0);
        accum(loss, Tensor(1, 1, {1.0}));
        for (int i = loss; i >= 0; --i) {
            if (!has_grad_[static_cast<std::size_t>(i)]) continue;
            auto& node = nodes_[static_cast<std::size_t>(i)];
            if (node.back) node.back(grads_[static_cast<std::size_t>(i)], *this);
        }
    }

    // Zero tensor of the node's shape when the node was not reached.
    Tensor grad(int id) const {
        std::size_t i = static_cast<std::size_t>(id);
        if (i < has_grad_.size() && has_grad_[i]) return grads_[i];
        const Tensor& v = value(id);
        return Tensor(v.rows(), v.cols());
    }

private:
    struct Node {
        Tensor value;
        std::vector<int> parents;
        std::function<void(const Tensor&, Tape&)> back;
        bool is_param = false;
    };

    int push(Tensor value, std::vector<int> parents,
             std::function<void(const Tensor&, Tape&)> back, const char* op = nullptr) {
        if (checked_ && op && !value.all_finite())
            throw std::runtime_error(std::string(op) + ": produced non-finite values");
        nodes_.push_back(Node{std::move(value), std::move(parents), std::move(back)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    void accum(int id, const Tensor& g) {
        std::size_t i = static_cast<std::size_t>(id);
        if (!has_grad_[i]) {
            grads_[i] = g;
            has_grad_[i] = 1;
        } else {
            Tensor& acc = grads_[i];
            for (std::size_t k = 0; k < acc.size(); ++k) acc.data()[k] += g.data()[k];
        }
    }

    // deque: appends never invalidate references to recorded values, so ops
    // may hold value() references while recording further ops.
    std::deque<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<char> has_grad_;
    bool checked_ = true;
};

// Builds a scalar loss on the given tape from registered parameter nodes.
using LossBuilder = std::function<int(Tape&, const std::vector<int>&)>;

// Max over parameter entries of |analytic - numeric| / max(1, |numeric|),
// numeric by central differences. The numeric side re-runs the builder on a
// fresh tape per probe, so it is independent of the backward pass it checks.
inline double grad_check(const LossBuilder& build, const std::vector<Tensor>& params,
                         double epsilon) {
    if (epsilon <= 0.0) fail_validation("grad_check: epsilon must be positive");
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<int> ids;
        ids.reserve(params.size());
        for (const Tensor& p : params) ids.push_back(tape.param(p));
        int loss = build(tape, ids);
        tape.backward(loss);
        for (int id : ids) analytic.push_back(tape.grad(id));
    }
    auto eval = [&](const std::vector<Tensor>& ps) {
        Tape tape;
        std::vector<int> ids;
        ids.reserve(ps.size());
        for (const Tensor& p : ps) ids.push_back(tape.param(p));
        int loss = build(tape, ids);
        const Tensor& L = tape.value(loss);
        if (L.rows() != 1 || L.cols() != 1) fail_validation("grad_check: loss must be scalar");
        double v = L.at(0, 0);
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss");
        return v;
    };
    std::vector<Tensor> probe = params;
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t e = 0; e < params[p].size(); ++e) {
            double orig = probe[p].data()[e];
            probe[p].data()[e] = orig + epsilon;
            double up = eval(probe);
            probe[p].data()[e] = orig - epsilon;
            double down = eval(probe);
            probe[p].data()[e] = orig;
            double numeric = (up - down) / (2.0 * epsilon);
            double err = std::abs(analytic[p].data()[e] - numeric) /
                         std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace rankgraph
