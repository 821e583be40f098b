#pragma once

#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rgat/core.hpp"

namespace rgat {

// log() clamps its argument here so saturated probabilities stay finite.
inline constexpr double kLogClamp = 1e-12;

// A named trainable tensor together with its gradient and Adam moments.
struct Param {
    std::string name;
    Array value;
    Array grad;
    Array m;
    Array v;

    Param() = default;
    Param(std::string n, Array init)
        : name(std::move(n)),
          value(std::move(init)),
          grad(value.shape),
          m(value.shape),
          v(value.shape) {}
};

class Tape;

// Handle to a node on a tape. Cheap to copy; only meaningful with its tape alive.
struct Var {
    Tape* tape = nullptr;
    int32_t id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Records every executed primitive in execution (= topological) order and replays
// them backwards to accumulate exact reverse-mode gradients. Single-owner: one
// forward/backward pass per tape, never shared across threads.
class Tape {
public:
    // Scan every primitive output for NaN/Inf and throw NumericError when found.
    bool check_finite = true;

    Var constant(Array v) { return push(std::move(v), false, nullptr); }

    // Leaf bound to a Param: backward() adds d(loss)/d(param) into p.grad.
    Var param(Param& p) {
        Var out = push(Array(p.value), true, nullptr);
        bound_.emplace_back(&p, out.id);
        return out;
    }

    const Array& val(Var v) const { return node(v).value; }
    // Empty array when the node was never reached by backward().
    const Array& grad(Var v) const { return node(v).grad; }
    size_t size() const { return nodes_.size(); }

    // ---- primitives ---------------------------------------------------------

    // c = op(a) * op(b); op transposes when the flag is set. trans_a && trans_b
    // is not needed by any composite here and is rejected.
    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
        const Array& A = val(a);
        const Array& B = val(b);
        // 1-D operands are treated as column vectors [n x 1].
        if (A.ndim() < 1 || A.ndim() > 2 || B.ndim() < 1 || B.ndim() > 2 || (trans_a && trans_b))
            throw ShapeError("matmul: needs two matrices, at most one transposed, got " +
                             shape_str(A.shape) + " and " + shape_str(B.shape));
        const int64_t m = trans_a ? A.cols() : A.rows();
        const int64_t k = trans_a ? A.rows() : A.cols();
        const int64_t kb = trans_b ? B.cols() : B.rows();
        const int64_t n = trans_b ? B.rows() : B.cols();
        if (k != kb)
            throw ShapeError("matmul: inner dimensions disagree, " + shape_str(A.shape) +
                             (trans_a ? "^T" : "") + " * " + shape_str(B.shape) +
                             (trans_b ? "^T" : ""));
        Array C(Shape{m, n});
        matmul_acc(A, trans_a, B, trans_b, C);
        Var out = push(std::move(C), needs(a) || needs(b), "matmul");
        set_backprop(out, [this, a, b, out, trans_a, trans_b](Tape&) {
            const Array& G = node(out).grad;
            const Array& A2 = val(a);
            const Array& B2 = val(b);
            if (!trans_a && !trans_b) {
                if (needs(a)) matmul_acc(G, false, B2, true, grad_buf(a));
                if (needs(b)) matmul_acc(A2, true, G, false, grad_buf(b));
            } else if (!trans_a && trans_b) {
                if (needs(a)) matmul_acc(G, false, B2, false, grad_buf(a));
                if (needs(b)) matmul_acc(G, true, A2, false, grad_buf(b));
            } else {  // trans_a && !trans_b
                if (needs(a)) matmul_acc(B2, false, G, true, grad_buf(a));
                if (needs(b)) matmul_acc(A2, false, G, false, grad_buf(b));
            }
        });
        return out;
    }

    // Same shape, or one side a scalar.
    Var add(Var a, Var b) {
        const Array& A = val(a);
        const Array& B = val(b);
        Array C;
        if (A.same_shape(B)) {
            C = A;
            for (int64_t i = 0; i < C.numel(); ++i) C[i] += B[i];
        } else if (B.is_scalar()) {
            C = A;
            for (double& v : C.data) v += B[0];
        } else if (A.is_scalar()) {
            C = B;
            for (double& v : C.data) v += A[0];
        } else {
            throw ShapeError("add: incompatible shapes " + shape_str(A.shape) + " and " +
                             shape_str(B.shape));
        }
        Var out = push(std::move(C), needs(a) || needs(b), "add");
        set_backprop(out, [this, a, b, out](Tape&) {
            const Array& G = node(out).grad;
            accumulate_maybe_reduced(a, G);
            accumulate_maybe_reduced(b, G);
        });
        return out;
    }

    // Hadamard product. Broadcasts a scalar, or a column [n x 1] across [n x d].
    Var elementwise_mul(Var a, Var b) {
        const Array& A = val(a);
        const Array& B = val(b);
        Array C;
        if (A.same_shape(B)) {
            C = A;
            for (int64_t i = 0; i < C.numel(); ++i) C[i] *= B[i];
        } else if (B.is_scalar() || A.is_scalar()) {
            const Array& big = A.is_scalar() ? B : A;
            const double s = A.is_scalar() ? A[0] : B[0];
            C = big;
            for (double& v : C.data) v *= s;
        } else if (is_column_of(B, A)) {
            C = A;
            for (int64_t i = 0; i < A.rows(); ++i)
                for (int64_t j = 0; j < A.cols(); ++j) C.at(i, j) *= B[i];
        } else if (is_column_of(A, B)) {
            C = B;
            for (int64_t i = 0; i < B.rows(); ++i)
                for (int64_t j = 0; j < B.cols(); ++j) C.at(i, j) *= A[i];
        } else {
            throw ShapeError("elementwise_mul: incompatible shapes " + shape_str(A.shape) +
                             " and " + shape_str(B.shape));
        }
        Var out = push(std::move(C), needs(a) || needs(b), "elementwise_mul");
        set_backprop(out, [this, a, b, out](Tape&) {
            const Array& G = node(out).grad;
            mul_backward_side(a, b, G);
            mul_backward_side(b, a, G);
        });
        return out;
    }

    // Concatenate matrices with equal row counts along the last axis.
    Var concat_last_axis(const std::vector<Var>& xs) {
        if (xs.empty()) throw ShapeError("concat_last_axis: no inputs");
        const int64_t n = val(xs[0]).rows();
        int64_t total = 0;
        bool any_grad = false;
        for (Var x : xs) {
            const Array& X = val(x);
            if (X.ndim() != 2 || X.rows() != n)
                throw ShapeError("concat_last_axis: expected matrices with " + std::to_string(n) +
                                 " rows, got " + shape_str(X.shape));
            total += X.cols();
            any_grad = any_grad || needs(x);
        }
        Array C(Shape{n, total});
        int64_t off = 0;
        for (Var x : xs) {
            const Array& X = val(x);
            for (int64_t i = 0; i < n; ++i)
                std::memcpy(&C.at(i, off), X.row(i), sizeof(double) * static_cast<size_t>(X.cols()));
            off += X.cols();
        }
        Var out = push(std::move(C), any_grad, "concat_last_axis");
        std::vector<Var> inputs = xs;
        set_backprop(out, [this, inputs, out](Tape&) {
            const Array& G = node(out).grad;
            int64_t off2 = 0;
            for (Var x : inputs) {
                const Array& X = val(x);
                if (needs(x)) {
                    Array& gx = grad_buf(x);
                    for (int64_t i = 0; i < X.rows(); ++i)
                        for (int64_t j = 0; j < X.cols(); ++j) gx.at(i, j) += G.at(i, off2 + j);
                }
                off2 += X.cols();
            }
        });
        return out;
    }

    // out[j, :] = x[idx[j], :]
    Var gather_rows(Var x, std::vector<int64_t> idx) {
        const Array& X = val(x);
        if (X.ndim() != 2) throw ShapeError("gather_rows: expected a matrix, got " + shape_str(X.shape));
        for (int64_t i : idx)
            if (i < 0 || i >= X.rows())
                throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " +
                                 shape_str(X.shape));
        Array C(Shape{static_cast<int64_t>(idx.size()), X.cols()});
        for (size_t j = 0; j < idx.size(); ++j)
            std::memcpy(C.row(static_cast<int64_t>(j)), X.row(idx[j]),
                        sizeof(double) * static_cast<size_t>(X.cols()));
        Var out = push(std::move(C), needs(x), "gather_rows");
        set_backprop(out, [this, x, out, idx = std::move(idx)](Tape&) {
            if (!needs(x)) return;
            const Array& G = node(out).grad;
            Array& gx = grad_buf(x);
            for (size_t j = 0; j < idx.size(); ++j)
                for (int64_t c = 0; c < G.cols(); ++c)
                    gx.at(idx[j], c) += G.at(static_cast<int64_t>(j), c);
        });
        return out;
    }

    // out[idx[j], :] += x[j, :], out has out_rows rows.
    Var scatter_add_rows(Var x, std::vector<int64_t> idx, int64_t out_rows) {
        const Array& X = val(x);
        if (X.ndim() != 2 || static_cast<int64_t>(idx.size()) != X.rows())
            throw ShapeError("scatter_add_rows: got " + shape_str(X.shape) + " with " +
                             std::to_string(idx.size()) + " indices");
        for (int64_t i : idx)
            if (i < 0 || i >= out_rows)
                throw ShapeError("scatter_add_rows: index " + std::to_string(i) +
                                 " out of range for " + std::to_string(out_rows) + " rows");
        Array C(Shape{out_rows, X.cols()});
        for (int64_t j = 0; j < X.rows(); ++j)
            for (int64_t c = 0; c < X.cols(); ++c) C.at(idx[static_cast<size_t>(j)], c) += X.at(j, c);
        Var out = push(std::move(C), needs(x), "scatter_add_rows");
        set_backprop(out, [this, x, out, idx = std::move(idx)](Tape&) {
            if (!needs(x)) return;
            const Array& G = node(out).grad;
            Array& gx = grad_buf(x);
            for (int64_t j = 0; j < gx.rows(); ++j)
                for (int64_t c = 0; c < gx.cols(); ++c)
                    gx.at(j, c) += G.at(idx[static_cast<size_t>(j)], c);
        });
        return out;
    }

    Var leaky_relu(Var x, double slope = 0.2) {
        return unary(x, "leaky_relu",
                     [slope](double v) { return v > 0 ? v : slope * v; },
                     [slope](double v, double) { return v > 0 ? 1.0 : slope; });
    }

    Var relu(Var x) {
        return unary(x, "relu",
                     [](double v) { return v > 0 ? v : 0.0; },
                     [](double v, double) { return v > 0 ? 1.0 : 0.0; });
    }

    Var elu(Var x) {
        return unary(x, "elu",
                     [](double v) { return v > 0 ? v : std::expm1(v); },
                     [](double v, double y) { return v > 0 ? 1.0 : y + 1.0; });
    }

    Var sigmoid(Var x) {
        return unary(x, "sigmoid",
                     [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                     [](double, double y) { return y * (1.0 - y); });
    }

    // Natural log with the argument clamped at kLogClamp. The derivative of the
    // clamped function is 0 on the flat region, which keeps saturated BCE terms
    // from producing infinite gradients.
    Var log(Var x) {
        return unary(x, "log",
                     [](double v) { return std::log(v < kLogClamp ? kLogClamp : v); },
                     [](double v, double) { return v < kLogClamp ? 0.0 : 1.0 / v; });
    }

    Var scale(Var x, double c) {
        return unary(x, "scale",
                     [c](double v) { return c * v; },
                     [c](double, double) { return c; });
    }

    // Inverted dropout: kept entries are rescaled by 1/(1-rate). The mask is drawn
    // from `seed` alone and recorded, so backward is exact and a forward replay
    // with the same seed reproduces it bit for bit.
    Var dropout(Var x, double rate, uint64_t seed) {
        if (rate < 0.0 || rate >= 1.0)
            throw ShapeError("dropout: rate must lie in [0, 1), got " + fmt_double(rate));
        if (rate == 0.0) return x;
        const Array& X = val(x);
        std::vector<double> mask(static_cast<size_t>(X.numel()));
        Rng rng(seed);
        const double keep_scale = 1.0 / (1.0 - rate);
        for (double& m : mask) m = rng.uniform() >= rate ? keep_scale : 0.0;
        Array C = X;
        for (int64_t i = 0; i < C.numel(); ++i) C[i] *= mask[static_cast<size_t>(i)];
        Var out = push(std::move(C), needs(x), "dropout");
        set_backprop(out, [this, x, out, mask = std::move(mask)](Tape&) {
            if (!needs(x)) return;
            const Array& G = node(out).grad;
            Array& gx = grad_buf(x);
            for (int64_t i = 0; i < G.numel(); ++i) gx[i] += G[i] * mask[static_cast<size_t>(i)];
        });
        return out;
    }

    // Softmax within each contiguous segment of the (flattened) input, with
    // per-segment max subtraction. Segment ids must be non-decreasing.
    Var segment_softmax(Var logits, std::vector<int64_t> segments) {
        const Array& X = val(logits);
        if (static_cast<int64_t>(segments.size()) != X.numel())
            throw ShapeError("segment_softmax: " + std::to_string(segments.size()) +
                             " segment ids for " + shape_str(X.shape));
        for (size_t i = 1; i < segments.size(); ++i)
            if (segments[i] < segments[i - 1])
                throw ShapeError("segment_softmax: segment ids must be non-decreasing");
        Array Y(X.shape);
        const int64_t n = X.numel();
        int64_t start = 0;
        while (start < n) {
            int64_t stop = start + 1;
            while (stop < n && segments[static_cast<size_t>(stop)] == segments[static_cast<size_t>(start)])
                ++stop;
            double hi = X[start];
            for (int64_t i = start + 1; i < stop; ++i) hi = std::max(hi, X[i]);
            double denom = 0.0;
            for (int64_t i = start; i < stop; ++i) {
                Y[i] = std::exp(X[i] - hi);
                denom += Y[i];
            }
            for (int64_t i = start; i < stop; ++i) Y[i] /= denom;
            start = stop;
        }
        Var out = push(std::move(Y), needs(logits), "segment_softmax");
        set_backprop(out, [this, logits, out, segments = std::move(segments)](Tape&) {
            if (!needs(logits)) return;
            const Array& G = node(out).grad;
            const Array& Y2 = node(out).value;
            Array& gx = grad_buf(logits);
            const int64_t n2 = G.numel();
            int64_t s = 0;
            while (s < n2) {
                int64_t e = s + 1;
                while (e < n2 && segments[static_cast<size_t>(e)] == segments[static_cast<size_t>(s)]) ++e;
                double dot = 0.0;
                for (int64_t i = s; i < e; ++i) dot += G[i] * Y2[i];
                for (int64_t i = s; i < e; ++i) gx[i] += Y2[i] * (G[i] - dot);
                s = e;
            }
        });
        return out;
    }

    // ---- reverse pass ---------------------------------------------------------

    // Walks the tape in exact reverse execution order, then adds each bound
    // leaf's gradient into its Param. Parameters no path reaches keep a zero
    // gradient contribution.
    void backward(Var loss) {
        if (loss.tape != this) throw Error("backward: loss lives on a different tape");
        if (backward_done_) throw Error("backward: tape already differentiated");
        const Array& L = val(loss);
        if (!L.is_scalar())
            throw ShapeError("backward: loss must be scalar, got " + shape_str(L.shape));
        backward_done_ = true;
        grad_buf(loss)[0] = 1.0;
        for (int32_t id = loss.id; id >= 0; --id) {
            Node& nd = nodes_[static_cast<size_t>(id)];
            if (!nd.needs_grad || nd.grad.numel() == 0 || !nd.backprop) continue;
            nd.backprop(*this);
        }
        for (auto& [p, id] : bound_) {
            const Array& g = nodes_[static_cast<size_t>(id)].grad;
            if (g.numel() == 0) continue;
            for (int64_t i = 0; i < g.numel(); ++i) p->grad[i] += g[i];
        }
    }

private:
    struct Node {
        Array value;
        Array grad;  // allocated lazily during backward
        bool needs_grad = false;
        std::function<void(Tape&)> backprop;
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<Param*, int32_t>> bound_;
    bool backward_done_ = false;

    Node& node(Var v) { return nodes_.at(static_cast<size_t>(v.id)); }
    const Node& node(Var v) const { return nodes_.at(static_cast<size_t>(v.id)); }
    bool needs(Var v) const { return node(v).needs_grad; }

    Array& grad_buf(Var v) {
        Node& nd = node(v);
        if (nd.grad.numel() == 0) nd.grad = Array(nd.value.shape);
        return nd.grad;
    }

    Var push(Array value, bool needs_grad, const char* op) {
        if (check_finite && op != nullptr && !value.all_finite())
            throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                               shape_str(value.shape));
        Node nd;
        nd.value = std::move(value);
        nd.needs_grad = needs_grad;
        nodes_.push_back(std::move(nd));
        return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
    }

    void set_backprop(Var v, std::function<void(Tape&)> fn) {
        if (node(v).needs_grad) node(v).backprop = std::move(fn);
    }

    template <class F, class DF>
    Var unary(Var x, const char* op, F f, DF df) {
        const Array& X = val(x);
        Array Y(X.shape);
        for (int64_t i = 0; i < X.numel(); ++i) Y[i] = f(X[i]);
        Var out = push(std::move(Y), needs(x), op);
        set_backprop(out, [this, x, out, df](Tape&) {
            if (!needs(x)) return;
            const Array& G = node(out).grad;
            const Array& X2 = val(x);
            const Array& Y2 = node(out).value;
            Array& gx = grad_buf(x);
            for (int64_t i = 0; i < G.numel(); ++i) gx[i] += G[i] * df(X2[i], Y2[i]);
        });
        return out;
    }

    static bool is_column_of(const Array& col, const Array& mat) {
        return col.ndim() == 2 && col.cols() == 1 && mat.ndim() == 2 && col.rows() == mat.rows() &&
               mat.cols() > 1;
    }

    // add() backward: same shape passes G through, a scalar side gets sum(G).
    void accumulate_maybe_reduced(Var v, const Array& G) {
        if (!needs(v)) return;
        Array& gv = grad_buf(v);
        if (gv.same_shape(G)) {
            for (int64_t i = 0; i < G.numel(); ++i) gv[i] += G[i];
        } else {
            double s = 0.0;
            for (double g : G.data) s += g;
            gv[0] += s;
        }
    }

    // d(a*b)/da for the supported broadcast patterns, accumulated into `side`.
    void mul_backward_side(Var side, Var other, const Array& G) {
        if (!needs(side)) return;
        const Array& S = val(side);
        const Array& O = val(other);
        Array& gs = grad_buf(side);
        if (S.same_shape(O) || (S.same_shape(G) && O.is_scalar())) {
            const bool scalar_other = O.is_scalar();
            for (int64_t i = 0; i < G.numel(); ++i) gs[i] += G[i] * (scalar_other ? O[0] : O[i]);
        } else if (S.is_scalar()) {
            double s = 0.0;
            for (int64_t i = 0; i < G.numel(); ++i) s += G[i] * O[i];
            gs[0] += s;
        } else if (is_column_of(S, O)) {
            for (int64_t i = 0; i < O.rows(); ++i) {
                double s = 0.0;
                for (int64_t j = 0; j < O.cols(); ++j) s += G.at(i, j) * O.at(i, j);
                gs[i] += s;
            }
        } else {  // S is the full matrix, O the column
            for (int64_t i = 0; i < S.rows(); ++i)
                for (int64_t j = 0; j < S.cols(); ++j) gs.at(i, j) += G.at(i, j) * O[i];
        }
    }

    // C += op(A) * op(B). Specialized loops; never both transposed.
    static void matmul_acc(const Array& A, bool ta, const Array& B, bool tb, Array& C) {
        const int64_t m = C.rows();
        const int64_t n = C.cols();
        if (!ta && !tb) {
            const int64_t k = A.cols();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t p = 0; p < k; ++p) {
                    const double av = A.at(i, p);
                    if (av == 0.0) continue;
                    const double* brow = B.row(p);
                    double* crow = C.row(i);
                    for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
                }
        } else if (!ta && tb) {
            const int64_t k = A.cols();
            for (int64_t i = 0; i < m; ++i) {
                const double* arow = A.row(i);
                for (int64_t j = 0; j < n; ++j) {
                    const double* brow = B.row(j);
                    double s = 0.0;
                    for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
                    C.at(i, j) += s;
                }
            }
        } else {
            const int64_t k = A.rows();
            for (int64_t p = 0; p < k; ++p) {
                const double* arow = A.row(p);
                const double* brow = B.row(p);
                for (int64_t i = 0; i < m; ++i) {
                    const double av = arow[i];
                    if (av == 0.0) continue;
                    double* crow = C.row(i);
                    for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
                }
            }
        }
    }
};

// ---- composites used across modules ---------------------------------------------

// Row-wise softmax of a matrix, built on segment_softmax.
inline Var row_softmax(Tape& t, Var m) {
    const int64_t rows = t.val(m).rows();
    const int64_t cols = t.val(m).cols();
    std::vector<int64_t> seg(static_cast<size_t>(rows * cols));
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) seg[static_cast<size_t>(i * cols + j)] = i;
    return t.segment_softmax(m, std::move(seg));
}

// Sum of every element as a [1 x 1] scalar, via ones-vector contractions.
// NB: never hold a reference from Tape::val across another tape operation;
// pushing nodes may reallocate the node storage.
inline Var sum_all(Tape& t, Var m) {
    const int64_t rows = t.val(m).rows();
    const int64_t cols = t.val(m).cols();
    Var ones_left = t.constant(Array::ones(Shape{1, rows}));
    Var rowsum = t.matmul(ones_left, m);  // [1 x cols]
    Var ones_right = t.constant(Array::ones(Shape{cols, 1}));
    return t.matmul(rowsum, ones_right);  // [1 x 1]
}

}  // namespace rgat
