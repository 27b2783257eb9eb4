#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "chaingan/gemm.hpp"
#include "chaingan/tensor.hpp"

namespace chaingan {

// Primitive set of the differentiation substrate. Every backward rule is
// expressed through these same primitives, so a gradient computed with
// keep_graph is itself differentiable (double backprop).
enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,     // c * a
    AddScalar, // a + c
    MatMul,    // flags trans_a/trans_b
    AddRowVec, // a[m,n] + v[n] broadcast down rows
    AddColVec, // a[m,n] + v[m] broadcast across columns
    RowSum,    // [m,n] -> [m]
    ColSum,    // [m,n] -> [n]
    RepeatCols, // [m] -> [m,n]
    RepeatRows, // [n] -> [m,n]
    SumAll,     // -> [1]
    Fill,       // [1] -> shape
    Relu,
    LeakyRelu,
    DRelu,      // g * 1[x>0]
    DLeakyRelu, // g * (1[x>0] + slope*1[x<=0])
    Tanh,
    Sqrt,
    Recip,
    Im2Col,
    Col2Im,
    MeanPool2, // 2x2 average pool
    Upsample2, // 2x nearest
    Permute3,  // axis permutation of a rank-3 view
    Reshape,
};

struct OpAttr {
    double c = 0.0;                 // scalar coefficient / slope
    int i0 = 0, i1 = 0, i2 = 0, i3 = 0; // op-specific ints (kernel/stride/pad/trans/perm)
};

// Node id within one ComputationRecord.
struct Val {
    int id = -1;
    bool valid() const { return id >= 0; }
};

template <typename T>
struct Node {
    Op op = Op::Leaf;
    int a = -1, b = -1;
    OpAttr attr;
    Shape shape;
    std::shared_ptr<std::vector<T>> val;
};

[[noreturn]] inline void shape_error(const std::string& op, const std::string& detail) {
    throw std::invalid_argument(op + ": " + detail);
}

// Append-only record of primitive applications. Forward values are computed
// eagerly on emit; grad() walks the record in reverse and appends the adjoint
// computation as ordinary nodes.
template <typename T>
class Tape {
public:
    const Node<T>& node(int id) const { return nodes_[id]; }
    int size() const { return static_cast<int>(nodes_.size()); }
    void clear() { nodes_.clear(); }

    const Shape& shape(Val v) const { return nodes_[v.id].shape; }
    const std::vector<T>& values(Val v) const { return *nodes_[v.id].val; }

    Tensor<T> tensor(Val v) const {
        Tensor<T> t(nodes_[v.id].shape);
        t.vec() = *nodes_[v.id].val;
        return t;
    }

    Val leaf(const Tensor<T>& t) {
        Node<T> n;
        n.op = Op::Leaf;
        n.shape = t.shape();
        n.val = t.buffer();
        nodes_.push_back(std::move(n));
        return {size() - 1};
    }

    Val constant(T v) { return leaf(Tensor<T>::scalar(v)); }

    // ---- primitive applications -------------------------------------------

    Val add(Val a, Val b) {
        require_same("add", a, b);
        return emit(Op::Add, a.id, b.id, {}, shape(a));
    }
    Val sub(Val a, Val b) {
        require_same("sub", a, b);
        return emit(Op::Sub, a.id, b.id, {}, shape(a));
    }
    Val mul(Val a, Val b) {
        require_same("mul", a, b);
        return emit(Op::Mul, a.id, b.id, {}, shape(a));
    }
    Val scale(Val a, double c) {
        OpAttr at;
        at.c = c;
        return emit(Op::Scale, a.id, -1, at, shape(a));
    }
    Val add_scalar(Val a, double c) {
        OpAttr at;
        at.c = c;
        return emit(Op::AddScalar, a.id, -1, at, shape(a));
    }

    Val matmul(Val a, Val b, bool trans_a = false, bool trans_b = false) {
        const Shape& sa = shape(a);
        const Shape& sb = shape(b);
        if (sa.rank != 2 || sb.rank != 2) shape_error("matmul", "need rank-2 operands, got " + sa.str() + " and " + sb.str());
        const int m = trans_a ? sa[1] : sa[0];
        const int ka = trans_a ? sa[0] : sa[1];
        const int kb = trans_b ? sb[1] : sb[0];
        const int n = trans_b ? sb[0] : sb[1];
        if (ka != kb) shape_error("matmul", "inner extents differ: " + sa.str() + (trans_a ? "^T" : "") + " * " + sb.str() + (trans_b ? "^T" : ""));
        OpAttr at;
        at.i0 = trans_a;
        at.i1 = trans_b;
        return emit(Op::MatMul, a.id, b.id, at, Shape{m, n});
    }

    Val add_rowvec(Val a, Val v) {
        const Shape& sa = shape(a);
        const Shape& sv = shape(v);
        if (sa.rank != 2 || sv.rank != 1 || sv[0] != sa[1])
            shape_error("add_rowvec", "matrix " + sa.str() + " vs vector " + sv.str());
        return emit(Op::AddRowVec, a.id, v.id, {}, sa);
    }
    Val add_colvec(Val a, Val v) {
        const Shape& sa = shape(a);
        const Shape& sv = shape(v);
        if (sa.rank != 2 || sv.rank != 1 || sv[0] != sa[0])
            shape_error("add_colvec", "matrix " + sa.str() + " vs vector " + sv.str());
        return emit(Op::AddColVec, a.id, v.id, {}, sa);
    }

    Val row_sum(Val a) {
        const Shape& s = shape(a);
        if (s.rank != 2) shape_error("row_sum", "need rank-2, got " + s.str());
        return emit(Op::RowSum, a.id, -1, {}, Shape{s[0]});
    }
    Val col_sum(Val a) {
        const Shape& s = shape(a);
        if (s.rank != 2) shape_error("col_sum", "need rank-2, got " + s.str());
        return emit(Op::ColSum, a.id, -1, {}, Shape{s[1]});
    }
    Val repeat_cols(Val v, int n) {
        const Shape& s = shape(v);
        if (s.rank != 1) shape_error("repeat_cols", "need rank-1, got " + s.str());
        OpAttr at;
        at.i0 = n;
        return emit(Op::RepeatCols, v.id, -1, at, Shape{s[0], n});
    }
    Val repeat_rows(Val v, int m) {
        const Shape& s = shape(v);
        if (s.rank != 1) shape_error("repeat_rows", "need rank-1, got " + s.str());
        OpAttr at;
        at.i0 = m;
        return emit(Op::RepeatRows, v.id, -1, at, Shape{m, s[0]});
    }
    Val sum_all(Val a) { return emit(Op::SumAll, a.id, -1, {}, Shape{1}); }
    Val fill(Val scalar, Shape s) {
        if (shape(scalar).numel() != 1) shape_error("fill", "source must be scalar, got " + shape(scalar).str());
        return emit(Op::Fill, scalar.id, -1, {}, s);
    }

    Val relu(Val a) { return emit(Op::Relu, a.id, -1, {}, shape(a)); }
    Val leaky_relu(Val a, double slope) {
        OpAttr at;
        at.c = slope;
        return emit(Op::LeakyRelu, a.id, -1, at, shape(a));
    }
    Val drelu(Val x, Val g) {
        require_same("drelu", x, g);
        return emit(Op::DRelu, x.id, g.id, {}, shape(x));
    }
    Val dleaky_relu(Val x, Val g, double slope) {
        require_same("dleaky_relu", x, g);
        OpAttr at;
        at.c = slope;
        return emit(Op::DLeakyRelu, x.id, g.id, at, shape(x));
    }
    Val tanh(Val a) { return emit(Op::Tanh, a.id, -1, {}, shape(a)); }
    Val sqrt(Val a) { return emit(Op::Sqrt, a.id, -1, {}, shape(a)); }
    Val recip(Val a) { return emit(Op::Recip, a.id, -1, {}, shape(a)); }

    // x [N,C,H,W] -> columns [C*kh*kw, N*OH*OW]
    Val im2col(Val x, int k, int stride, int pad) {
        const Shape& s = shape(x);
        if (s.rank != 4) shape_error("im2col", "need rank-4 input, got " + s.str());
        const int oh = conv_out(s[2], k, stride, pad, "im2col");
        const int ow = conv_out(s[3], k, stride, pad, "im2col");
        OpAttr at;
        at.i0 = k;
        at.i1 = stride;
        at.i2 = pad;
        return emit(Op::Im2Col, x.id, -1, at, Shape{s[1] * k * k, s[0] * oh * ow});
    }

    // adjoint of im2col: scatter columns back onto an [N,C,H,W] image
    Val col2im(Val cols, Shape img, int k, int stride, int pad) {
        const Shape& s = shape(cols);
        if (s.rank != 2 || img.rank != 4) shape_error("col2im", "columns " + s.str() + " image " + img.str());
        const int oh = conv_out(img[2], k, stride, pad, "col2im");
        const int ow = conv_out(img[3], k, stride, pad, "col2im");
        if (s[0] != img[1] * k * k || s[1] != img[0] * oh * ow)
            shape_error("col2im", "columns " + s.str() + " inconsistent with image " + img.str());
        OpAttr at;
        at.i0 = k;
        at.i1 = stride;
        at.i2 = pad;
        return emit(Op::Col2Im, cols.id, -1, at, img);
    }

    Val mean_pool2(Val x) {
        const Shape& s = shape(x);
        if (s.rank != 4 || s[2] % 2 || s[3] % 2) shape_error("mean_pool2", "need rank-4 with even H,W, got " + s.str());
        return emit(Op::MeanPool2, x.id, -1, {}, Shape{s[0], s[1], s[2] / 2, s[3] / 2});
    }
    Val upsample2(Val x) {
        const Shape& s = shape(x);
        if (s.rank != 4) shape_error("upsample2", "need rank-4, got " + s.str());
        return emit(Op::Upsample2, x.id, -1, {}, Shape{s[0], s[1], s[2] * 2, s[3] * 2});
    }

    Val permute3(Val x, int p0, int p1, int p2) {
        const Shape& s = shape(x);
        if (s.rank != 3) shape_error("permute3", "need rank-3 view, got " + s.str());
        if (((1 << p0) | (1 << p1) | (1 << p2)) != 7) shape_error("permute3", "invalid permutation");
        OpAttr at;
        at.i0 = p0;
        at.i1 = p1;
        at.i2 = p2;
        return emit(Op::Permute3, x.id, -1, at, Shape{s[p0], s[p1], s[p2]});
    }

    Val reshape(Val a, Shape s) {
        if (s.numel() != shape(a).numel())
            shape_error("reshape", shape(a).str() + " -> " + s.str() + " changes element count");
        Node<T> n;
        n.op = Op::Reshape;
        n.a = a.id;
        n.shape = s;
        n.val = nodes_[a.id].val; // alias
        nodes_.push_back(std::move(n));
        return {size() - 1};
    }

    // ---- differentiation ---------------------------------------------------

    bool is_ancestor(Val anc, Val of) const {
        std::vector<char> mark(nodes_.size(), 0);
        std::vector<int> stack{of.id};
        while (!stack.empty()) {
            int i = stack.back();
            stack.pop_back();
            if (i < 0 || mark[i]) continue;
            mark[i] = 1;
            if (i == anc.id) return true;
            stack.push_back(nodes_[i].a);
            stack.push_back(nodes_[i].b);
        }
        return false;
    }

    // d(output)/d(wrt[k]) for a scalar output. Adjoints are appended to this
    // record, so results may be differentiated again. Unreachable targets
    // come back invalid; callers decide between zero tensors and rejection.
    std::vector<Val> grad(Val output, const std::vector<Val>& wrt) {
        if (shape(output).numel() != 1)
            throw std::invalid_argument("grad: output must be scalar, got " + shape(output).str());

        const int n0 = size();
        // ancestors of output
        std::vector<char> anc(n0, 0);
        {
            std::vector<int> stack{output.id};
            while (!stack.empty()) {
                int i = stack.back();
                stack.pop_back();
                if (i < 0 || anc[i]) continue;
                anc[i] = 1;
                stack.push_back(nodes_[i].a);
                stack.push_back(nodes_[i].b);
            }
        }
        // nodes whose value depends on some wrt target: adjoints only need to
        // flow where these intersect the output's ancestry
        std::vector<char> hits(n0, 0);
        for (Val w : wrt)
            if (w.valid() && w.id < n0) hits[w.id] = 1;
        for (int i = 0; i < n0; ++i) {
            if (hits[i]) continue;
            const auto& nd = nodes_[i];
            if ((nd.a >= 0 && hits[nd.a]) || (nd.b >= 0 && hits[nd.b])) hits[i] = 1;
        }

        std::vector<int> adj(n0, -1);
        auto accumulate = [&](int target, Val g) {
            if (target < 0 || target >= n0 || !hits[target]) return;
            if (adj[target] < 0)
                adj[target] = g.id;
            else
                adj[target] = add(Val{adj[target]}, g).id;
        };

        adj[output.id] = constant(T(1)).id;
        for (int i = output.id; i >= 0; --i) {
            if (adj[i] < 0 || !anc[i] || !hits[i]) continue;
            // copy: emitting adjoint nodes may reallocate nodes_
            const Node<T> nd = nodes_[i];
            Val g{adj[i]};
            backward_rule(nd, i, g, accumulate);
        }

        std::vector<Val> out;
        out.reserve(wrt.size());
        for (Val w : wrt) {
            if (w.valid() && w.id < n0 && adj[w.id] >= 0)
                out.push_back(Val{adj[w.id]});
            else
                out.push_back(Val{-1});
        }
        return out;
    }

    // floor((extent + 2*pad - k) / stride) + 1; trailing partial windows drop
    static int conv_out(int extent, int k, int stride, int pad, const char* who) {
        const int num = extent + 2 * pad - k;
        if (num < 0)
            shape_error(who, "extent " + std::to_string(extent) + " too small for kernel " +
                                 std::to_string(k) + " stride " + std::to_string(stride) + " pad " +
                                 std::to_string(pad));
        return num / stride + 1;
    }

private:
    void require_same(const char* op, Val a, Val b) const {
        if (shape(a) != shape(b)) shape_error(op, "shapes differ: " + shape(a).str() + " vs " + shape(b).str());
    }

    Val emit(Op op, int a, int b, OpAttr attr, Shape out_shape) {
        Node<T> n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.attr = attr;
        n.shape = out_shape;
        n.val = std::make_shared<std::vector<T>>(out_shape.numel());
        eval(n);
        nodes_.push_back(std::move(n));
        return {size() - 1};
    }

    void eval(Node<T>& n) {
        const std::vector<T>* A = n.a >= 0 ? nodes_[n.a].val.get() : nullptr;
        const std::vector<T>* B = n.b >= 0 ? nodes_[n.b].val.get() : nullptr;
        std::vector<T>& y = *n.val;
        const std::int64_t len = static_cast<std::int64_t>(y.size());

        switch (n.op) {
        case Op::Leaf:
        case Op::Reshape:
            break;
        case Op::Add:
            for (std::int64_t i = 0; i < len; ++i) y[i] = (*A)[i] + (*B)[i];
            break;
        case Op::Sub:
            for (std::int64_t i = 0; i < len; ++i) y[i] = (*A)[i] - (*B)[i];
            break;
        case Op::Mul:
            for (std::int64_t i = 0; i < len; ++i) y[i] = (*A)[i] * (*B)[i];
            break;
        case Op::Scale: {
            const T c = static_cast<T>(n.attr.c);
            for (std::int64_t i = 0; i < len; ++i) y[i] = c * (*A)[i];
            break;
        }
        case Op::AddScalar: {
            const T c = static_cast<T>(n.attr.c);
            for (std::int64_t i = 0; i < len; ++i) y[i] = (*A)[i] + c;
            break;
        }
        case Op::MatMul: {
            const Shape& sa = nodes_[n.a].shape;
            const bool ta = n.attr.i0, tb = n.attr.i1;
            const int m = n.shape[0], nn = n.shape[1];
            const int k = ta ? sa[0] : sa[1];
            gemm<T>(ta, tb, m, nn, k, A->data(), B->data(), y.data());
            break;
        }
        case Op::AddRowVec: {
            const int m = n.shape[0], nn = n.shape[1];
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) y[i * nn + j] = (*A)[i * nn + j] + (*B)[j];
            break;
        }
        case Op::AddColVec: {
            const int m = n.shape[0], nn = n.shape[1];
            for (int i = 0; i < m; ++i) {
                const T v = (*B)[i];
                for (int j = 0; j < nn; ++j) y[i * nn + j] = (*A)[i * nn + j] + v;
            }
            break;
        }
        case Op::RowSum: {
            const Shape& sa = nodes_[n.a].shape;
            const int m = sa[0], nn = sa[1];
            for (int i = 0; i < m; ++i) {
                T s = 0;
                for (int j = 0; j < nn; ++j) s += (*A)[i * nn + j];
                y[i] = s;
            }
            break;
        }
        case Op::ColSum: {
            const Shape& sa = nodes_[n.a].shape;
            const int m = sa[0], nn = sa[1];
            for (int j = 0; j < nn; ++j) y[j] = 0;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) y[j] += (*A)[i * nn + j];
            break;
        }
        case Op::RepeatCols: {
            const int m = n.shape[0], nn = n.shape[1];
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) y[i * nn + j] = (*A)[i];
            break;
        }
        case Op::RepeatRows: {
            const int m = n.shape[0], nn = n.shape[1];
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) y[i * nn + j] = (*A)[j];
            break;
        }
        case Op::SumAll: {
            T s = 0;
            for (T v : *A) s += v;
            y[0] = s;
            break;
        }
        case Op::Fill: {
            const T v = (*A)[0];
            for (std::int64_t i = 0; i < len; ++i) y[i] = v;
            break;
        }
        case Op::Relu:
            for (std::int64_t i = 0; i < len; ++i) y[i] = (*A)[i] > T(0) ? (*A)[i] : T(0);
            break;
        case Op::LeakyRelu: {
            const T s = static_cast<T>(n.attr.c);
            for (std::int64_t i = 0; i < len; ++i) y[i] = (*A)[i] > T(0) ? (*A)[i] : s * (*A)[i];
            break;
        }
        case Op::DRelu:
            for (std::int64_t i = 0; i < len; ++i) y[i] = (*A)[i] > T(0) ? (*B)[i] : T(0);
            break;
        case Op::DLeakyRelu: {
            const T s = static_cast<T>(n.attr.c);
            for (std::int64_t i = 0; i < len; ++i) y[i] = (*A)[i] > T(0) ? (*B)[i] : s * (*B)[i];
            break;
        }
        case Op::Tanh:
            for (std::int64_t i = 0; i < len; ++i) y[i] = std::tanh((*A)[i]);
            break;
        case Op::Sqrt:
            for (std::int64_t i = 0; i < len; ++i) y[i] = std::sqrt((*A)[i]);
            break;
        case Op::Recip:
            for (std::int64_t i = 0; i < len; ++i) y[i] = T(1) / (*A)[i];
            break;
        case Op::Im2Col: {
            const Shape& sx = nodes_[n.a].shape;
            patch_walk(sx, n.attr.i0, n.attr.i1, n.attr.i2,
                       [&](std::int64_t img_idx, std::int64_t col_idx, bool in_bounds) {
                           y[col_idx] = in_bounds ? (*A)[img_idx] : T(0);
                       });
            break;
        }
        case Op::Col2Im: {
            for (auto& v : y) v = T(0);
            patch_walk(n.shape, n.attr.i0, n.attr.i1, n.attr.i2,
                       [&](std::int64_t img_idx, std::int64_t col_idx, bool in_bounds) {
                           if (in_bounds) y[img_idx] += (*A)[col_idx];
                       });
            break;
        }
        case Op::MeanPool2: {
            const Shape& sx = nodes_[n.a].shape;
            const int nc = sx[0] * sx[1], h = sx[2], w = sx[3];
            const int oh = h / 2, ow = w / 2;
            for (int c = 0; c < nc; ++c)
                for (int i = 0; i < oh; ++i)
                    for (int j = 0; j < ow; ++j) {
                        const T* p = A->data() + (static_cast<std::int64_t>(c) * h + 2 * i) * w + 2 * j;
                        y[(static_cast<std::int64_t>(c) * oh + i) * ow + j] =
                            (p[0] + p[1] + p[w] + p[w + 1]) * T(0.25);
                    }
            break;
        }
        case Op::Upsample2: {
            const Shape& sx = nodes_[n.a].shape;
            const int nc = sx[0] * sx[1], h = sx[2], w = sx[3];
            const int oh = h * 2, ow = w * 2;
            for (int c = 0; c < nc; ++c)
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                        const T v = (*A)[(static_cast<std::int64_t>(c) * h + i) * w + j];
                        T* q = y.data() + (static_cast<std::int64_t>(c) * oh + 2 * i) * ow + 2 * j;
                        q[0] = v;
                        q[1] = v;
                        q[ow] = v;
                        q[ow + 1] = v;
                    }
            break;
        }
        case Op::Permute3: {
            const Shape& sx = nodes_[n.a].shape;
            const int d0 = sx[0], d1 = sx[1], d2 = sx[2];
            const int p[3] = {n.attr.i0, n.attr.i1, n.attr.i2};
            const int od[3] = {sx[p[0]], sx[p[1]], sx[p[2]]};
            int idx[3];
            for (idx[0] = 0; idx[0] < d0; ++idx[0])
                for (idx[1] = 0; idx[1] < d1; ++idx[1])
                    for (idx[2] = 0; idx[2] < d2; ++idx[2]) {
                        const std::int64_t src = (static_cast<std::int64_t>(idx[0]) * d1 + idx[1]) * d2 + idx[2];
                        const std::int64_t dst =
                            (static_cast<std::int64_t>(idx[p[0]]) * od[1] + idx[p[1]]) * od[2] + idx[p[2]];
                        y[dst] = (*A)[src];
                    }
            break;
        }
        }
    }

    // Enumerate (image index, column index) pairs of the im2col layout:
    // cols[(c*k + ki)*k + kj][(n*OH + oi)*OW + oj] <-> img[n][c][oi*s-p+ki][oj*s-p+kj].
    // Out-of-bounds taps report in_bounds=false (zero padding).
    template <typename F>
    static void patch_walk(const Shape& simg, int k, int stride, int pad, F&& fn) {
        const int N = simg[0], C = simg[1], H = simg[2], W = simg[3];
        const int OH = (H + 2 * pad - k) / stride + 1;
        const int OW = (W + 2 * pad - k) / stride + 1;
        const std::int64_t col_w = static_cast<std::int64_t>(N) * OH * OW;
        for (int c = 0; c < C; ++c)
            for (int ki = 0; ki < k; ++ki)
                for (int kj = 0; kj < k; ++kj) {
                    const std::int64_t row = (static_cast<std::int64_t>(c) * k + ki) * k + kj;
                    for (int n = 0; n < N; ++n) {
                        const std::int64_t img_base = (static_cast<std::int64_t>(n) * C + c) * H * W;
                        for (int oi = 0; oi < OH; ++oi) {
                            const int ii = oi * stride - pad + ki;
                            const std::int64_t col_base = row * col_w + (static_cast<std::int64_t>(n) * OH + oi) * OW;
                            const bool row_ok = ii >= 0 && ii < H;
                            for (int oj = 0; oj < OW; ++oj) {
                                const int jj = oj * stride - pad + kj;
                                const bool ok = row_ok && jj >= 0 && jj < W;
                                fn(ok ? img_base + static_cast<std::int64_t>(ii) * W + jj : 0, col_base + oj, ok);
                            }
                        }
                    }
                }
    }

    template <typename F>
    void backward_rule(const Node<T> nd, int self, Val g, F&& accumulate) {
        switch (nd.op) {
        case Op::Leaf:
            break;
        case Op::Add:
            accumulate(nd.a, g);
            accumulate(nd.b, g);
            break;
        case Op::Sub:
            accumulate(nd.a, g);
            accumulate(nd.b, scale(g, -1.0));
            break;
        case Op::Mul:
            accumulate(nd.a, mul(g, Val{nd.b}));
            accumulate(nd.b, mul(g, Val{nd.a}));
            break;
        case Op::Scale:
            accumulate(nd.a, scale(g, nd.attr.c));
            break;
        case Op::AddScalar:
            accumulate(nd.a, g);
            break;
        case Op::MatMul: {
            const bool ta = nd.attr.i0, tb = nd.attr.i1;
            Val a{nd.a}, b{nd.b};
            if (!ta && !tb) {
                accumulate(nd.a, matmul(g, b, false, true));
                accumulate(nd.b, matmul(a, g, true, false));
            } else if (!ta && tb) {
                accumulate(nd.a, matmul(g, b, false, false));
                accumulate(nd.b, matmul(g, a, true, false));
            } else if (ta && !tb) {
                accumulate(nd.a, matmul(b, g, false, true));
                accumulate(nd.b, matmul(a, g, false, false));
            } else {
                accumulate(nd.a, matmul(b, g, true, true));
                accumulate(nd.b, matmul(g, a, true, true));
            }
            break;
        }
        case Op::AddRowVec:
            accumulate(nd.a, g);
            accumulate(nd.b, col_sum(g));
            break;
        case Op::AddColVec:
            accumulate(nd.a, g);
            accumulate(nd.b, row_sum(g));
            break;
        case Op::RowSum:
            accumulate(nd.a, repeat_cols(g, nodes_[nd.a].shape[1]));
            break;
        case Op::ColSum:
            accumulate(nd.a, repeat_rows(g, nodes_[nd.a].shape[0]));
            break;
        case Op::RepeatCols:
            accumulate(nd.a, row_sum(g));
            break;
        case Op::RepeatRows:
            accumulate(nd.a, col_sum(g));
            break;
        case Op::SumAll:
            accumulate(nd.a, fill(g, nodes_[nd.a].shape));
            break;
        case Op::Fill:
            accumulate(nd.a, sum_all(g));
            break;
        case Op::Relu:
            accumulate(nd.a, drelu(Val{nd.a}, g));
            break;
        case Op::LeakyRelu:
            accumulate(nd.a, dleaky_relu(Val{nd.a}, g, nd.attr.c));
            break;
        case Op::DRelu:
            accumulate(nd.b, drelu(Val{nd.a}, g));
            break;
        case Op::DLeakyRelu:
            accumulate(nd.b, dleaky_relu(Val{nd.a}, g, nd.attr.c));
            break;
        case Op::Tanh: {
            Val y{self};
            Val one_minus = add_scalar(scale(mul(y, y), -1.0), 1.0);
            accumulate(nd.a, mul(g, one_minus));
            break;
        }
        case Op::Sqrt: {
            Val y{self};
            accumulate(nd.a, mul(g, scale(recip(y), 0.5)));
            break;
        }
        case Op::Recip: {
            Val y{self};
            accumulate(nd.a, scale(mul(g, mul(y, y)), -1.0));
            break;
        }
        case Op::Im2Col: {
            const Shape img = nodes_[nd.a].shape;
            accumulate(nd.a, col2im(g, img, nd.attr.i0, nd.attr.i1, nd.attr.i2));
            break;
        }
        case Op::Col2Im:
            accumulate(nd.a, im2col(g, nd.attr.i0, nd.attr.i1, nd.attr.i2));
            break;
        case Op::MeanPool2:
            accumulate(nd.a, scale(upsample2(g), 0.25));
            break;
        case Op::Upsample2:
            accumulate(nd.a, scale(mean_pool2(g), 4.0));
            break;
        case Op::Permute3: {
            int inv[3];
            inv[nd.attr.i0] = 0;
            inv[nd.attr.i1] = 1;
            inv[nd.attr.i2] = 2;
            accumulate(nd.a, permute3(g, inv[0], inv[1], inv[2]));
            break;
        }
        case Op::Reshape:
            accumulate(nd.a, reshape(g, nodes_[nd.a].shape));
            break;
        }
    }

    std::vector<Node<T>> nodes_;
};

} // namespace chaingan
