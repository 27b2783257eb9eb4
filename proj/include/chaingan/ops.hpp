#pragma once

#include <functional>
#include <string>

#include "chaingan/tape.hpp"

namespace chaingan::ops {

// y = x * W^T + b with x [N, in], W [out, in], b [out]
template <typename T>
Val linear(Tape<T>& tp, Val x, Val w, Val b) {
    Val y = tp.matmul(x, w, false, true);
    return b.valid() ? tp.add_rowvec(y, b) : y;
}

template <typename T>
Val mean_all(Tape<T>& tp, Val x) {
    return tp.scale(tp.sum_all(x), 1.0 / static_cast<double>(tp.shape(x).numel()));
}

// per-row Euclidean norm of [m,n]; the epsilon keeps the norm subdifferentiable
// at zero gradient fields (constant critics) without measurably biasing it
template <typename T>
Val l2_norm_rows(Tape<T>& tp, Val x, double eps = 1e-12) {
    Val sq = tp.row_sum(tp.mul(x, x));
    return tp.sqrt(tp.add_scalar(sq, eps));
}

// x [N,C,H,W] conv weight [OC, C*k*k] (+bias [OC]) -> [N,OC,OH,OW]
template <typename T>
Val conv2d(Tape<T>& tp, Val x, Val w, Val b, int k, int stride, int pad) {
    const Shape& sx = tp.shape(x);
    const int n = sx[0];
    const int oc = tp.shape(w)[0];
    const int oh = Tape<T>::conv_out(sx[2], k, stride, pad, "conv2d");
    const int ow = Tape<T>::conv_out(sx[3], k, stride, pad, "conv2d");
    Val cols = tp.im2col(x, k, stride, pad);      // [C*k*k, N*OH*OW]
    Val y = tp.matmul(w, cols);                   // [OC, N*OH*OW]
    if (b.valid()) y = tp.add_colvec(y, b);
    y = tp.reshape(y, Shape{oc, n, oh * ow});
    y = tp.permute3(y, 1, 0, 2);                  // [N, OC, OH*OW]
    return tp.reshape(y, Shape{n, oc, oh, ow});
}

// transposed convolution; exact adjoint of conv2d(k, stride, pad) on the
// output geometry. x [N,CI,H,W], w [CI, CO*k*k] -> [N,CO,out_h,out_w]
template <typename T>
Val conv_transpose2d(Tape<T>& tp, Val x, Val w, Val b, int k, int stride, int pad) {
    const Shape& sx = tp.shape(x);
    const int n = sx[0], ci = sx[1], h = sx[2], wd = sx[3];
    const int co = tp.shape(w)[1] / (k * k);
    const int out_h = (h - 1) * stride - 2 * pad + k;
    const int out_w = (wd - 1) * stride - 2 * pad + k;
    Val x3 = tp.reshape(x, Shape{n, ci, h * wd});
    Val x2 = tp.reshape(tp.permute3(x3, 1, 0, 2), Shape{ci, n * h * wd});
    Val cols = tp.matmul(w, x2, true, false);     // [CO*k*k, N*H*W]
    Val y = tp.col2im(cols, Shape{n, co, out_h, out_w}, k, stride, pad);
    if (b.valid()) {
        Val y3 = tp.reshape(y, Shape{n, co, out_h * out_w});
        Val y2 = tp.reshape(tp.permute3(y3, 1, 0, 2), Shape{co, n * out_h * out_w});
        y2 = tp.add_colvec(y2, b);
        y = tp.reshape(tp.permute3(tp.reshape(y2, Shape{co, n, out_h * out_w}), 1, 0, 2),
                       Shape{n, co, out_h, out_w});
    }
    return y;
}

struct BatchNormResult {
    Val out;
    Val batch_mean; // [C]
    Val batch_var;  // [C], biased
};

// Training-mode batch norm over [N,C,H,W] with per-channel statistics.
// Built from reduction primitives so the statistics stay on the record and
// gradients flow through them.
template <typename T>
BatchNormResult batch_norm_train(Tape<T>& tp, Val x, Val gamma, Val beta, double eps = 1e-5) {
    const Shape& s = tp.shape(x);
    const int n = s[0], c = s[1], hw = s.rank == 4 ? s[2] * s[3] : 1;
    const int cols = n * hw;
    Val x2 = tp.reshape(tp.permute3(tp.reshape(x, Shape{n, c, hw}), 1, 0, 2), Shape{c, cols});
    Val mean = tp.scale(tp.row_sum(x2), 1.0 / cols);
    Val centered = tp.sub(x2, tp.repeat_cols(mean, cols));
    Val var = tp.scale(tp.row_sum(tp.mul(centered, centered)), 1.0 / cols);
    Val inv = tp.recip(tp.sqrt(tp.add_scalar(var, eps)));
    Val xhat = tp.mul(centered, tp.repeat_cols(inv, cols));
    Val y2 = tp.add_colvec(tp.mul(xhat, tp.repeat_cols(gamma, cols)), beta);
    Val y = tp.reshape(tp.permute3(tp.reshape(y2, Shape{c, n, hw}), 1, 0, 2), s);
    return {y, mean, var};
}

// Evaluation-mode batch norm with fixed statistics folded into scale/shift.
template <typename T>
Val batch_norm_eval(Tape<T>& tp, Val x, Val scale_c, Val shift_c) {
    const Shape& s = tp.shape(x);
    const int n = s[0], c = s[1], hw = s.rank == 4 ? s[2] * s[3] : 1;
    const int cols = n * hw;
    Val x2 = tp.reshape(tp.permute3(tp.reshape(x, Shape{n, c, hw}), 1, 0, 2), Shape{c, cols});
    Val y2 = tp.add_colvec(tp.mul(x2, tp.repeat_cols(scale_c, cols)), shift_c);
    return tp.reshape(tp.permute3(tp.reshape(y2, Shape{c, n, hw}), 1, 0, 2), s);
}

// d(scalar)/d(input) for an input leaf of the same record. The result is a
// record value, so it can be differentiated again (the penalty term needs
// d(||grad||-1)^2 / d(weights)). Inputs that never fed the scalar are
// rejected rather than zeroed: asking for this gradient is a structural
// mistake, unlike an unused parameter.
template <typename T>
Val grad_wrt_input(Tape<T>& tp, Val scalar, Val wrt_input) {
    if (!tp.is_ancestor(wrt_input, scalar))
        throw std::invalid_argument("grad_wrt_input: input is not an ancestor of the scalar");
    auto g = tp.grad(scalar, {wrt_input});
    if (!g[0].valid())
        throw std::invalid_argument("grad_wrt_input: no gradient path reaches the input");
    return g[0];
}

// Max relative error between an analytic gradient and central finite
// differences of fn around point. fn must be a deterministic scalar function.
template <typename T>
struct FiniteDiffReport {
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::int64_t worst_index = -1;
    bool pass = false;
};

template <typename T>
FiniteDiffReport<T> finite_diff_check(const std::function<T(const Tensor<T>&)>& fn, const Tensor<T>& point,
                                      const Tensor<T>& analytic_grad, double step, double tolerance) {
    FiniteDiffReport<T> rep;
    rep.tolerance = tolerance;
    Tensor<T> probe = point.clone();
    for (std::int64_t i = 0; i < point.numel(); ++i) {
        const T saved = probe[i];
        probe[i] = saved + static_cast<T>(step);
        const double fp = static_cast<double>(fn(probe));
        probe[i] = saved - static_cast<T>(step);
        const double fm = static_cast<double>(fn(probe));
        probe[i] = saved;
        const double fd = (fp - fm) / (2.0 * step);
        const double an = static_cast<double>(analytic_grad[i]);
        const double denom = std::max({std::abs(an), std::abs(fd), 1e-4});
        const double rel = std::abs(an - fd) / denom;
        if (rel > rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_index = i;
        }
    }
    rep.pass = rep.max_rel_error <= tolerance;
    return rep;
}

} // namespace chaingan::ops
