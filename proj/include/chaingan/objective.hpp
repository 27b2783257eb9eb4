#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "chaingan/models.hpp"

namespace chaingan {

enum class EditorLossMode { Standard, Competition, Discounted };

struct LossConfig {
    double gp_coefficient = 10.0; // lambda
    EditorLossMode editor_loss_mode = EditorLossMode::Standard;
    double editor_discount = 0.9; // lambda_e for the experimental modes

    void validate() const {
        if (gp_coefficient < 0) throw std::invalid_argument("loss: gp_coefficient must be >= 0");
        if (editor_discount < 0 || editor_discount > 1)
            throw std::invalid_argument("loss: editor_discount must be in [0,1]");
    }
};

// row-wise convex combination eps*x + (1-eps)*x_tilde, one eps per sample
template <typename T>
Tensor<T> interpolate(const Tensor<T>& x, const Tensor<T>& x_tilde, const std::vector<double>& eps) {
    if (x.shape() != x_tilde.shape())
        throw std::invalid_argument("interpolate: shapes differ: " + x.shape().str() + " vs " +
                                    x_tilde.shape().str());
    const int batch = x.shape()[0];
    if (static_cast<int>(eps.size()) != batch)
        throw std::invalid_argument("interpolate: need one epsilon per batch row");
    const std::int64_t row = x.numel() / batch;
    Tensor<T> out(x.shape());
    for (int b = 0; b < batch; ++b) {
        const T e = static_cast<T>(eps[b]);
        for (std::int64_t j = 0; j < row; ++j) {
            const std::int64_t idx = b * row + j;
            out[idx] = e * x[idx] + (T(1) - e) * x_tilde[idx];
        }
    }
    return out;
}

// lambda * mean_k (||d D_i(x_hat_k)/d x_hat_k||_2 - 1)^2, differentiable in
// the critic parameters via the double-backprop record
template <typename T>
Val gradient_penalty(Binding<T>& b, CriticBank<T>& bank, int stage, Val x_hat, double lambda) {
    if (lambda < 0) throw std::invalid_argument("gradient_penalty: lambda must be >= 0");
    Tape<T>& tp = b.tape();
    if (lambda == 0) return tp.constant(T(0));
    Val scores = bank.score(b, stage, x_hat);
    // critics never mix samples (no batch norm), so the gradient of the
    // summed scores is the per-sample gradient
    Val total = tp.sum_all(scores);
    Val gx = ops::grad_wrt_input(tp, total, x_hat);
    const Shape& s = tp.shape(gx);
    const int batch = s[0];
    Val flat = tp.reshape(gx, Shape{batch, static_cast<int>(s.numel() / batch)});
    Val norms = ops::l2_norm_rows(tp, flat);
    Val dm1 = tp.add_scalar(norms, -1.0);
    return tp.scale(ops::mean_all(tp, tp.mul(dm1, dm1)), lambda);
}

struct CriticLossParts {
    Val loss;
    Val real_mean;
    Val fake_mean;
    Val penalty;
};

// minimized critic objective: E[D(fake)] - E[D(real)] + penalty
template <typename T>
CriticLossParts critic_loss_parts(Binding<T>& b, CriticBank<T>& bank, int stage, Val x_real, Val x_fake,
                                  Val x_hat, double lambda) {
    Tape<T>& tp = b.tape();
    if (tp.shape(x_real)[0] < 1 || tp.shape(x_fake)[0] < 1)
        throw std::invalid_argument("critic_loss: empty batch");
    CriticLossParts parts;
    parts.real_mean = ops::mean_all(tp, bank.score(b, stage, x_real));
    parts.fake_mean = ops::mean_all(tp, bank.score(b, stage, x_fake));
    parts.loss = tp.sub(parts.fake_mean, parts.real_mean);
    if (lambda > 0) {
        parts.penalty = gradient_penalty(b, bank, stage, x_hat, lambda);
        parts.loss = tp.add(parts.loss, parts.penalty);
    } else {
        parts.penalty = tp.constant(T(0));
    }
    return parts;
}

template <typename T>
Val critic_loss(Binding<T>& b, CriticBank<T>& bank, int stage, Val x_real, Val x_fake, Val x_hat,
                double lambda) {
    return critic_loss_parts(b, bank, stage, x_real, x_fake, x_hat, lambda).loss;
}

// generator-side loss for stage i: mean of -D_i(x_tilde_i)
template <typename T>
Val generator_loss_standard(Binding<T>& b, CriticBank<T>& bank, int stage, Val x_tilde) {
    Tape<T>& tp = b.tape();
    return tp.scale(ops::mean_all(tp, bank.score(b, stage, x_tilde)), -1.0);
}

// -D_i(x_tilde_i) + lambda_e * D_{i-1}(x_tilde_{i-1}); the previous stage's
// sample must enter as a constant so no gradient crosses the stage boundary
template <typename T>
Val editor_loss_competition(Binding<T>& b, CriticBank<T>& bank, int stage, Val x_tilde,
                            Val x_tilde_prev, double lambda_e) {
    if (stage < 1)
        throw std::invalid_argument("editor_loss_competition: stage 0 has no predecessor");
    Tape<T>& tp = b.tape();
    Val own = generator_loss_standard(b, bank, stage, x_tilde);
    Val prev = ops::mean_all(tp, bank.score(b, stage - 1, x_tilde_prev));
    return tp.add(own, tp.scale(prev, lambda_e));
}

// -(D_i(x_i) + lambda_e D_{i+1}(x_{i+1}) + ... + lambda_e^{n-i} D_n(x_n));
// outputs[j] holds x_tilde_{stage+j}
template <typename T>
Val editor_loss_discounted(Binding<T>& b, CriticBank<T>& bank, int stage,
                           const std::vector<Val>& outputs, int n_stages, double lambda_e) {
    if (static_cast<int>(outputs.size()) != n_stages - stage)
        throw std::invalid_argument("editor_loss_discounted: need outputs for stages " +
                                    std::to_string(stage) + ".." + std::to_string(n_stages - 1) + ", got " +
                                    std::to_string(outputs.size()));
    Tape<T>& tp = b.tape();
    Val loss = generator_loss_standard(b, bank, stage, outputs[0]);
    double w = 1.0;
    for (int j = 1; j < static_cast<int>(outputs.size()); ++j) {
        w *= lambda_e;
        if (w == 0.0) break;
        Val term = tp.scale(ops::mean_all(tp, bank.score(b, stage + j, outputs[j])), -w);
        loss = tp.add(loss, term);
    }
    return loss;
}

// critic-side Wasserstein estimate E[D_i(real)] - E[D_i(fake)]
template <typename T>
Val wasserstein_estimate(Binding<T>& b, CriticBank<T>& bank, int stage, Val x_real, Val x_fake) {
    Tape<T>& tp = b.tape();
    return tp.sub(ops::mean_all(tp, bank.score(b, stage, x_real)),
                  ops::mean_all(tp, bank.score(b, stage, x_fake)));
}

} // namespace chaingan
