#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "chaingan/ops.hpp"
#include "chaingan/rng.hpp"
#include "chaingan/tape.hpp"

namespace chaingan {

// Named trainable tensor. Names are slash-free dotted paths, unique per model.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;

    Parameter() = default;
    Parameter(std::string n, Shape s) : name(std::move(n)), value(s) { value.requires_grad = true; }
};

// Maps parameters (and auxiliary buffers) to leaf nodes of one record, so a
// parameter used twice in a pass binds to a single node.
template <typename T>
class Binding {
public:
    explicit Binding(Tape<T>& tape) : tape_(&tape) {}

    Val use(const Parameter<T>& p) {
        auto it = ids_.find(&p.value.vec());
        if (it != ids_.end()) return Val{it->second};
        Val v = tape_->leaf(p.value);
        ids_.emplace(&p.value.vec(), v.id);
        return v;
    }

    Val use(const Tensor<T>& t) {
        auto it = ids_.find(&t.vec());
        if (it != ids_.end()) return Val{it->second};
        Val v = tape_->leaf(t);
        ids_.emplace(&t.vec(), v.id);
        return v;
    }

    Tape<T>& tape() { return *tape_; }

private:
    Tape<T>* tape_;
    std::unordered_map<const void*, int> ids_;
};

template <typename T>
void init_normal(Tensor<T>& t, Rng& rng, double stddev) {
    for (auto& v : t.vec()) v = static_cast<T>(rng.normal(0.0, stddev));
}

// d(scalar)/d(param) for each parameter. Parameters with no path to the
// scalar (including paths that exist only through piecewise-constant
// activation masks) get exact zero tensors.
template <typename T>
std::vector<Tensor<T>> backward(Binding<T>& binding, Val scalar,
                                const std::vector<Parameter<T>*>& params) {
    Tape<T>& tp = binding.tape();
    std::vector<Val> wrt;
    wrt.reserve(params.size());
    for (auto* p : params) wrt.push_back(binding.use(*p));
    auto grads = tp.grad(scalar, wrt);
    std::vector<Tensor<T>> out;
    out.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].valid())
            out.push_back(tp.tensor(grads[i]));
        else
            out.push_back(Tensor<T>(params[i]->value.shape()));
    }
    return out;
}

// ---- layers -----------------------------------------------------------------

template <typename T>
struct Linear {
    Parameter<T> weight; // [out, in]
    Parameter<T> bias;   // [out]

    Linear() = default;
    Linear(const std::string& prefix, int in, int out, Rng& rng, double init_std = 0.02)
        : weight(prefix + ".weight", Shape{out, in}), bias(prefix + ".bias", Shape{out}) {
        init_normal(weight.value, rng, init_std);
    }

    Val forward(Binding<T>& b, Val x) const {
        return ops::linear(b.tape(), x, b.use(weight), b.use(bias));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
};

template <typename T>
struct Conv2d {
    Parameter<T> weight; // [OC, CI*k*k]
    Parameter<T> bias;   // [OC]
    int k = 3, stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(const std::string& prefix, int ci, int co, int k_, int stride_, int pad_, Rng& rng,
           double init_std = 0.02)
        : weight(prefix + ".weight", Shape{co, ci * k_ * k_}), bias(prefix + ".bias", Shape{co}),
          k(k_), stride(stride_), pad(pad_) {
        init_normal(weight.value, rng, init_std);
    }

    Val forward(Binding<T>& b, Val x) const {
        return ops::conv2d(b.tape(), x, b.use(weight), b.use(bias), k, stride, pad);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
};

template <typename T>
struct ConvTranspose2d {
    Parameter<T> weight; // [CI, CO*k*k]
    Parameter<T> bias;   // [CO]
    int k = 2, stride = 2, pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(const std::string& prefix, int ci, int co, int k_, int stride_, int pad_, Rng& rng,
                    double init_std = 0.02)
        : weight(prefix + ".weight", Shape{ci, co * k_ * k_}), bias(prefix + ".bias", Shape{co}),
          k(k_), stride(stride_), pad(pad_) {
        init_normal(weight.value, rng, init_std);
    }

    Val forward(Binding<T>& b, Val x) const {
        return ops::conv_transpose2d(b.tape(), x, b.use(weight), b.use(bias), k, stride, pad);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
};

// Batch statistics in training mode; running statistics (momentum 0.9) in
// evaluation mode. Running buffers are the only state mutated by a forward.
template <typename T>
struct BatchNorm {
    Parameter<T> gamma; // [C]
    Parameter<T> beta;  // [C]
    mutable Tensor<T> running_mean;
    mutable Tensor<T> running_var;
    double momentum = 0.9;
    double eps = 1e-5;

    std::string prefix;

    BatchNorm() = default;
    BatchNorm(const std::string& prefix_, int c)
        : gamma(prefix_ + ".gamma", Shape{c}), beta(prefix_ + ".beta", Shape{c}),
          running_mean(Shape{c}), running_var(Shape{c}, T(1)), prefix(prefix_) {
        for (auto& v : gamma.value.vec()) v = T(1);
    }

    Val forward(Binding<T>& b, Val x, bool training) const {
        Tape<T>& tp = b.tape();
        if (training) {
            auto r = ops::batch_norm_train(tp, x, b.use(gamma), b.use(beta), eps);
            // update running stats from the freshly computed batch stats
            const auto& mean = tp.values(r.batch_mean);
            const auto& var = tp.values(r.batch_var);
            const Shape& s = tp.shape(x);
            const double cnt = static_cast<double>(s[0]) * (s.rank == 4 ? s[2] * s[3] : 1);
            const double unbias = cnt > 1 ? cnt / (cnt - 1.0) : 1.0;
            for (std::int64_t i = 0; i < running_mean.numel(); ++i) {
                running_mean[i] = static_cast<T>(momentum * running_mean[i] + (1 - momentum) * mean[i]);
                running_var[i] =
                    static_cast<T>(momentum * running_var[i] + (1 - momentum) * unbias * var[i]);
            }
            return r.out;
        }
        const int c = static_cast<int>(running_mean.numel());
        Tensor<T> sc(Shape{c}), sh(Shape{c});
        for (int i = 0; i < c; ++i) {
            const double s = static_cast<double>(gamma.value[i]) /
                             std::sqrt(static_cast<double>(running_var[i]) + eps);
            sc[i] = static_cast<T>(s);
            sh[i] = static_cast<T>(static_cast<double>(beta.value[i]) -
                                   static_cast<double>(running_mean[i]) * s);
        }
        return ops::batch_norm_eval(tp, x, tp.leaf(sc), tp.leaf(sh));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }

    void collect_buffers(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
        out.push_back({prefix + ".running_mean", &running_mean});
        out.push_back({prefix + ".running_var", &running_var});
    }
};

} // namespace chaingan
