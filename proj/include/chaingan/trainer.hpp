#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "chaingan/adam.hpp"
#include "chaingan/checkpoint.hpp"
#include "chaingan/data.hpp"
#include "chaingan/metrics.hpp"
#include "chaingan/objective.hpp"

namespace chaingan {

enum class TrainingMode { Independent, EndToEnd };

// Training-loop configuration. The optimizer and loop defaults are the
// published defaults: lambda=10, n_critic=5, alpha=1e-4, betas (0.5, 0.9),
// batch size 64.
struct TrainConfig {
    ArchSpec arch;
    LossConfig loss;

    double learning_rate = 0.0001;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double adam_epsilon = 1e-8;
    int n_critic = 5;
    int batch_size = 64;

    std::int64_t total_iterations = 1000;
    std::uint64_t seed = 1;
    CriticMode critic_mode = CriticMode::Multi;
    TrainingMode training_mode = TrainingMode::Independent;
    std::string dataset_id = "ring8";

    std::int64_t checkpoint_every = 0; // 0: only on demand
    std::int64_t metrics_every = 1;

    int n_heads() const { return critic_mode == CriticMode::Single ? 1 : arch.n_editors + 1; }

    void validate() const {
        arch.validate();
        loss.validate();
        if (learning_rate <= 0 || n_critic < 1 || batch_size < 1 || total_iterations < 0)
            throw std::invalid_argument("train: nonpositive learning_rate/n_critic/batch/iterations");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw std::invalid_argument("train: betas must lie in [0,1)");
    }
};

// i ~ Cat(0, n): uniform over the base generator and the n editors
inline int select_stage(Rng& rng, int n) {
    if (n < 0) throw std::invalid_argument("select_stage: n must be >= 0");
    return rng.uniform_int(n + 1);
}

template <typename T>
struct IterationRecord {
    std::int64_t iteration = 0;
    int stage = 0;
    double critic_loss = 0.0; // mean over the n_critic inner steps
    double gen_loss = 0.0;
    std::vector<double> w_est;            // last known per-stage estimate
    std::int64_t differentiated_params = 0; // generator-side gradient targets
    int critic_steps = 0;
};

// one CSV row: iteration,stage,critic_loss,gen_loss,w_0..w_n
template <typename T>
std::string format_metrics_row(const IterationRecord<T>& r) {
    char buf[64];
    std::string s = std::to_string(r.iteration) + "," + std::to_string(r.stage);
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, ",%.10g", v);
        s += buf;
    };
    num(r.critic_loss);
    num(r.gen_loss);
    for (double w : r.w_est) num(w);
    return s;
}

inline std::string metrics_header(int n_stages) {
    std::string s = "iteration,stage,critic_loss,gen_loss";
    for (int i = 0; i < n_stages; ++i) s += ",w_" + std::to_string(i);
    return s;
}

// Algorithm: per iteration pick one stage, run n_critic critic updates on
// that stage's head (plus shared trunk), then one Adam step on that stage's
// parameters only. End-to-end mode instead scores the final output and
// updates the whole chain.
template <typename T>
class Trainer {
public:
    using Observer = std::function<void(const IterationRecord<T>&)>;

    Trainer(const TrainConfig& cfg, std::uint64_t config_digest = 0)
        : cfg_(cfg), digest_(config_digest), rng_(cfg.seed),
          data_(make_dataset(cfg.dataset_id, cfg.seed)) {
        cfg_.validate();
        Rng init_rng(cfg.seed ^ 0xda3e39cb94b95bdbull);
        gen_ = build_chain_generator<T>(cfg_.arch, init_rng);
        bank_ = build_critic_bank<T>(cfg_.arch, cfg_.n_heads(), cfg_.critic_mode, init_rng);
        w_est_.assign(gen_.n_stages(), 0.0);
        auto all = gen_.all_params();
        auto cp = bank_.all_params();
        all.insert(all.end(), cp.begin(), cp.end());
        check_unique_names(all);
    }

    ChainGenerator<T>& generator() { return gen_; }
    CriticBank<T>& critic() { return bank_; }
    Dataset<T>& dataset() { return data_; }
    Rng& rng() { return rng_; }
    std::int64_t iteration() const { return iter_; }
    const TrainConfig& config() const { return cfg_; }

    // runs until total_iterations, invoking the observer after each iteration
    void run(const Observer& obs = {}) { run_until(cfg_.total_iterations, obs); }

    // runs to min(until, total_iterations); lets a driver pause a run early
    // without changing what the run is
    void run_until(std::int64_t until, const Observer& obs = {}) {
        const std::int64_t stop = std::min(until, cfg_.total_iterations);
        while (iter_ < stop) {
            IterationRecord<T> rec = step();
            if (obs) obs(rec);
        }
    }

    IterationRecord<T> step() {
        IterationRecord<T> rec;
        rec.iteration = iter_ + 1;
        const int n = cfg_.arch.n_editors;
        const bool e2e = cfg_.training_mode == TrainingMode::EndToEnd;
        const int stage = e2e ? n : select_stage(rng_, n);
        rec.stage = stage;

        rec.critic_loss = critic_inner_loop(stage, rec);
        if (e2e)
            rec.gen_loss = stage_update_end_to_end(rec);
        else
            rec.gen_loss = stage_update(stage, rec);

        ++iter_;
        rec.w_est = w_est_;
        return rec;
    }

    // n_critic critic updates on head `stage` (+ shared trunk); generator
    // parameters are never touched here
    double critic_inner_loop(int stage, IterationRecord<T>& rec) {
        double closs = 0;
        for (int j = 0; j < cfg_.n_critic; ++j) {
            closs += critic_inner_step(stage);
            ++rec.critic_steps;
        }
        return closs / cfg_.n_critic;
    }

    // ---- checkpointing -------------------------------------------------------

    void save_checkpoint(const std::string& path) {
        CheckpointFile ck;
        ck.config_digest = digest_;
        ck.put_i64("trainer.iteration", iter_);
        const auto st = rng_.state();
        ck.put_u64s("rng.state", {st.s[0], st.s[1], st.s[2], st.s[3]});
        ck.put_f64s("rng.gauss", {st.has_spare ? 1.0 : 0.0, st.spare});
        ck.put_i64("data.epoch", data_.epoch());
        ck.put_i64("data.cursor", data_.cursor());
        ck.put_f64s("trainer.w_est", w_est_);
        for (const auto* p : all_params_list()) ck.put_tensor("param." + p->name, p->value);
        for (const auto& [name, buf] : all_buffers()) ck.put_tensor("buffer." + name, *buf);
        for (const auto& [name, state] : adam_) {
            ck.put_tensor("adam.m." + name, state.m);
            ck.put_tensor("adam.v." + name, state.v);
            ck.put_i64("adam.t." + name, state.t);
        }
        ck.save(path);
    }

    void load_checkpoint(const std::string& path) {
        CheckpointFile ck = CheckpointFile::load(path);
        if (ck.config_digest != digest_)
            throw std::runtime_error("checkpoint: config digest " + std::to_string(ck.config_digest) +
                                     " does not match current config " + std::to_string(digest_));
        iter_ = ck.read_i64("trainer.iteration");
        auto su = ck.read_u64s("rng.state");
        auto sg = ck.read_f64s("rng.gauss");
        Rng::State st;
        st.s = {su[0], su[1], su[2], su[3]};
        st.has_spare = sg[0] != 0.0;
        st.spare = sg[1];
        rng_.set_state(st);
        data_.restore_position(ck.read_i64("data.epoch"), ck.read_i64("data.cursor"));
        w_est_ = ck.read_f64s("trainer.w_est");
        for (auto* p : all_params_list()) ck.read_tensor("param." + p->name, p->value);
        for (const auto& [name, buf] : all_buffers()) ck.read_tensor("buffer." + name, *buf);
        adam_.clear();
        for (const auto& [key, blob] : ck.entries()) {
            if (key.rfind("adam.m.", 0) != 0) continue;
            const std::string pname = key.substr(7);
            Parameter<T>* p = find_param(pname);
            if (!p) throw std::runtime_error("checkpoint: optimizer state for unknown parameter " + pname);
            AdamState<T> state(p->value.shape());
            ck.read_tensor("adam.m." + pname, state.m);
            ck.read_tensor("adam.v." + pname, state.v);
            state.t = ck.read_i64("adam.t." + pname);
            adam_.emplace(pname, std::move(state));
        }
    }

    // one generator-side Adam step confined to stage i's parameters
    double stage_update(int stage, IterationRecord<T>& rec) {
        const int n_stages = gen_.n_stages();
        Tensor<T> z = sample_noise(cfg_.batch_size);

        Tape<T> tape;
        Binding<T> b(tape);

        // stages before i never enter the record; their output arrives as a
        // constant (this is what keeps one editor's graph per iteration)
        Tensor<T> prev;
        if (stage > 0) prev = gen_.forward_values(z, stage - 1, /*training=*/true)[stage - 1];

        Val loss;
        const EditorLossMode mode = cfg_.loss.editor_loss_mode;
        if (mode == EditorLossMode::Discounted) {
            std::vector<Val> outs;
            Val x = stage == 0 ? gen_.base->forward(b, tape.leaf(z), true)
                               : gen_.editors[stage - 1]->forward(b, tape.leaf(prev), true);
            outs.push_back(x);
            for (int j = stage + 1; j < n_stages; ++j)
                outs.push_back(gen_.editors[j - 1]->forward(b, outs.back(), true));
            loss = editor_loss_discounted(b, bank_, stage, outs, n_stages, cfg_.loss.editor_discount);
        } else {
            Val x = stage == 0 ? gen_.base->forward(b, tape.leaf(z), true)
                               : gen_.editors[stage - 1]->forward(b, tape.leaf(prev), true);
            if (mode == EditorLossMode::Competition && stage >= 1)
                loss = editor_loss_competition(b, bank_, stage, x, tape.leaf(prev),
                                               cfg_.loss.editor_discount);
            else
                loss = generator_loss_standard(b, bank_, stage, x);
        }

        const double lv = tape.values(loss)[0];
        if (!std::isfinite(lv))
            throw DivergenceError("generator loss diverged at iteration " + std::to_string(iter_ + 1) +
                                  ", stage " + std::to_string(stage));
        auto params = gen_.stage_params(stage);
        auto grads = backward(b, loss, params);
        apply_adam(params, grads);
        for (auto* p : params) rec.differentiated_params += p->value.numel();
        return lv;
    }

private:
    static Dataset<T> make_dataset(const std::string& id, std::uint64_t seed) {
        if (id == "ring8" || id == "grid25") return Dataset<T>::mixture(id);
        const std::string prefix = "idx-images:";
        if (id.rfind(prefix, 0) == 0) return Dataset<T>::idx_images(id.substr(prefix.size()), seed);
        throw std::invalid_argument("dataset: unknown id '" + id + "'");
    }

    Tensor<T> sample_noise(int m) {
        Tensor<T> z(Shape{m, cfg_.arch.noise_dim});
        for (auto& v : z.vec()) v = static_cast<T>(rng_.normal());
        return z;
    }

    // one critic Adam step on head `stage` + shared trunk, fresh samples
    double critic_inner_step(int stage) {
        Tensor<T> x = data_.next_batch(cfg_.batch_size, rng_);
        Tensor<T> z = sample_noise(cfg_.batch_size);
        Tensor<T> fake = gen_.forward_values(z, stage, /*training=*/true)[stage];
        std::vector<double> eps(cfg_.batch_size);
        for (auto& e : eps) e = rng_.uniform();
        Tensor<T> xhat = interpolate(x, fake, eps);

        Tape<T> tape;
        Binding<T> b(tape);
        Val xhv = tape.leaf(xhat);
        auto parts = critic_loss_parts(b, bank_, stage, tape.leaf(x), tape.leaf(fake), xhv,
                                       cfg_.loss.gp_coefficient);
        const double loss = tape.values(parts.loss)[0];
        if (!std::isfinite(loss))
            throw DivergenceError("critic loss diverged at iteration " + std::to_string(iter_ + 1) +
                                  ", stage " + std::to_string(stage));
        auto params = bank_.stage_params(stage);
        auto grads = backward(b, parts.loss, params);
        apply_adam(params, grads);
        w_est_[stage] = tape.values(parts.real_mean)[0] - tape.values(parts.fake_mean)[0];
        return loss;
    }

    // end-to-end ablation: one optimizer over the whole chain, final output
    // scored by the last head
    double stage_update_end_to_end(IterationRecord<T>& rec) {
        const int n = cfg_.arch.n_editors;
        Tensor<T> z = sample_noise(cfg_.batch_size);
        Tape<T> tape;
        Binding<T> b(tape);
        auto outs = gen_.forward(b, tape.leaf(z), n, /*training=*/true);
        Val loss = generator_loss_standard(b, bank_, n, outs.back());
        const double lv = tape.values(loss)[0];
        if (!std::isfinite(lv))
            throw DivergenceError("generator loss diverged at iteration " + std::to_string(iter_ + 1) +
                                  " (end-to-end)");
        auto params = gen_.all_params();
        auto grads = backward(b, loss, params);
        apply_adam(params, grads);
        for (auto* p : params) rec.differentiated_params += p->value.numel();
        return lv;
    }

    void apply_adam(const std::vector<Parameter<T>*>& params, const std::vector<Tensor<T>>& grads) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto [it, fresh] = adam_.try_emplace(params[i]->name, params[i]->value.shape());
            adam_step(it->second, *params[i], grads[i], cfg_.learning_rate, cfg_.beta1, cfg_.beta2,
                      cfg_.adam_epsilon);
        }
    }

    std::vector<Parameter<T>*> all_params_list() {
        auto out = gen_.all_params();
        auto cp = bank_.all_params();
        out.insert(out.end(), cp.begin(), cp.end());
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> all_buffers() const {
        auto out = gen_.all_buffers();
        auto cb = bank_.all_buffers();
        out.insert(out.end(), cb.begin(), cb.end());
        return out;
    }

    Parameter<T>* find_param(const std::string& name) {
        for (auto* p : gen_.all_params())
            if (p->name == name) return p;
        for (auto* p : bank_.all_params())
            if (p->name == name) return p;
        return nullptr;
    }

    TrainConfig cfg_;
    std::uint64_t digest_ = 0;
    Rng rng_;
    Dataset<T> data_;
    ChainGenerator<T> gen_;
    CriticBank<T> bank_;
    std::unordered_map<std::string, AdamState<T>> adam_;
    std::vector<double> w_est_;
    std::int64_t iter_ = 0;
};

} // namespace chaingan
