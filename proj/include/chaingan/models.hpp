#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "chaingan/nn.hpp"

namespace chaingan {

enum class Family { Mlp, Dcgan, Resnet };
enum class CriticMode { Multi, Single };

inline std::string family_name(Family f) {
    switch (f) {
    case Family::Mlp: return "mlp";
    case Family::Dcgan: return "dcgan";
    case Family::Resnet: return "resnet";
    }
    return "?";
}

struct ArchSpec {
    Family family = Family::Mlp;
    int base_width = 64;
    int noise_dim = 128;
    int image_channels = 0; // 0 -> vector data of feature_dim
    int image_size = 0;     // square images
    int feature_dim = 2;
    int n_editors = 5;
    int editor_width = 0;   // 0 -> scaled default, see derived_editor_width
    int editor_blocks = 3;

    bool is_image() const { return image_channels > 0; }

    // paper pairs editor width 34 with a width-256 base; keep that ratio
    int derived_editor_width() const {
        if (editor_width > 0) return editor_width;
        return std::max(8, (base_width * 34 + 128) / 256);
    }

    Shape sample_shape(int batch) const {
        return is_image() ? Shape{batch, image_channels, image_size, image_size}
                          : Shape{batch, feature_dim};
    }

    void validate() const {
        if (noise_dim < 1) throw std::invalid_argument("arch: noise_dim must be >= 1");
        if (n_editors < 0) throw std::invalid_argument("arch: n_editors must be >= 0");
        if (base_width < 1 || derived_editor_width() < 1)
            throw std::invalid_argument("arch: widths must be >= 1");
        if (family != Family::Mlp && !is_image())
            throw std::invalid_argument("arch: " + family_name(family) + " family needs image_shape");
        if (family == Family::Mlp && feature_dim < 1)
            throw std::invalid_argument("arch: feature_dim must be >= 1");
        if (is_image()) resample_plan(); // throws when the chain cannot halve cleanly
        if (family != Family::Mlp && editor_blocks < 1)
            throw std::invalid_argument("arch: conv editors need editor_blocks >= 1");
        if (family == Family::Mlp && editor_blocks < 0)
            throw std::invalid_argument("arch: editor_blocks must be >= 0");
    }

    // image_size = seed * 2^stages with seed in [4,7]
    struct Resample {
        int seed = 4;
        int stages = 0;
    };
    Resample resample_plan() const {
        for (int s = 4; s <= 7; ++s) {
            int q = image_size, k = 0;
            while (q > s && q % 2 == 0) {
                q /= 2;
                ++k;
            }
            if (q == s && k >= 1) return {s, k};
        }
        throw std::invalid_argument("arch: image size " + std::to_string(image_size) +
                                    " not divisible down to a 4..7 seed for the up/down-sampling chain");
    }
};

// ---- networks ----------------------------------------------------------------

template <typename T>
class Net {
public:
    virtual ~Net() = default;
    Net() = default;
    Net(const Net&) = delete;
    Net& operator=(const Net&) = delete;

    virtual Val forward(Binding<T>& b, Val in, bool training) const = 0;

    const std::vector<Parameter<T>*>& params() const { return params_; }

    const std::vector<std::pair<std::string, Tensor<T>*>>& buffers() const { return buffers_; }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (auto* p : params_) n += p->value.numel();
        return n;
    }

protected:
    std::vector<Parameter<T>*> params_;
    std::vector<std::pair<std::string, Tensor<T>*>> buffers_;
};

template <typename T>
class MlpGenerator final : public Net<T> {
public:
    MlpGenerator(const ArchSpec& spec, Rng& rng) {
        const int w = spec.base_width;
        l0_ = Linear<T>("base.lin0", spec.noise_dim, w, rng);
        l1_ = Linear<T>("base.lin1", w, w, rng);
        l2_ = Linear<T>("base.lin2", w, spec.feature_dim, rng);
        l0_.collect(this->params_);
        l1_.collect(this->params_);
        l2_.collect(this->params_);
    }

    Val forward(Binding<T>& b, Val z, bool) const override {
        Tape<T>& tp = b.tape();
        Val h = tp.relu(l0_.forward(b, z));
        h = tp.relu(l1_.forward(b, h));
        return l2_.forward(b, h);
    }

private:
    Linear<T> l0_, l1_, l2_;
};

// x + out_proj(blocks(relu(in_proj(x)))); out_proj starts at zero so the
// editor is an exact identity at initialization
template <typename T>
class MlpEditor final : public Net<T> {
public:
    MlpEditor(const std::string& prefix, const ArchSpec& spec, Rng& rng) {
        const int w = spec.derived_editor_width();
        const int f = spec.feature_dim;
        in_ = Linear<T>(prefix + ".in", f, w, rng);
        for (int i = 0; i < spec.editor_blocks; ++i)
            blocks_.push_back({Linear<T>(prefix + ".block" + std::to_string(i) + ".lin0", w, w, rng),
                               Linear<T>(prefix + ".block" + std::to_string(i) + ".lin1", w, w, rng)});
        out_ = Linear<T>(prefix + ".out", w, f, rng);
        for (auto& v : out_.weight.value.vec()) v = T(0);
        in_.collect(this->params_);
        for (auto& blk : blocks_) {
            blk.l0.collect(this->params_);
            blk.l1.collect(this->params_);
        }
        out_.collect(this->params_);
    }

    Val forward(Binding<T>& b, Val x, bool) const override {
        Tape<T>& tp = b.tape();
        Val h = tp.relu(in_.forward(b, x));
        for (const auto& blk : blocks_) h = tp.add(h, blk.l1.forward(b, tp.relu(blk.l0.forward(b, h))));
        return tp.add(x, out_.forward(b, h));
    }

private:
    struct Block {
        Linear<T> l0, l1;
    };
    Linear<T> in_, out_;
    std::vector<Block> blocks_;
};

template <typename T>
class MlpCriticTrunk final : public Net<T> {
public:
    MlpCriticTrunk(const ArchSpec& spec, Rng& rng) {
        const int w = spec.base_width;
        l0_ = Linear<T>("critic.trunk.lin0", spec.feature_dim, w, rng);
        l1_ = Linear<T>("critic.trunk.lin1", w, w, rng);
        feature_dim_ = w;
        l0_.collect(this->params_);
        l1_.collect(this->params_);
    }

    Val forward(Binding<T>& b, Val x, bool) const override {
        Tape<T>& tp = b.tape();
        Val h = tp.leaky_relu(l0_.forward(b, x), 0.2);
        return tp.leaky_relu(l1_.forward(b, h), 0.2);
    }

    int feature_dim() const { return feature_dim_; }

private:
    Linear<T> l0_, l1_;
    int feature_dim_ = 0;
};

// project + reshape, then stride-2 transposed convolutions (kernel 2, no
// padding), batch norm + relu between stages, tanh image output
template <typename T>
class DcganGenerator final : public Net<T> {
public:
    DcganGenerator(const ArchSpec& spec, Rng& rng) {
        const auto plan = spec.resample_plan();
        seed_ = plan.seed;
        const int d = spec.base_width;
        proj_ = Linear<T>("base.proj", spec.noise_dim, d * seed_ * seed_, rng);
        bn0_ = BatchNorm<T>("base.bn0", d);
        int c = d;
        for (int j = 0; j < plan.stages; ++j) {
            const bool last = j + 1 == plan.stages;
            const int co = last ? spec.image_channels : std::max(8, c / 2);
            ups_.push_back(ConvTranspose2d<T>("base.up" + std::to_string(j), c, co, 2, 2, 0, rng));
            if (!last) bns_.push_back(BatchNorm<T>("base.bn" + std::to_string(j + 1), co));
            c = co;
        }
        channels0_ = d;
        proj_.collect(this->params_);
        bn0_.collect(this->params_);
        for (auto& u : ups_) u.collect(this->params_);
        for (auto& bnorm : bns_) bnorm.collect(this->params_);
        bn0_.collect_buffers(this->buffers_);
        for (auto& bnorm : bns_) bnorm.collect_buffers(this->buffers_);
    }

    Val forward(Binding<T>& b, Val z, bool training) const override {
        Tape<T>& tp = b.tape();
        const int n = tp.shape(z)[0];
        Val h = tp.reshape(proj_.forward(b, z), Shape{n, channels0_, seed_, seed_});
        h = tp.relu(bn0_.forward(b, h, training));
        for (std::size_t j = 0; j < ups_.size(); ++j) {
            h = ups_[j].forward(b, h);
            if (j + 1 < ups_.size()) h = tp.relu(bns_[j].forward(b, h, training));
        }
        return tp.tanh(h);
    }

private:
    Linear<T> proj_;
    BatchNorm<T> bn0_;
    std::vector<ConvTranspose2d<T>> ups_;
    std::vector<BatchNorm<T>> bns_;
    int seed_ = 4;
    int channels0_ = 0;
};

// stride-2 pad-1 convolutions with leaky relu, no batch norm, flattened
// features at the spatial seed
template <typename T>
class DcganCriticTrunk final : public Net<T> {
public:
    DcganCriticTrunk(const ArchSpec& spec, Rng& rng) {
        const auto plan = spec.resample_plan();
        const int d = spec.base_width;
        int c = spec.image_channels;
        for (int j = 0; j < plan.stages; ++j) {
            const int co = std::max(8, d >> (plan.stages - 1 - j));
            convs_.push_back(Conv2d<T>("critic.trunk.conv" + std::to_string(j), c, co, 3, 2, 1, rng));
            c = co;
        }
        feature_dim_ = c * plan.seed * plan.seed;
        for (auto& cv : convs_) cv.collect(this->params_);
    }

    Val forward(Binding<T>& b, Val x, bool) const override {
        Tape<T>& tp = b.tape();
        Val h = x;
        for (const auto& cv : convs_) h = tp.leaky_relu(cv.forward(b, h), 0.2);
        const Shape& s = tp.shape(h);
        return tp.reshape(h, Shape{s[0], s[1] * s[2] * s[3]});
    }

    int feature_dim() const { return feature_dim_; }

private:
    std::vector<Conv2d<T>> convs_;
    int feature_dim_ = 0;
};

// residual block: optional pre-activations, two 3x3 convolutions, optional
// resample at the end, 1x1-projected skip with matching resample
template <typename T>
struct ResBlock {
    enum class Kind { DownPlain, Down, Up, Flat }; // types I, II, III, IV
    Kind kind = Kind::Flat;
    bool with_bn = false;
    Conv2d<T> conv0, conv1, skip;
    BatchNorm<T> bn0, bn1;

    ResBlock() = default;
    ResBlock(const std::string& prefix, Kind kind_, int ci, int co, Rng& rng, bool use_bn) : kind(kind_) {
        with_bn = use_bn;
        conv0 = Conv2d<T>(prefix + ".conv0", ci, co, 3, 1, 1, rng);
        conv1 = Conv2d<T>(prefix + ".conv1", co, co, 3, 1, 1, rng);
        skip = Conv2d<T>(prefix + ".skip", ci, co, 1, 1, 0, rng);
        if (with_bn) {
            bn0 = BatchNorm<T>(prefix + ".bn0", ci);
            bn1 = BatchNorm<T>(prefix + ".bn1", co);
        }
    }

    Val forward(Binding<T>& b, Val x, bool training) const {
        Tape<T>& tp = b.tape();
        Val h = x;
        if (kind != Kind::DownPlain) { // type I has no pre-activation
            if (with_bn) h = bn0.forward(b, h, training);
            h = tp.relu(h);
        }
        h = conv0.forward(b, h);
        if (with_bn) h = bn1.forward(b, h, training);
        h = tp.relu(h);
        h = conv1.forward(b, h);
        if (kind == Kind::DownPlain || kind == Kind::Down) h = tp.mean_pool2(h);
        if (kind == Kind::Up) h = tp.upsample2(h);
        Val s = x;
        if (kind == Kind::DownPlain || kind == Kind::Down) s = tp.mean_pool2(s);
        if (kind == Kind::Up) s = tp.upsample2(s);
        s = skip.forward(b, s);
        return tp.add(h, s);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        conv0.collect(out);
        conv1.collect(out);
        skip.collect(out);
        if (with_bn) {
            bn0.collect(out);
            bn1.collect(out);
        }
    }

    void collect_buffers(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
        if (with_bn) {
            bn0.collect_buffers(out);
            bn1.collect_buffers(out);
        }
    }
};

template <typename T>
class ResnetGenerator final : public Net<T> {
public:
    ResnetGenerator(const ArchSpec& spec, Rng& rng) {
        const auto plan = spec.resample_plan();
        seed_ = plan.seed;
        const int d = spec.base_width;
        proj_ = Linear<T>("base.proj", spec.noise_dim, d * seed_ * seed_, rng);
        for (int j = 0; j < plan.stages; ++j)
            blocks_.push_back(
                ResBlock<T>("base.block" + std::to_string(j), ResBlock<T>::Kind::Up, d, d, rng, true));
        bn_out_ = BatchNorm<T>("base.bn_out", d);
        conv_out_ = Conv2d<T>("base.conv_out", d, spec.image_channels, 3, 1, 1, rng);
        width_ = d;
        proj_.collect(this->params_);
        for (auto& blk : blocks_) blk.collect(this->params_);
        bn_out_.collect(this->params_);
        conv_out_.collect(this->params_);
        for (auto& blk : blocks_) blk.collect_buffers(this->buffers_);
        bn_out_.collect_buffers(this->buffers_);
    }

    Val forward(Binding<T>& b, Val z, bool training) const override {
        Tape<T>& tp = b.tape();
        const int n = tp.shape(z)[0];
        Val h = tp.reshape(proj_.forward(b, z), Shape{n, width_, seed_, seed_});
        for (const auto& blk : blocks_) h = blk.forward(b, h, training);
        h = tp.relu(bn_out_.forward(b, h, training));
        return tp.tanh(conv_out_.forward(b, h));
    }

private:
    Linear<T> proj_;
    std::vector<ResBlock<T>> blocks_;
    BatchNorm<T> bn_out_;
    Conv2d<T> conv_out_;
    int seed_ = 4;
    int width_ = 0;
};

template <typename T>
class ResnetCriticTrunk final : public Net<T> {
public:
    ResnetCriticTrunk(const ArchSpec& spec, Rng& rng) {
        const auto plan = spec.resample_plan();
        const int d = spec.base_width;
        blocks_.push_back(ResBlock<T>("critic.trunk.block0", ResBlock<T>::Kind::DownPlain,
                                      spec.image_channels, d, rng, false));
        for (int j = 1; j < plan.stages; ++j)
            blocks_.push_back(
                ResBlock<T>("critic.trunk.block" + std::to_string(j), ResBlock<T>::Kind::Down, d, d, rng,
                            false));
        blocks_.push_back(ResBlock<T>("critic.trunk.block" + std::to_string(plan.stages),
                                      ResBlock<T>::Kind::Flat, d, d, rng, false));
        feature_dim_ = d;
        for (auto& blk : blocks_) blk.collect(this->params_);
    }

    Val forward(Binding<T>& b, Val x, bool training) const override {
        Tape<T>& tp = b.tape();
        Val h = x;
        for (const auto& blk : blocks_) h = blk.forward(b, h, training);
        h = tp.relu(h);
        const Shape& s = tp.shape(h);
        // global spatial mean -> [N, C]
        Val rows = tp.reshape(h, Shape{s[0] * s[1], s[2] * s[3]});
        return tp.reshape(tp.scale(tp.row_sum(rows), 1.0 / (s[2] * s[3])), Shape{s[0], s[1]});
    }

    int feature_dim() const { return feature_dim_; }

private:
    std::vector<ResBlock<T>> blocks_;
    int feature_dim_ = 0;
};

// stacked flat residual blocks at editor width, a final 3x3 projection back
// to sample channels initialized to zero, and a global identity skip
template <typename T>
class ConvEditor final : public Net<T> {
public:
    ConvEditor(const std::string& prefix, const ArchSpec& spec, Rng& rng) {
        const int de = spec.derived_editor_width();
        int c = spec.image_channels;
        for (int i = 0; i < spec.editor_blocks; ++i) {
            blocks_.push_back(
                ResBlock<T>(prefix + ".block" + std::to_string(i), ResBlock<T>::Kind::Flat, c, de, rng,
                            true));
            c = de;
        }
        conv_out_ = Conv2d<T>(prefix + ".out", de, spec.image_channels, 3, 1, 1, rng);
        for (auto& v : conv_out_.weight.value.vec()) v = T(0);
        for (auto& blk : blocks_) blk.collect(this->params_);
        conv_out_.collect(this->params_);
        for (auto& blk : blocks_) blk.collect_buffers(this->buffers_);
    }

    Val forward(Binding<T>& b, Val x, bool training) const override {
        Tape<T>& tp = b.tape();
        Val h = x;
        for (const auto& blk : blocks_) h = blk.forward(b, h, training);
        return tp.add(x, conv_out_.forward(b, h));
    }

private:
    std::vector<ResBlock<T>> blocks_;
    Conv2d<T> conv_out_;
};

// ---- chain generator + critic bank -------------------------------------------

template <typename T>
struct ChainGenerator {
    std::unique_ptr<Net<T>> base;
    std::vector<std::unique_ptr<Net<T>>> editors;

    int n_stages() const { return 1 + static_cast<int>(editors.size()); }

    const std::vector<Parameter<T>*>& stage_params(int i) const {
        if (i < 0 || i >= n_stages())
            throw std::invalid_argument("chain: stage " + std::to_string(i) + " out of range, have " +
                                        std::to_string(n_stages()));
        return i == 0 ? base->params() : editors[i - 1]->params();
    }

    std::vector<Parameter<T>*> all_params() const {
        std::vector<Parameter<T>*> out = base->params();
        for (const auto& e : editors) {
            const auto& p = e->params();
            out.insert(out.end(), p.begin(), p.end());
        }
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> all_buffers() const {
        auto out = base->buffers();
        for (const auto& e : editors) {
            const auto& bf = e->buffers();
            out.insert(out.end(), bf.begin(), bf.end());
        }
        return out;
    }

    std::int64_t param_count() const {
        std::int64_t n = base->param_count();
        for (const auto& e : editors) n += e->param_count();
        return n;
    }

    // x_tilde_0 .. x_tilde_upto per the chain recursion
    std::vector<Val> forward(Binding<T>& b, Val z, int upto, bool training) const {
        if (upto < 0 || upto >= n_stages())
            throw std::invalid_argument("chain_forward: stage " + std::to_string(upto) +
                                        " out of range, have " + std::to_string(n_stages()) + " stages");
        std::vector<Val> out;
        out.reserve(upto + 1);
        Val x = base->forward(b, z, training);
        out.push_back(x);
        for (int i = 1; i <= upto; ++i) {
            x = editors[i - 1]->forward(b, x, training);
            out.push_back(x);
        }
        return out;
    }

    // value-only evaluation on a scratch record
    std::vector<Tensor<T>> forward_values(const Tensor<T>& z, int upto, bool training) const {
        Tape<T> tape;
        Binding<T> b(tape);
        auto vals = forward(b, tape.leaf(z), upto, training);
        std::vector<Tensor<T>> out;
        out.reserve(vals.size());
        for (Val v : vals) out.push_back(tape.tensor(v));
        return out;
    }
};

template <typename T>
struct CriticBank {
    std::unique_ptr<Net<T>> trunk;
    std::vector<Linear<T>> heads;
    CriticMode mode = CriticMode::Multi;

    int head_index(int stage) const {
        if (mode == CriticMode::Single) return 0;
        if (stage < 0 || stage >= static_cast<int>(heads.size()))
            throw std::invalid_argument("critic: stage " + std::to_string(stage) +
                                        " out of range for " + std::to_string(heads.size()) + " heads");
        return stage;
    }

    // batch of scalar scores [N] from head i over the shared trunk
    Val score(Binding<T>& b, int stage, Val x, bool training = true) const {
        Tape<T>& tp = b.tape();
        Val feat = trunk->forward(b, x, training);
        Val y = heads[head_index(stage)].forward(b, feat);
        return tp.reshape(y, Shape{tp.shape(y)[0]});
    }

    std::vector<Parameter<T>*> stage_params(int stage) {
        std::vector<Parameter<T>*> out = trunk->params();
        heads[head_index(stage)].collect(out);
        return out;
    }

    std::vector<Parameter<T>*> all_params() {
        std::vector<Parameter<T>*> out = trunk->params();
        for (auto& h : heads) h.collect(out);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> all_buffers() const { return trunk->buffers(); }

    std::int64_t param_count() const {
        std::int64_t n = trunk->param_count();
        for (const auto& h : heads) n += h.weight.value.numel() + h.bias.value.numel();
        return n;
    }
};

// ---- builders -----------------------------------------------------------------

template <typename T>
ChainGenerator<T> build_chain_generator(const ArchSpec& spec, Rng& rng) {
    spec.validate();
    ChainGenerator<T> gen;
    switch (spec.family) {
    case Family::Mlp: gen.base = std::make_unique<MlpGenerator<T>>(spec, rng); break;
    case Family::Dcgan: gen.base = std::make_unique<DcganGenerator<T>>(spec, rng); break;
    case Family::Resnet: gen.base = std::make_unique<ResnetGenerator<T>>(spec, rng); break;
    }
    for (int i = 1; i <= spec.n_editors; ++i) {
        const std::string prefix = "editor." + std::to_string(i);
        if (spec.family == Family::Mlp)
            gen.editors.push_back(std::make_unique<MlpEditor<T>>(prefix, spec, rng));
        else
            gen.editors.push_back(std::make_unique<ConvEditor<T>>(prefix, spec, rng));
    }
    return gen;
}

template <typename T>
CriticBank<T> build_critic_bank(const ArchSpec& spec, int n_heads, CriticMode mode, Rng& rng) {
    spec.validate();
    const int expected = mode == CriticMode::Single ? 1 : spec.n_editors + 1;
    if (n_heads != expected)
        throw std::invalid_argument("critic: " + std::to_string(n_heads) + " heads inconsistent with " +
                                    (mode == CriticMode::Single ? "single" : "multi") + " mode, expected " +
                                    std::to_string(expected));
    CriticBank<T> bank;
    bank.mode = mode;
    int feat = 0;
    switch (spec.family) {
    case Family::Mlp: {
        auto trunk = std::make_unique<MlpCriticTrunk<T>>(spec, rng);
        feat = trunk->feature_dim();
        bank.trunk = std::move(trunk);
        break;
    }
    case Family::Dcgan: {
        auto trunk = std::make_unique<DcganCriticTrunk<T>>(spec, rng);
        feat = trunk->feature_dim();
        bank.trunk = std::move(trunk);
        break;
    }
    case Family::Resnet: {
        auto trunk = std::make_unique<ResnetCriticTrunk<T>>(spec, rng);
        feat = trunk->feature_dim();
        bank.trunk = std::move(trunk);
        break;
    }
    }
    bank.heads.reserve(n_heads);
    for (int i = 0; i < n_heads; ++i)
        bank.heads.push_back(Linear<T>("critic.head." + std::to_string(i), feat, 1, rng));
    return bank;
}

// ---- digests ------------------------------------------------------------------

inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

template <typename T>
std::uint64_t digest_params(const std::vector<Parameter<T>*>& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto* p : params) {
        h = fnv1a(p->name.data(), p->name.size(), h);
        h = fnv1a(p->value.data(), p->value.numel() * sizeof(T), h);
    }
    return h;
}

template <typename T>
void check_unique_names(const std::vector<Parameter<T>*>& params) {
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = i + 1; j < params.size(); ++j)
            if (params[i]->name == params[j]->name)
                throw std::logic_error("duplicate parameter name: " + params[i]->name);
}

} // namespace chaingan
