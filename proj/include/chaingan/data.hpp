#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "chaingan/idx.hpp"
#include "chaingan/rng.hpp"
#include "chaingan/tensor.hpp"

namespace chaingan {

// Gaussian mixture benchmarks. Centers and widths are pre-normalization;
// emitted samples are scaled by kNormScale and clamped so every coordinate
// lands in [-1,1].
inline constexpr double kNormScale = 0.8;

struct MixtureSpec {
    std::vector<std::array<double, 2>> centers; // pre-normalization
    double sigma = 0.05;                        // pre-normalization

    std::vector<std::array<double, 2>> normalized_centers() const {
        auto out = centers;
        for (auto& c : out) {
            c[0] *= kNormScale;
            c[1] *= kNormScale;
        }
        return out;
    }
    double normalized_sigma() const { return sigma * kNormScale; }
};

// 8 Gaussians equally spaced on the unit circle, sigma 0.05
inline MixtureSpec ring8_spec() {
    MixtureSpec s;
    s.sigma = 0.05;
    for (int k = 0; k < 8; ++k) {
        const double a = 2.0 * 3.14159265358979323846 * k / 8.0;
        s.centers.push_back({std::cos(a), std::sin(a)});
    }
    return s;
}

// 5x5 grid on [-1,1]^2, sigma 0.02
inline MixtureSpec grid25_spec() {
    MixtureSpec s;
    s.sigma = 0.02;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) s.centers.push_back({-1.0 + 0.5 * i, -1.0 + 0.5 * j});
    return s;
}

template <typename T>
Tensor<T> sample_mixture(Rng& rng, const MixtureSpec& spec, int m) {
    Tensor<T> out(Shape{m, 2});
    const int k = static_cast<int>(spec.centers.size());
    for (int i = 0; i < m; ++i) {
        const auto& c = spec.centers[rng.uniform_int(k)];
        for (int d = 0; d < 2; ++d) {
            double v = (c[d] + rng.normal(0.0, spec.sigma)) * kNormScale;
            out[i * 2 + d] = static_cast<T>(std::clamp(v, -1.0, 1.0));
        }
    }
    return out;
}

// Uniform interface over the mixtures and IDX-format image files. Image
// epochs are reshuffled with a permutation derived from (seed, epoch) so a
// checkpointed (epoch, cursor) pair restores the exact batch stream.
template <typename T>
class Dataset {
public:
    static Dataset mixture(const std::string& id) {
        Dataset d;
        d.id_ = id;
        d.mix_ = id == "ring8" ? ring8_spec() : grid25_spec();
        if (id != "ring8" && id != "grid25")
            throw std::invalid_argument("dataset: unknown mixture id '" + id + "'");
        d.shape_ = Shape{2};
        return d;
    }

    static Dataset idx_images(const std::string& path, std::uint64_t seed) {
        Dataset d;
        d.id_ = "idx-images:" + path;
        d.images_ = std::make_shared<IdxImages>(load_idx_images_file(path));
        if (d.images_->count < 1) throw std::invalid_argument("dataset: empty image file " + path);
        d.shape_ = Shape{1, d.images_->rows, d.images_->cols};
        d.seed_ = seed;
        d.reshuffle();
        return d;
    }

    const std::string& id() const { return id_; }
    bool is_image() const { return images_ != nullptr; }
    const Shape& sample_shape() const { return shape_; }
    int size() const { return images_ ? images_->count : 0; }

    // pixel byte -> [-1,1]
    static double normalize_pixel(std::uint8_t p) { return static_cast<double>(p) / 127.5 - 1.0; }
    static std::uint8_t denormalize_pixel(double v) {
        return static_cast<std::uint8_t>(std::clamp(std::lround((v + 1.0) * 127.5), 0l, 255l));
    }

    Tensor<T> next_batch(int m, Rng& rng) {
        if (!images_) return sample_mixture<T>(rng, mix_, m);
        const int px = images_->rows * images_->cols;
        Tensor<T> out(Shape{m, 1, images_->rows, images_->cols});
        for (int i = 0; i < m; ++i) {
            if (cursor_ >= images_->count) {
                ++epoch_;
                cursor_ = 0;
                reshuffle();
            }
            const int idx = order_[cursor_++];
            const std::uint8_t* src = images_->pixels.data() + static_cast<std::size_t>(idx) * px;
            for (int j = 0; j < px; ++j) out[static_cast<std::int64_t>(i) * px + j] =
                static_cast<T>(normalize_pixel(src[j]));
        }
        return out;
    }

    const MixtureSpec& mixture_spec() const { return mix_; }

    std::int64_t epoch() const { return epoch_; }
    std::int64_t cursor() const { return cursor_; }
    void restore_position(std::int64_t epoch, std::int64_t cursor) {
        epoch_ = epoch;
        cursor_ = cursor;
        if (images_) reshuffle();
    }

private:
    void reshuffle() {
        order_.resize(images_->count);
        std::iota(order_.begin(), order_.end(), 0);
        Rng r(seed_ ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(epoch_ + 1)));
        for (int i = images_->count - 1; i > 0; --i)
            std::swap(order_[i], order_[r.uniform_int(i + 1)]);
    }

    std::string id_;
    MixtureSpec mix_;
    std::shared_ptr<IdxImages> images_;
    std::vector<int> order_;
    Shape shape_{1};
    std::uint64_t seed_ = 0;
    std::int64_t epoch_ = 0;
    std::int64_t cursor_ = 0;
};

} // namespace chaingan
