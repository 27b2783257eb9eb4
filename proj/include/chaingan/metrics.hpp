#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "chaingan/data.hpp"
#include "chaingan/objective.hpp"

namespace chaingan {

struct ModeCoverage {
    int covered_modes = 0;
    double high_quality_fraction = 0.0; // share of samples within threshold of any center
    std::vector<int> per_mode_counts;
};

// Assigns each sample to its nearest center; a mode counts as covered once it
// holds at least min_count samples within the threshold radius.
template <typename T>
ModeCoverage mode_coverage(const Tensor<T>& samples, const std::vector<std::array<double, 2>>& centers,
                           double threshold, int min_count = 20) {
    const int n = samples.shape()[0];
    ModeCoverage out;
    out.per_mode_counts.assign(centers.size(), 0);
    int good = 0;
    for (int i = 0; i < n; ++i) {
        const double x = static_cast<double>(samples[i * 2]);
        const double y = static_cast<double>(samples[i * 2 + 1]);
        double best = std::numeric_limits<double>::max();
        int best_k = 0;
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const double dx = x - centers[k][0];
            const double dy = y - centers[k][1];
            const double d2 = dx * dx + dy * dy;
            if (d2 < best) {
                best = d2;
                best_k = static_cast<int>(k);
            }
        }
        if (std::sqrt(best) <= threshold) {
            ++good;
            ++out.per_mode_counts[best_k];
        }
    }
    for (int c : out.per_mode_counts)
        if (c >= min_count) ++out.covered_modes;
    out.high_quality_fraction = n > 0 ? static_cast<double>(good) / n : 0.0;
    return out;
}

struct StageMetrics {
    int stage = 0;
    double wasserstein_estimate = 0.0;
    int mode_coverage = 0;
    double high_quality_fraction = 0.0;
    double quality = 0.0; // maximized: HQF for 2-d data, -W for images
};

struct StageCurve {
    std::vector<StageMetrics> stages;
    int suggested_cutoff = 0;
};

// Smallest stage whose improvement over the next stage falls under the
// threshold; a strictly improving curve keeps the whole chain.
inline int suggest_cutoff(const std::vector<double>& quality, double min_improvement = 0.01) {
    const int n = static_cast<int>(quality.size());
    for (int k = 0; k + 1 < n; ++k)
        if (quality[k + 1] - quality[k] < min_improvement) return k;
    return n - 1;
}

// Per-stage quality sweep over fresh noise. For 2-d data quality is the
// high-quality fraction at the 3-sigma threshold; for images the negated
// Wasserstein estimate stands in (no mode centers exist) and the cutoff
// threshold scales with the observed range.
template <typename T>
StageCurve per_stage_curve(const ChainGenerator<T>& gen, CriticBank<T>& bank, Dataset<T>& data,
                           int n_eval, Rng rng, int batch = 256) {
    const int n_stages = gen.n_stages();
    StageCurve curve;
    curve.stages.resize(n_stages);
    for (int i = 0; i < n_stages; ++i) curve.stages[i].stage = i;

    std::vector<double> w_acc(n_stages, 0.0);
    std::vector<std::vector<T>> collected(n_stages);
    const int noise_dim = [&] {
        // probe the generator input width from its first linear layer
        return gen.base->params().front()->value.shape()[1];
    }();

    int done = 0;
    int rounds = 0;
    while (done < n_eval) {
        const int m = std::min(batch, n_eval - done);
        Tensor<T> z(Shape{m, noise_dim});
        for (auto& v : z.vec()) v = static_cast<T>(rng.normal());
        auto stages = gen.forward_values(z, n_stages - 1, /*training=*/false);
        Tensor<T> real = data.next_batch(m, rng);

        Tape<T> tape;
        Binding<T> b(tape);
        Val rv = tape.leaf(real);
        for (int i = 0; i < n_stages; ++i) {
            Val fv = tape.leaf(stages[i]);
            w_acc[i] += tape.values(wasserstein_estimate(b, bank, i, rv, fv))[0];
            auto& dst = collected[i];
            dst.insert(dst.end(), stages[i].vec().begin(), stages[i].vec().end());
        }
        done += m;
        ++rounds;
    }

    for (int i = 0; i < n_stages; ++i) {
        curve.stages[i].wasserstein_estimate = w_acc[i] / rounds;
        if (!data.is_image()) {
            const int rows = static_cast<int>(collected[i].size() / 2);
            Tensor<T> cloud(Shape{rows, 2}, std::move(collected[i]));
            const auto& spec = data.mixture_spec();
            auto cov = mode_coverage(cloud, spec.normalized_centers(), 3.0 * spec.normalized_sigma());
            curve.stages[i].mode_coverage = cov.covered_modes;
            curve.stages[i].high_quality_fraction = cov.high_quality_fraction;
            curve.stages[i].quality = cov.high_quality_fraction;
        } else {
            curve.stages[i].quality = -curve.stages[i].wasserstein_estimate;
        }
    }

    std::vector<double> q(n_stages);
    for (int i = 0; i < n_stages; ++i) q[i] = curve.stages[i].quality;
    double thresh = 0.01;
    if (data.is_image()) {
        const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
        thresh = 0.01 * std::max(1.0, *hi - *lo);
    }
    curve.suggested_cutoff = suggest_cutoff(q, thresh);
    return curve;
}

} // namespace chaingan
