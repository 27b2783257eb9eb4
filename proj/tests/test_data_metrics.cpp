#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "chaingan/data.hpp"
#include "chaingan/idx.hpp"
#include "chaingan/metrics.hpp"

using namespace chaingan;

TEST_CASE("ring8 construction") {
    auto spec = ring8_spec();
    REQUIRE(spec.centers.size() == 8);
    for (int k = 0; k < 8; ++k) {
        const double a = 2.0 * 3.14159265358979323846 * k / 8.0;
        CHECK(spec.centers[k][0] == doctest::Approx(std::cos(a)));
        CHECK(spec.centers[k][1] == doctest::Approx(std::sin(a)));
    }
    SUBCASE("samples stay in [-1,1] and modes are hit uniformly") {
        Rng rng(1);
        auto batch = sample_mixture<double>(rng, spec, 80000);
        auto centers = spec.normalized_centers();
        std::vector<int> counts(8, 0);
        for (int i = 0; i < 80000; ++i) {
            const double x = batch[i * 2], y = batch[i * 2 + 1];
            CHECK(x >= -1.0);
            CHECK(x <= 1.0);
            double best = 1e9;
            int bk = 0;
            for (int k = 0; k < 8; ++k) {
                const double d = std::hypot(x - centers[k][0], y - centers[k][1]);
                if (d < best) {
                    best = d;
                    bk = k;
                }
            }
            ++counts[bk];
        }
        for (int k = 0; k < 8; ++k)
            CHECK(std::abs(counts[k] / 80000.0 - 0.125) < 0.01);
    }
}

TEST_CASE("grid25 has 25 distinct centers inside [-1,1]") {
    auto spec = grid25_spec();
    CHECK(spec.centers.size() == 25);
    auto centers = spec.normalized_centers();
    for (std::size_t i = 0; i < centers.size(); ++i) {
        CHECK(std::abs(centers[i][0]) <= 1.0);
        for (std::size_t j = i + 1; j < centers.size(); ++j) {
            const bool same = centers[i][0] == centers[j][0] && centers[i][1] == centers[j][1];
            CHECK_FALSE(same);
        }
    }
}

TEST_CASE("mixture normalization round trip") {
    // the dataset normalization is the affine map x -> kNormScale * x
    for (double x : {-1.2, -0.3, 0.0, 0.7, 1.2})
        CHECK((x * kNormScale) / kNormScale == doctest::Approx(x).epsilon(1e-6));
    // pixel mapping endpoints
    CHECK(Dataset<double>::normalize_pixel(0) == doctest::Approx(-1.0));
    CHECK(Dataset<double>::normalize_pixel(255) == doctest::Approx(1.0));
    for (int p : {0, 17, 128, 255})
        CHECK(Dataset<double>::denormalize_pixel(
                  Dataset<double>::normalize_pixel(static_cast<std::uint8_t>(p))) == p);
}

TEST_CASE("idx format") {
    IdxImages img;
    img.count = 2;
    img.rows = 28;
    img.cols = 28;
    img.pixels.assign(2 * 28 * 28, 0);
    img.pixels[0] = 255;
    auto bytes = write_idx_images(img);

    SUBCASE("well-formed file parses") {
        auto parsed = parse_idx_images(bytes);
        CHECK(parsed.count == 2);
        CHECK(parsed.rows == 28);
        CHECK(parsed.cols == 28);
        CHECK(parsed.pixels[0] == 255);
    }
    SUBCASE("dataset wraps it with [-1,1] samples") {
        const auto path = (std::filesystem::temp_directory_path() / "chaingan_idx_test.idx").string();
        std::ofstream f(path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        f.close();
        auto ds = Dataset<double>::idx_images(path, 1);
        CHECK(ds.size() == 2);
        CHECK(ds.sample_shape() == Shape{1, 28, 28});
        Rng rng(3);
        auto batch = ds.next_batch(5, rng); // wraps past the end with reshuffle
        CHECK(batch.shape() == Shape{5, 1, 28, 28});
        for (auto v : batch.vec()) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
        std::filesystem::remove(path);
    }
    SUBCASE("bad magic rejected with offset") {
        bytes[0] = 0x13;
        CHECK_THROWS_WITH_AS((void)parse_idx_images(bytes), doctest::Contains("offset 0"),
                             std::runtime_error);
    }
    SUBCASE("truncated pixels rejected with offset") {
        auto bad = write_idx_images(img);
        bad.resize(bad.size() - 10);
        CHECK_THROWS_WITH_AS((void)parse_idx_images(bad), doctest::Contains("offset"), std::runtime_error);
    }
    SUBCASE("real file when provided") {
        const char* env = std::getenv("CHAINGAN_MNIST");
        if (env) {
            auto mnist = load_idx_images_file(env);
            CHECK(mnist.count == 60000);
            CHECK(mnist.rows == 28);
            CHECK(mnist.cols == 28);
        }
    }
}

TEST_CASE("mode coverage") {
    auto centers = ring8_spec().normalized_centers();
    const double thresh = 3.0 * ring8_spec().normalized_sigma();

    SUBCASE("all samples at one center") {
        Tensor<double> cloud(Shape{50, 2});
        for (int i = 0; i < 50; ++i) {
            cloud[i * 2] = centers[3][0];
            cloud[i * 2 + 1] = centers[3][1];
        }
        auto cov = mode_coverage(cloud, centers, thresh);
        CHECK(cov.covered_modes == 1);
        CHECK(cov.high_quality_fraction == doctest::Approx(1.0));
    }
    SUBCASE("uniform over all 8 centers covers 8") {
        Tensor<double> cloud(Shape{8 * 25, 2});
        for (int k = 0; k < 8; ++k)
            for (int i = 0; i < 25; ++i) {
                cloud[(k * 25 + i) * 2] = centers[k][0];
                cloud[(k * 25 + i) * 2 + 1] = centers[k][1];
            }
        auto cov = mode_coverage(cloud, centers, thresh);
        CHECK(cov.covered_modes == 8);
    }
    SUBCASE("mixed cloud matches a brute-force nearest-center oracle") {
        Rng rng(17);
        const int n = 4000;
        Tensor<double> cloud(Shape{n, 2});
        for (auto& v : cloud.vec()) v = rng.uniform(-1.0, 1.0);

        auto cov = mode_coverage(cloud, centers, thresh);

        // independent plain-loop assignment
        std::vector<int> counts(centers.size(), 0);
        int within = 0;
        for (int i = 0; i < n; ++i) {
            double bd = 1e18;
            std::size_t bk = 0;
            for (std::size_t k = 0; k < centers.size(); ++k) {
                const double dx = cloud[i * 2] - centers[k][0];
                const double dy = cloud[i * 2 + 1] - centers[k][1];
                if (dx * dx + dy * dy < bd) {
                    bd = dx * dx + dy * dy;
                    bk = k;
                }
            }
            if (std::sqrt(bd) <= thresh) {
                ++within;
                ++counts[bk];
            }
        }
        int covered = 0;
        for (int c : counts)
            if (c >= 20) ++covered;
        CHECK(cov.covered_modes == covered);
        CHECK(cov.high_quality_fraction == doctest::Approx(static_cast<double>(within) / n));
    }
}

TEST_CASE("cutoff suggestion") {
    SUBCASE("flat curve cuts at 0") { CHECK(suggest_cutoff({0.5, 0.5, 0.5, 0.5}) == 0); }
    SUBCASE("strictly improving curve keeps the whole chain") {
        CHECK(suggest_cutoff({0.1, 0.2, 0.3, 0.4}) == 3);
    }
    SUBCASE("saturation mid-chain") { CHECK(suggest_cutoff({0.1, 0.5, 0.505, 0.9}) == 1); }
    SUBCASE("single stage") { CHECK(suggest_cutoff({0.7}) == 0); }
}

TEST_CASE("per-stage curve on an identity chain is flat with cutoff 0") {
    ArchSpec arch;
    arch.family = Family::Mlp;
    arch.base_width = 16;
    arch.noise_dim = 4;
    arch.feature_dim = 2;
    arch.n_editors = 3;
    arch.editor_width = 8;
    arch.editor_blocks = 0;
    Rng rng(5);
    auto gen = build_chain_generator<double>(arch, rng);
    auto bank = build_critic_bank<double>(arch, 4, CriticMode::Multi, rng);
    auto data = Dataset<double>::mixture("ring8");

    auto curve = per_stage_curve(gen, bank, data, 512, Rng(77));
    REQUIRE(curve.stages.size() == 4);
    for (int i = 1; i < 4; ++i)
        CHECK(curve.stages[i].high_quality_fraction ==
              doctest::Approx(curve.stages[0].high_quality_fraction));
    CHECK(curve.suggested_cutoff == 0);
}
