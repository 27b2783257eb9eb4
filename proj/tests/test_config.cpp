#include "doctest.h"

#include "chaingan/config.hpp"

using namespace chaingan;

namespace {

const char* kSample = R"(
# comment
[run]
seed = 7
out_dir = "runs/x"
precision = "f64"

[data]
dataset = "grid25"

[arch]
family = "mlp"
base_width = 32
noise_dim = 8
n_editors = 3

[train]
iterations = 123
n_critic = 5

[loss]
gp_lambda = 10.0
editor_loss = "competition"
)";

} // namespace

TEST_CASE("config parsing") {
    RunConfig cfg = parse_run_config(kSample);
    CHECK(cfg.train.seed == 7);
    CHECK(cfg.out_dir == "runs/x");
    CHECK(cfg.train.dataset_id == "grid25");
    CHECK(cfg.train.arch.family == Family::Mlp);
    CHECK(cfg.train.arch.base_width == 32);
    CHECK(cfg.train.arch.n_editors == 3);
    CHECK(cfg.train.total_iterations == 123);
    CHECK(cfg.train.loss.editor_loss_mode == EditorLossMode::Competition);
    // untouched keys keep the published defaults
    CHECK(cfg.train.loss.gp_coefficient == 10.0);
    CHECK(cfg.train.batch_size == 64);
    CHECK(cfg.train.learning_rate == 0.0001);

    SUBCASE("unknown key rejected with its path") {
        CHECK_THROWS_WITH_AS((void)parse_run_config("[arch]\nwat = 3\n"), doctest::Contains("arch.wat"),
                             ConfigError);
    }
    SUBCASE("bad value rejected") {
        CHECK_THROWS_AS((void)parse_run_config("[train]\niterations = soon\n"), ConfigError);
        CHECK_THROWS_AS((void)parse_run_config("[run]\nprecision = f16\n"), ConfigError);
    }
    SUBCASE("malformed lines rejected with line numbers") {
        CHECK_THROWS_WITH_AS((void)parse_run_config("[run\n"), doctest::Contains("line 1"), ConfigError);
        CHECK_THROWS_WITH_AS((void)parse_run_config("\njust words\n"), doctest::Contains("line 2"),
                             ConfigError);
    }
}

TEST_CASE("every override is reflected in the config digest") {
    RunConfig base = parse_run_config(kSample);
    const std::uint64_t d0 = config_digest(base);

    const std::vector<std::string> overrides = {
        "run.seed=8",           "arch.n_editors=4",        "train.critic_mode=single",
        "train.training_mode=end_to_end", "loss.editor_loss=discounted", "train.iterations=124",
        "data.dataset=ring8",   "run.precision=f32",       "loss.gp_lambda=5.0"};
    for (const auto& ov : overrides) {
        RunConfig cfg = parse_run_config(kSample);
        apply_override(cfg, ov);
        CAPTURE(ov);
        CHECK(config_digest(cfg) != d0);
    }

    SUBCASE("output placement does not affect run identity") {
        RunConfig cfg = parse_run_config(kSample);
        apply_override(cfg, "run.out_dir=elsewhere");
        CHECK(config_digest(cfg) == d0);
    }
    SUBCASE("identical configs digest identically") {
        RunConfig again = parse_run_config(kSample);
        CHECK(config_digest(again) == d0);
    }
    SUBCASE("malformed override rejected") {
        RunConfig cfg = parse_run_config(kSample);
        CHECK_THROWS_AS(apply_override(cfg, "train.iterations"), ConfigError);
    }
}
