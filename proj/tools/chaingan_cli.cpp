// chaingan: train / eval / sample / resume for chain-generator WGAN-GP runs.
//
// Exit codes: 0 ok, 1 config error, 2 runtime error, 3 numeric divergence.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "chaingan/config.hpp"
#include "chaingan/image_io.hpp"

namespace fs = std::filesystem;
using namespace chaingan;

namespace {

struct CliOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::vector<std::string> shorthand_overrides;
    std::string checkpoint_path;
    int sample_count = 4;
    std::string stage = "all";
    int eval_samples = 4096;
    std::int64_t stop_at = 0; // pause training after this iteration, 0 = run to the end
};

RunConfig resolve_config(const CliOptions& opt) {
    if (opt.config_path.empty()) throw ConfigError("config: --config is required");
    RunConfig cfg = load_run_config_file(opt.config_path);
    for (const auto& ov : opt.overrides) apply_override(cfg, ov);
    for (const auto& ov : opt.shorthand_overrides) apply_override(cfg, ov);
    if (const char* root = std::getenv("CHAINGAN_OUT"); root && *root && fs::path(cfg.out_dir).is_relative())
        cfg.out_dir = (fs::path(root) / cfg.out_dir).string();
    cfg.validate();
    return cfg;
}

template <typename T>
void export_samples(Trainer<T>& tr, const RunConfig& cfg, const std::string& tag, int count,
                    const std::string& stage_sel) {
    const int n_stages = tr.generator().n_stages();
    int only_stage = -1;
    if (stage_sel != "all") only_stage = std::stoi(stage_sel);
    if (only_stage >= n_stages)
        throw ConfigError("sample: stage " + stage_sel + " out of range, chain has " +
                          std::to_string(n_stages) + " stages");

    // deterministic sampling stream, independent of the training rng
    Rng srng = Rng(cfg.train.seed).fork(0x53414d50);
    Tensor<T> z(Shape{count, cfg.train.arch.noise_dim});
    for (auto& v : z.vec()) v = static_cast<T>(srng.normal());
    auto stages = tr.generator().forward_values(z, n_stages - 1, /*training=*/false);

    const fs::path dir(cfg.out_dir);
    if (cfg.train.arch.is_image()) {
        std::vector<ImageTile> tiles;
        const int ch = cfg.train.arch.image_channels;
        const int hw = cfg.train.arch.image_size;
        const int cols = only_stage >= 0 ? 1 : n_stages;
        for (int r = 0; r < count; ++r)
            for (int s = 0; s < n_stages; ++s) {
                if (only_stage >= 0 && s != only_stage) continue;
                ImageTile tile;
                tile.channels = ch;
                tile.height = hw;
                tile.width = hw;
                tile.values.resize(static_cast<std::size_t>(ch) * hw * hw);
                const T* src = stages[s].data() + static_cast<std::int64_t>(r) * ch * hw * hw;
                for (std::size_t i = 0; i < tile.values.size(); ++i) tile.values[i] = src[i];
                tiles.push_back(std::move(tile));
            }
        const std::string path = (dir / ("samples_" + tag + (ch == 1 ? ".pgm" : ".ppm"))).string();
        write_pnm_grid(path, tiles, count, cols);
        std::cout << "wrote " << path << "\n";
    } else {
        for (int s = 0; s < n_stages; ++s) {
            if (only_stage >= 0 && s != only_stage) continue;
            const std::string path = (dir / ("samples_" + tag + "_stage" + std::to_string(s) + ".csv")).string();
            std::ofstream f(path);
            f << "x,y\n";
            char buf[80];
            for (int r = 0; r < count; ++r) {
                std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", static_cast<double>(stages[s][r * 2]),
                              static_cast<double>(stages[s][r * 2 + 1]));
                f << buf;
            }
            std::cout << "wrote " << path << "\n";
        }
    }
}

template <typename T>
int cmd_train(const RunConfig& cfg, bool resume, const std::string& resume_from, std::int64_t stop_at) {
    fs::create_directories(cfg.out_dir);
    const std::uint64_t digest = config_digest(cfg);
    {
        std::ofstream f(fs::path(cfg.out_dir) / "config.txt");
        f << canonical_text(cfg);
    }

    Trainer<T> tr(cfg.train, digest);
    if (resume) tr.load_checkpoint(resume_from);

    const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
    std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
    if (!resume) metrics << metrics_header(tr.generator().n_stages()) << "\n";

    const std::int64_t t0 = tr.iteration();
    const std::int64_t until = stop_at > 0 ? stop_at : cfg.train.total_iterations;
    tr.run_until(until, [&](const IterationRecord<T>& rec) {
        if (cfg.train.metrics_every > 0 && rec.iteration % cfg.train.metrics_every == 0)
            metrics << format_metrics_row(rec) << "\n";
        if (cfg.train.checkpoint_every > 0 && rec.iteration % cfg.train.checkpoint_every == 0)
            tr.save_checkpoint((fs::path(cfg.out_dir) / ("ckpt_" + std::to_string(rec.iteration) + ".cgan")).string());
        if (cfg.sample_every > 0 && rec.iteration % cfg.sample_every == 0)
            export_samples(tr, cfg, std::to_string(rec.iteration), cfg.sample_count, "all");
    });
    metrics.flush();
    tr.save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.cgan").string());

    std::cout << "trained iterations " << t0 << ".." << tr.iteration() << ", chain parameters "
              << tr.generator().param_count() << ", critic parameters " << tr.critic().param_count()
              << "\n"
              << "metrics: " << metrics_path << "\n"
              << "checkpoint: " << (fs::path(cfg.out_dir) / "checkpoint.cgan").string() << "\n";
    return 0;
}

template <typename T>
int cmd_eval(const RunConfig& cfg, const std::string& ckpt, int n_eval) {
    Trainer<T> tr(cfg.train, config_digest(cfg));
    tr.load_checkpoint(ckpt);
    auto curve = per_stage_curve(tr.generator(), tr.critic(), tr.dataset(), n_eval,
                                 Rng(cfg.train.seed).fork(0x4556414c));

    fs::create_directories(cfg.out_dir);
    const std::string csv_path = (fs::path(cfg.out_dir) / "per_stage.csv").string();
    std::ofstream csv(csv_path);
    csv << "stage,wasserstein,mode_coverage,high_quality_fraction\n";
    std::printf("%-6s %12s %9s %8s\n", "stage", "wasserstein", "coverage", "hqf");
    for (const auto& s : curve.stages) {
        std::printf("%-6d %12.5f %9d %8.4f\n", s.stage, s.wasserstein_estimate, s.mode_coverage,
                    s.high_quality_fraction);
        char buf[96];
        std::snprintf(buf, sizeof buf, "%d,%.10g,%d,%.10g\n", s.stage, s.wasserstein_estimate,
                      s.mode_coverage, s.high_quality_fraction);
        csv << buf;
    }
    std::cout << "suggested cutoff k = " << curve.suggested_cutoff << "\n"
              << "per-stage metrics: " << csv_path << "\n";
    return 0;
}

template <typename T>
int cmd_sample(const RunConfig& cfg, const CliOptions& opt) {
    Trainer<T> tr(cfg.train, config_digest(cfg));
    tr.load_checkpoint(opt.checkpoint_path);
    fs::create_directories(cfg.out_dir);
    export_samples(tr, cfg, "final", opt.sample_count, opt.stage);
    return 0;
}

template <typename F32, typename F64>
int dispatch(const RunConfig& cfg, F32&& f32, F64&& f64) {
    return cfg.precision == "f32" ? f32() : f64();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ChainGAN trainer: a base generator plus a chain of editors, each with its own WGAN-GP critic"};
    app.require_subcommand(1);
    app.fallthrough();

    CliOptions opt;
    app.add_option("--config", opt.config_path, "run configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", opt.overrides, "override a config key: section.key=value")->take_all();
    // common shorthands for the ablation switches
    std::map<std::string, std::string> shorthand{
        {"--seed", "run.seed"},           {"--editors", "arch.n_editors"},
        {"--critic-mode", "train.critic_mode"}, {"--training-mode", "train.training_mode"},
        {"--editor-loss", "loss.editor_loss"},  {"--iterations", "train.iterations"},
        {"--dataset", "data.dataset"},    {"--out", "run.out_dir"},
        {"--precision", "run.precision"}, {"--width", "arch.base_width"}};
    for (const auto& [flag, key] : shorthand)
        app.add_option_function<std::string>(
               flag,
               [&opt, key = key](const std::string& v) { opt.shorthand_overrides.push_back(key + "=" + v); },
               "shorthand for --set " + key + "=VALUE")
            ->trigger_on_parse();

    auto* train = app.add_subcommand("train", "run the training loop");
    train->add_option("--stop-at", opt.stop_at, "pause after this iteration (run control, not config)");
    auto* resume = app.add_subcommand("resume", "continue from a checkpoint");
    resume->add_option("--stop-at", opt.stop_at, "pause after this iteration (run control, not config)");
    resume->add_option("--checkpoint", opt.checkpoint_path, "checkpoint to continue from")
        ->required()
        ->check(CLI::ExistingFile);
    auto* eval = app.add_subcommand("eval", "per-stage metrics and suggested chain cutoff");
    eval->add_option("--checkpoint", opt.checkpoint_path, "checkpoint to evaluate")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--samples", opt.eval_samples, "evaluation sample count");
    auto* sample = app.add_subcommand("sample", "export per-stage samples");
    sample->add_option("--checkpoint", opt.checkpoint_path, "checkpoint to sample")
        ->required()
        ->check(CLI::ExistingFile);
    sample->add_option("--count", opt.sample_count, "samples (grid rows)");
    sample->add_option("--stage", opt.stage, "stage index or 'all'");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        const RunConfig cfg = resolve_config(opt);
        if (train->parsed())
            return dispatch(cfg, [&] { return cmd_train<float>(cfg, false, "", opt.stop_at); },
                            [&] { return cmd_train<double>(cfg, false, "", opt.stop_at); });
        if (resume->parsed())
            return dispatch(cfg, [&] { return cmd_train<float>(cfg, true, opt.checkpoint_path, opt.stop_at); },
                            [&] { return cmd_train<double>(cfg, true, opt.checkpoint_path, opt.stop_at); });
        if (eval->parsed())
            return dispatch(cfg, [&] { return cmd_eval<float>(cfg, opt.checkpoint_path, opt.eval_samples); },
                            [&] { return cmd_eval<double>(cfg, opt.checkpoint_path, opt.eval_samples); });
        if (sample->parsed())
            return dispatch(cfg, [&] { return cmd_sample<float>(cfg, opt); },
                            [&] { return cmd_sample<double>(cfg, opt); });
        throw ConfigError("config: no subcommand");
    } catch (const DivergenceError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
