#include "chaingan/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace chaingan {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (...) {
        throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (...) {
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    }
}

Family to_family(const std::string& key, const std::string& v) {
    if (v == "mlp") return Family::Mlp;
    if (v == "dcgan") return Family::Dcgan;
    if (v == "resnet") return Family::Resnet;
    throw ConfigError("config: " + key + " must be mlp|dcgan|resnet, got '" + v + "'");
}

CriticMode to_critic_mode(const std::string& key, const std::string& v) {
    if (v == "multi") return CriticMode::Multi;
    if (v == "single") return CriticMode::Single;
    throw ConfigError("config: " + key + " must be multi|single, got '" + v + "'");
}

TrainingMode to_training_mode(const std::string& key, const std::string& v) {
    if (v == "independent") return TrainingMode::Independent;
    if (v == "end_to_end") return TrainingMode::EndToEnd;
    throw ConfigError("config: " + key + " must be independent|end_to_end, got '" + v + "'");
}

EditorLossMode to_editor_loss(const std::string& key, const std::string& v) {
    if (v == "standard") return EditorLossMode::Standard;
    if (v == "competition") return EditorLossMode::Competition;
    if (v == "discounted") return EditorLossMode::Discounted;
    throw ConfigError("config: " + key + " must be standard|competition|discounted, got '" + v + "'");
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& raw) {
    const std::string v = unquote(raw);
    TrainConfig& t = cfg.train;
    ArchSpec& a = t.arch;
    LossConfig& l = t.loss;

    if (key == "run.seed") t.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "run.out_dir") cfg.out_dir = v;
    else if (key == "run.precision") {
        if (v != "f32" && v != "f64") throw ConfigError("config: run.precision must be f32|f64, got '" + v + "'");
        cfg.precision = v;
    }
    else if (key == "data.dataset") t.dataset_id = v;
    else if (key == "arch.family") a.family = to_family(key, v);
    else if (key == "arch.base_width") a.base_width = static_cast<int>(to_int(key, v));
    else if (key == "arch.noise_dim") a.noise_dim = static_cast<int>(to_int(key, v));
    else if (key == "arch.image_channels") a.image_channels = static_cast<int>(to_int(key, v));
    else if (key == "arch.image_size") a.image_size = static_cast<int>(to_int(key, v));
    else if (key == "arch.feature_dim") a.feature_dim = static_cast<int>(to_int(key, v));
    else if (key == "arch.n_editors") a.n_editors = static_cast<int>(to_int(key, v));
    else if (key == "arch.editor_width") a.editor_width = static_cast<int>(to_int(key, v));
    else if (key == "arch.editor_blocks") a.editor_blocks = static_cast<int>(to_int(key, v));
    else if (key == "train.iterations") t.total_iterations = to_int(key, v);
    else if (key == "train.batch_size") t.batch_size = static_cast<int>(to_int(key, v));
    else if (key == "train.n_critic") t.n_critic = static_cast<int>(to_int(key, v));
    else if (key == "train.learning_rate") t.learning_rate = to_double(key, v);
    else if (key == "train.beta1") t.beta1 = to_double(key, v);
    else if (key == "train.beta2") t.beta2 = to_double(key, v);
    else if (key == "train.adam_epsilon") t.adam_epsilon = to_double(key, v);
    else if (key == "train.critic_mode") t.critic_mode = to_critic_mode(key, v);
    else if (key == "train.training_mode") t.training_mode = to_training_mode(key, v);
    else if (key == "train.checkpoint_every") t.checkpoint_every = to_int(key, v);
    else if (key == "train.metrics_every") t.metrics_every = to_int(key, v);
    else if (key == "train.sample_every") cfg.sample_every = to_int(key, v);
    else if (key == "train.sample_count") cfg.sample_count = static_cast<int>(to_int(key, v));
    else if (key == "loss.gp_lambda") l.gp_coefficient = to_double(key, v);
    else if (key == "loss.editor_loss") l.editor_loss_mode = to_editor_loss(key, v);
    else if (key == "loss.editor_discount") l.editor_discount = to_double(key, v);
    else throw ConfigError("config: unknown key '" + key + "'");
}

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void RunConfig::validate() const {
    train.validate();
    if (precision != "f32" && precision != "f64")
        throw ConfigError("config: run.precision must be f32|f64");
    if (sample_count < 1) throw ConfigError("config: train.sample_count must be >= 1");
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config: line " + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config: line " + std::to_string(lineno) + ": empty key or value");
        set_key(cfg, section.empty() ? key : section + "." + key, value);
    }
    return cfg;
}

RunConfig load_run_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("config: override '" + assignment + "' must look like section.key=value");
    set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string canonical_text(const RunConfig& cfg) {
    const TrainConfig& t = cfg.train;
    const ArchSpec& a = t.arch;
    const LossConfig& l = t.loss;
    std::string s;
    auto kv = [&s](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
    kv("arch.base_width", std::to_string(a.base_width));
    kv("arch.editor_blocks", std::to_string(a.editor_blocks));
    kv("arch.editor_width", std::to_string(a.editor_width));
    kv("arch.family", family_name(a.family));
    kv("arch.feature_dim", std::to_string(a.feature_dim));
    kv("arch.image_channels", std::to_string(a.image_channels));
    kv("arch.image_size", std::to_string(a.image_size));
    kv("arch.n_editors", std::to_string(a.n_editors));
    kv("arch.noise_dim", std::to_string(a.noise_dim));
    kv("data.dataset", t.dataset_id);
    kv("loss.editor_discount", fmt_double(l.editor_discount));
    kv("loss.editor_loss", l.editor_loss_mode == EditorLossMode::Standard      ? "standard"
                           : l.editor_loss_mode == EditorLossMode::Competition ? "competition"
                                                                               : "discounted");
    kv("loss.gp_lambda", fmt_double(l.gp_coefficient));
    // run.out_dir is placement, not semantics; it stays out of the digest so
    // a checkpoint can be continued from a different directory
    kv("run.precision", cfg.precision);
    kv("run.seed", std::to_string(t.seed));
    kv("train.adam_epsilon", fmt_double(t.adam_epsilon));
    kv("train.batch_size", std::to_string(t.batch_size));
    kv("train.beta1", fmt_double(t.beta1));
    kv("train.beta2", fmt_double(t.beta2));
    kv("train.checkpoint_every", std::to_string(t.checkpoint_every));
    kv("train.critic_mode", t.critic_mode == CriticMode::Multi ? "multi" : "single");
    kv("train.iterations", std::to_string(t.total_iterations));
    kv("train.learning_rate", fmt_double(t.learning_rate));
    kv("train.metrics_every", std::to_string(t.metrics_every));
    kv("train.n_critic", std::to_string(t.n_critic));
    kv("train.sample_count", std::to_string(cfg.sample_count));
    kv("train.sample_every", std::to_string(cfg.sample_every));
    kv("train.training_mode",
       t.training_mode == TrainingMode::Independent ? "independent" : "end_to_end");
    return s;
}

std::uint64_t config_digest(const RunConfig& cfg) {
    const std::string text = canonical_text(cfg);
    return fnv1a(text.data(), text.size());
}

} // namespace chaingan
