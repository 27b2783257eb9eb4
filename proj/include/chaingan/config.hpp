#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "chaingan/trainer.hpp"

namespace chaingan {

// Invalid configuration input; the CLI maps this to its config-error exit code.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Full run description: everything the trainer needs plus output placement.
struct RunConfig {
    TrainConfig train;
    std::string out_dir = "runs/out";
    std::string precision = "f64"; // f32 | f64
    std::int64_t sample_every = 0; // sample-grid cadence, 0 = off
    int sample_count = 8;

    void validate() const;
};

// Parses the key/value config format: [section] headers, key = value lines,
// '#' comments. Unknown keys are rejected with their full dotted path.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config_file(const std::string& path);

// Applies one dotted-path override such as "train.iterations=500".
void apply_override(RunConfig& cfg, const std::string& assignment);

// Canonical serialization: every field in a fixed order. The digest of this
// text is stored in checkpoints, so any override shows up in it.
std::string canonical_text(const RunConfig& cfg);
std::uint64_t config_digest(const RunConfig& cfg);

} // namespace chaingan
