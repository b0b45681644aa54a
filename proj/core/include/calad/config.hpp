#pragma once

#include <cstdint>
#include <string>

#include "calad/dataio.hpp"
#include "calad/json_writer.hpp"
#include "calad/model.hpp"
#include "calad/neighbor.hpp"
#include "calad/relevance.hpp"
#include "calad/spectral.hpp"

namespace calad {

struct DataPaths {
    std::string train;
    std::string test;
    std::string labels;
    std::string corpus;  // optional channel-count check (MSL/SMAP/SMD/SWaT)
};

// Full pipeline configuration. Defaults follow the reference setup:
// window 200, stride 1, lambda 0.001, encoder 30 epochs at lr 0.001, main
// model 50 epochs at lr 0.01, batch 50, K = 10.
struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t ws = 200;
    std::size_t stride = 1;
    double lambda = 0.001;
    bool desk = false;

    DataPaths data;   // CSV mode when train path set
    SynthSpec synth;  // synthetic mode otherwise
    AeConfig ae;
    AugmentConfig augment;
    EncoderConfig encoder;
    MainConfig main;

    bool use_synth() const { return data.train.empty(); }
};

RunConfig default_config();

// Minimal TOML subset: [section], key = value, values are numbers, booleans,
// quoted strings, and (nested) arrays on one line. Unknown keys rejected.
RunConfig parse_config_file(const std::string& path);
void apply_toml_line(RunConfig& cfg, const std::string& section, const std::string& key,
                     const std::string& raw_value, const std::string& where);

// CI-speed profile: stride 5, ws 64, epochs 10/10/15 and reduced widths.
void apply_desk_profile(RunConfig& cfg);

void validate_config(const RunConfig& cfg);

enum class Stage { synth, relevance, augment, train_embed, train, detect };

const char* stage_name(Stage s);

// Canonical string of every configuration field that affects the given stage
// and its upstream stages; hashed into the artifact chain.
std::string stage_config_string(const RunConfig& cfg, Stage s);
std::string stage_hash_hex(const RunConfig& cfg, Stage s);

// Config echo for run reports: every field, verbatim.
void write_config_echo(JsonWriter& w, const RunConfig& cfg);

}  // namespace calad
