#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "calad/config.hpp"
#include "calad/detection.hpp"
#include "calad/model.hpp"
#include "calad/neighbor.hpp"
#include "calad/relevance.hpp"
#include "calad/spectral.hpp"

namespace calad {

// Four-stage pipeline orchestration. Each cmd_* writes its artifact
// atomically under the output directory and accepts its predecessor either
// in memory (run_all) or from disk, with the config-hash chain enforced on
// every load.
class Pipeline {
public:
    Pipeline(RunConfig cfg, std::filesystem::path outdir);

    const RunConfig& config() const { return cfg_; }
    const std::filesystem::path& outdir() const { return outdir_; }

    std::filesystem::path train_csv() const { return outdir_ / "train.csv"; }
    std::filesystem::path test_csv() const { return outdir_ / "test.csv"; }
    std::filesystem::path labels_csv() const { return outdir_ / "test_labels.csv"; }
    std::filesystem::path synth_meta() const { return outdir_ / "synth_meta.json"; }
    std::filesystem::path relevance_json() const { return outdir_ / "relevance.json"; }
    std::filesystem::path triplets_ckpt() const { return outdir_ / "triplets.ckpt"; }
    std::filesystem::path encoder_ckpt() const { return outdir_ / "encoder.ckpt"; }
    std::filesystem::path model_ckpt() const { return outdir_ / "model.ckpt"; }
    std::filesystem::path train_log() const { return outdir_ / "train_log.jsonl"; }
    std::filesystem::path report_json() const { return outdir_ / "report.json"; }
    std::filesystem::path windows_csv() const { return outdir_ / "windows.csv"; }

    TimeSeriesSet cmd_synth();
    ChannelRelevance cmd_relevance(const TimeSeriesSet* data = nullptr);
    TripletSet cmd_augment(const TimeSeriesSet* data = nullptr,
                           const ChannelRelevance* relevance = nullptr);

    struct EmbedArtifacts {
        NeighborIndex index;
        EncoderTrainResult stats;
    };
    EmbedArtifacts cmd_train_embed(const TripletSet* triplets = nullptr);

    struct TrainArtifacts {
        CaladNetwork network;
        ClassProfile profile;
        CaladTrainLog log;
    };
    TrainArtifacts cmd_train(const TimeSeriesSet* data = nullptr,
                             const NeighborIndex* index = nullptr);

    DetectionReport cmd_detect(const TimeSeriesSet* data = nullptr,
                               CaladNetwork* network = nullptr,
                               const ClassProfile* profile = nullptr);

    DetectionReport run_all();

    // Loads the dataset (synth artifacts or configured CSV paths) and checks
    // the synth-stage hash when applicable.
    TimeSeriesSet load_data();

    std::string report_bytes(const DetectionReport& report) const;

private:
    Prng stage_rng(const std::string& entity_id, const std::string& label) const;
    std::uint64_t entity_seed(const std::string& entity_id) const;
    void write_report(const DetectionReport& report) const;

    RunConfig cfg_;
    std::filesystem::path outdir_;
};

// Set-recovery metrics of predicted relevant channels vs ground truth.
struct SetRecovery {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};
SetRecovery relevance_recovery(const ChannelRelevance& rel,
                               const std::vector<std::size_t>& truth);

}  // namespace calad
