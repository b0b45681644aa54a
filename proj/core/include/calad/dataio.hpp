#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "calad/tensor.hpp"

namespace calad {

// Raw multivariate series with per-point test labels.
struct TimeSeriesSet {
    Tensor train;  // [T_train, C]
    Tensor test;   // [T_test, C]
    std::vector<int> test_labels;
    std::vector<std::string> channel_names;
    std::string entity_id;
    // Ground-truth relevant channels, recorded by the synthetic generator;
    // empty for ingested data.
    std::vector<std::size_t> true_relevant;

    std::size_t channels() const { return train.ndim() == 2 ? train.shape[1] : 0; }
};

// Per-channel z-score statistics fit on the train split.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // clamped to >= 1e-8
};

// Sliding windows with window-level labels.
struct WindowSet {
    Tensor windows;  // [N, ws, C]
    std::vector<int> window_labels;  // any-anomalous-point rule; empty when unlabeled
    std::size_t ws = 0;
    std::size_t stride = 1;
    std::vector<std::size_t> origin_index;

    std::size_t count() const { return windows.ndim() == 3 ? windows.shape[0] : 0; }
    std::size_t channels() const { return windows.ndim() == 3 ? windows.shape[2] : 0; }
};

// CSV ingestion: comma-separated, optional single header row, one row per
// time step. Label file: one 0/1 per line, length matching the test split.
// expected_channels = 0 skips the channel-count check.
TimeSeriesSet load_csv(const std::string& train_path, const std::string& test_path,
                       const std::string& label_path, std::size_t expected_channels = 0);

// Channel-count expectations for the standard corpora adapters.
std::size_t corpus_channel_count(const std::string& corpus);

// Z-score per channel on train statistics, applied to both splits.
std::pair<TimeSeriesSet, NormStats> normalize(const TimeSeriesSet& set);

WindowSet make_windows(const Tensor& series, std::size_t ws, std::size_t stride);
WindowSet make_windows(const Tensor& series, const std::vector<int>& point_labels,
                       std::size_t ws, std::size_t stride);

struct SynthSpec {
    std::uint64_t seed = 0;
    std::size_t t_train = 3000;
    std::size_t t_test = 2000;
    std::size_t channels = 6;
    std::vector<std::size_t> relevant = {0, 1};
    // Half-open [begin, end) point ranges in test coordinates.
    std::vector<std::pair<std::size_t, std::size_t>> anomaly_segments;
    // Adds a level offset to one normal test segment on the channels
    // outside `relevant` (unseen-normal regime).
    bool shift = false;
};

// Seeded sum-of-sinusoids generator. Inside anomaly segments only channels
// in `relevant` are corrupted (amplitude spike x3 or frequency doubling,
// seeded choice per segment and channel).
TimeSeriesSet generate_synthetic(const SynthSpec& spec);

// CSV serialization used by the synth stage; values printed with 17
// significant digits so reloading is exact.
void write_csv(const std::string& path, const Tensor& matrix,
               const std::vector<std::string>& channel_names);
void write_labels(const std::string& path, const std::vector<int>& labels);

}  // namespace calad
