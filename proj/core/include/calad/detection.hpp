#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "calad/dataio.hpp"
#include "calad/model.hpp"
#include "calad/tensor.hpp"

namespace calad {

// Row-wise softmax outside the tape, max-subtracted.
Tensor softmax_rows(const Tensor& logits);

// Latent-class assignment statistics over the training windows; the normal
// class is the most frequent one (ties to the smallest index).
struct ClassProfile {
    std::size_t normal_class = 0;
    std::vector<std::size_t> histogram;
};

ClassProfile fit_profile(CaladNetwork& network, const WindowSet& train_anchors);
ClassProfile fit_profile_from_probs(const Tensor& probs);

struct WindowScore {
    double score = 0.0;  // 1 - p_normal
    int label = 0;       // 0 iff the argmax class is the normal class
};

std::vector<WindowScore> score_windows(CaladNetwork& network, const ClassProfile& profile,
                                       const WindowSet& test_windows);
std::vector<WindowScore> score_from_probs(const Tensor& probs, const ClassProfile& profile);

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double au_pr = 0.0;
};

// Precision/recall/F1 on hard labels; AU-PR by descending score threshold
// with tied scores processed as one group, no point adjustment anywhere.
Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                        const std::vector<double>& scores);

// Uniform scores in [0,1), labels = score > 0.5, evaluated against the given
// ground truth.
Metrics random_baseline(std::size_t n, const std::vector<int>& truth, std::uint64_t seed);

// Full per-window result of the detection stage.
struct DetectionReport {
    std::vector<double> scores;
    std::vector<int> pred;
    std::vector<int> truth;
    std::vector<std::size_t> origin_index;
    Metrics metrics;
    std::size_t normal_class = 0;
    std::vector<std::size_t> histogram;
    double prevalence = 0.0;
};

}  // namespace calad
