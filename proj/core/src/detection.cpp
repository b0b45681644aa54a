#include "calad/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "calad/errors.hpp"
#include "calad/prng.hpp"

namespace calad {

Tensor softmax_rows(const Tensor& logits) {
    if (logits.ndim() != 2) throw UsageError("softmax_rows: expected [n, K]");
    const std::size_t n = logits.shape[0], K = logits.shape[1];
    Tensor out = logits;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data.data() + i * K;
        double mx = row[0];
        for (std::size_t j = 1; j < K; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < K; ++j) row[j] /= sum;
    }
    return out;
}

namespace {

std::size_t argmax_row(const double* row, std::size_t K) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < K; ++j) {
        if (row[j] > row[best]) best = j;  // ties keep the smallest index
    }
    return best;
}

}  // namespace

ClassProfile fit_profile_from_probs(const Tensor& probs) {
    if (probs.ndim() != 2 || probs.shape[0] == 0) {
        throw UsageError("fit_profile: need at least one window");
    }
    const std::size_t n = probs.shape[0], K = probs.shape[1];
    ClassProfile profile;
    profile.histogram.assign(K, 0);
    for (std::size_t i = 0; i < n; ++i) {
        profile.histogram[argmax_row(probs.data.data() + i * K, K)] += 1;
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k) {
        if (profile.histogram[k] > profile.histogram[best]) best = k;
    }
    profile.normal_class = best;
    return profile;
}

ClassProfile fit_profile(CaladNetwork& network, const WindowSet& train_anchors) {
    return fit_profile_from_probs(softmax_rows(network.infer_logits(train_anchors.windows)));
}

std::vector<WindowScore> score_from_probs(const Tensor& probs, const ClassProfile& profile) {
    const std::size_t n = probs.shape[0], K = probs.shape[1];
    if (profile.normal_class >= K) throw UsageError("score: profile class out of range");
    std::vector<WindowScore> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = probs.data.data() + i * K;
        out[i].score = 1.0 - row[profile.normal_class];
        out[i].label = (argmax_row(row, K) == profile.normal_class) ? 0 : 1;
    }
    return out;
}

std::vector<WindowScore> score_windows(CaladNetwork& network, const ClassProfile& profile,
                                       const WindowSet& test_windows) {
    return score_from_probs(softmax_rows(network.infer_logits(test_windows.windows)), profile);
}

Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                        const std::vector<double>& scores) {
    const std::size_t n = truth.size();
    if (pred.size() != n || scores.size() != n) {
        throw UsageError("compute_metrics: length mismatch");
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (truth[i] == 1) {
            ++pos;
            if (pred[i] == 1) ++tp;
            else ++fn;
        } else {
            ++neg;
            if (pred[i] == 1) ++fp;
        }
    }
    if (pos == 0) throw UsageError("compute_metrics: AU-PR undefined without positives");
    if (neg == 0) throw UsageError("compute_metrics: AU-PR undefined without negatives");

    Metrics m;
    m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;

    // PR curve by descending score; equal scores form one group; area by
    // step-wise summation sum_k (R_k - R_{k-1}) * P_k.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double area = 0.0;
    double prev_recall = 0.0;
    std::size_t cum_tp = 0, cum_fp = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (truth[order[j]] == 1) ++cum_tp;
            else ++cum_fp;
            ++j;
        }
        const double precision_k =
            static_cast<double>(cum_tp) / static_cast<double>(cum_tp + cum_fp);
        const double recall_k = static_cast<double>(cum_tp) / static_cast<double>(pos);
        area += (recall_k - prev_recall) * precision_k;
        prev_recall = recall_k;
        i = j;
    }
    m.au_pr = area;
    return m;
}

Metrics random_baseline(std::size_t n, const std::vector<int>& truth, std::uint64_t seed) {
    if (n < 2) throw UsageError("random_baseline: need n >= 2");
    if (truth.size() != n) throw UsageError("random_baseline: label length mismatch");
    Prng rng(seed);
    std::vector<double> scores(n);
    std::vector<int> pred(n);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = rng.next_double();
        pred[i] = scores[i] > 0.5 ? 1 : 0;
    }
    return compute_metrics(truth, pred, scores);
}

}  // namespace calad
