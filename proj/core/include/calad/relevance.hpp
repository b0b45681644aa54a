#pragma once

#include <cstddef>
#include <vector>

#include "calad/dataio.hpp"
#include "calad/nn.hpp"
#include "calad/prng.hpp"
#include "calad/tape.hpp"
#include "calad/tensor.hpp"

namespace calad {

struct AeConfig {
    std::size_t d_model = 64;
    std::size_t n_blocks = 2;
    std::size_t heads = 4;
    std::size_t ff_hidden = 128;
    std::size_t epochs = 20;
    std::size_t batch = 50;
    double lr = 0.001;
};

// Transformer encoder reconstructing all channels of a window.
struct TransformerAutoencoder {
    TransformerBackbone backbone;
    Linear out_proj;

    TransformerAutoencoder(const AeConfig& cfg, std::size_t channels, std::size_t ws);
    void init(Prng& rng);
    Var forward(Tape& t, Var x);  // [n, ws, C] -> [n, ws, C]
    std::vector<Parameter*> parameters();
    // Batched inference reconstruction.
    Tensor reconstruct(const Tensor& windows, std::size_t batch = 64);
};

struct AeTrainResult {
    double final_loss = 0.0;
    std::size_t epochs = 0;
};

AeTrainResult train_autoencoder(TransformerAutoencoder& model, const WindowSet& train_windows,
                                const AeConfig& cfg, Prng& rng);

// Per-point absolute reconstruction error and its channel mean, from
// non-overlapping ws-blocks (tail block right-aligned).
struct ReconstructionErrors {
    Tensor e;               // [T, C]
    std::vector<double> y;  // length T
};

ReconstructionErrors reconstruction_errors(TransformerAutoencoder& model, const Tensor& series,
                                           std::size_t ws);

// Standardized regression design: predictors are the original inputs with
// each column scaled to mean 0 / std 1 (constant columns stay 0).
struct RegressionProblem {
    Tensor predictors;  // [n, C]
    std::vector<double> response;
    std::vector<double> col_mean;
    std::vector<double> col_std;
};

RegressionProblem build_regression_problem(const Tensor& inputs,
                                           const std::vector<double>& response);

struct LassoResult {
    std::vector<double> beta;
    double intercept = 0.0;
    bool converged = true;
    std::size_t sweeps = 0;
};

// Cyclic coordinate descent with soft thresholding on the objective
// (1/(2n))||y - X b||^2 + lambda ||b||_1, intercept unpenalized.
// Stops when the largest coefficient change in a sweep is below 1e-8,
// capped at 10,000 sweeps (converged=false past the cap).
LassoResult lasso_fit(const RegressionProblem& problem, double lambda);

struct ChannelRelevance {
    std::vector<double> beta;
    std::vector<int> labels;  // 1 = anomaly-relevant
    double lambda_used = 0.0;
    double response_mean = 0.0;
    double response_max = 0.0;
    bool fallback_used = false;

    std::size_t channels() const { return labels.size(); }
};

// L1 channel selection on the reconstruction-error response, with the
// degeneracy fallback that guarantees both channel sets are non-empty for
// C >= 2.
ChannelRelevance estimate_relevance(const std::vector<double>& errors_y, const Tensor& inputs,
                                    double lambda = 0.001);

}  // namespace calad
