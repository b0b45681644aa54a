#pragma once

#include <cstddef>
#include <vector>

#include "calad/dataio.hpp"
#include "calad/neighbor.hpp"
#include "calad/nn.hpp"
#include "calad/prng.hpp"
#include "calad/tape.hpp"

namespace calad {

struct MainConfig {
    std::size_t d_model = 64;
    std::size_t n_blocks = 2;
    std::size_t heads = 4;
    std::size_t ff_hidden = 128;
    std::size_t n_classes = 10;  // latent classes K
    std::size_t mlp_hidden = 256;
    std::size_t epochs = 50;
    std::size_t batch = 50;
    double lr = 0.01;
    // Flips the furthest-neighbor term of the contrastive objective to the
    // literal printed sign instead of the corrected one.
    bool literal_eq9_sign = false;
};

// Linear projection + transformer encoder + mean pooling into K-class
// logits, with an MLP head reconstructing the anchor window from its logits.
struct CaladNetwork {
    TransformerBackbone backbone;
    Linear head;  // d_model -> K
    Linear mlp1;  // K -> mlp_hidden
    Linear mlp2;  // mlp_hidden -> ws*C
    std::size_t ws = 0;
    std::size_t channels = 0;

    CaladNetwork(const MainConfig& cfg, std::size_t channels_, std::size_t ws_);
    void init(Prng& rng);
    Var logits(Tape& t, Var x);           // [n, ws, C] -> [n, K]
    Var reconstruct(Tape& t, Var logit);  // [n, K] -> [n, ws*C]
    std::vector<Parameter*> parameters();
    // Batched inference logits.
    Tensor infer_logits(const Tensor& windows, std::size_t batch = 64);
};

// Dot product of the two softmax distributions, clamped to
// [1e-7, 1 - 1e-7] so the log terms stay finite.
Var similarity(Tape& t, Var zi, Var zj);

// Mean over the batch of BCE(sim(anc,near), 1) +/- BCE(sim(anc,fur), 0);
// default is the plus sign (furthest similarity pushed toward 0).
Var contrastive_loss(Tape& t, Var z_anc, Var z_near, Var z_fur, bool literal_sign = false);

// Mean over the batch of the squared error summed per window.
// Both arguments flattened to [n, ws*C].
Var reconstruction_loss(Tape& t, Var w_anc, Var w_hat);

struct LossBreakdown {
    double contra = 0.0;
    double rec = 0.0;
    double total = 0.0;
};

struct CaladTrainLog {
    std::vector<LossBreakdown> per_epoch;
};

// Joint training on (anchor, nearest, furthest) triplets drawn from the
// neighbor index.
CaladTrainLog train_calad(CaladNetwork& network, const WindowSet& anchors,
                          const NeighborIndex& index, const MainConfig& cfg, Prng& rng);

}  // namespace calad
