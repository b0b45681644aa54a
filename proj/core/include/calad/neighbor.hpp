#pragma once

#include <cstddef>
#include <vector>

#include "calad/dataio.hpp"
#include "calad/nn.hpp"
#include "calad/prng.hpp"
#include "calad/spectral.hpp"
#include "calad/tape.hpp"

namespace calad {

struct EncoderConfig {
    std::vector<std::size_t> conv_channels = {32, 64, 128};
    std::size_t kernel = 3;
    std::size_t embed_dim = 128;
    std::size_t epochs = 30;
    std::size_t batch = 50;
    double lr = 0.001;
    double margin = 1.0;  // triplet margin
};

// Residual conv stack + global average pooling over time + linear head.
// Embedding dim is fixed regardless of window size.
struct TripletEncoder {
    std::vector<ResidualConvBlock> blocks;
    Linear head;

    TripletEncoder(const EncoderConfig& cfg, std::size_t channels);
    void init(Prng& rng);
    Var forward(Tape& t, Var x);  // [n, ws, C] -> [n, embed_dim]
    std::vector<Parameter*> parameters();
    // Batched inference embedding of a window stack.
    Tensor embed(const Tensor& windows, std::size_t batch = 64);
};

// Mean over the batch of max(||za-zp||^2 - ||za-zn||^2 + alpha, 0).
Var triplet_loss(Tape& t, Var za, Var zp, Var zn, double alpha);

struct EncoderTrainResult {
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

EncoderTrainResult train_encoder(TripletEncoder& encoder, const TripletSet& triplets,
                                 const EncoderConfig& cfg, Prng& rng);

// Exact nearest/furthest neighbor of each embedding over all the others,
// squared Euclidean distance, ties to the smallest index.
struct NeighborIndex {
    Tensor embeddings;  // [N, d]
    std::vector<std::size_t> nearest_of;
    std::vector<std::size_t> furthest_of;

    std::size_t count() const { return nearest_of.size(); }
};

NeighborIndex build_index(TripletEncoder& encoder, const WindowSet& anchors);
NeighborIndex build_index_from_embeddings(const Tensor& embeddings);

}  // namespace calad
