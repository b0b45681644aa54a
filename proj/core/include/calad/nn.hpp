#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "calad/prng.hpp"
#include "calad/tape.hpp"
#include "calad/tensor.hpp"

namespace calad {

// Glorot-uniform draw for a weight tensor, in-place.
void glorot_init(Tensor& w, std::size_t fan_in, std::size_t fan_out, Prng& rng);

// Sinusoidal position table [T, d], added after input projection.
Tensor sinusoidal_positions(std::size_t T, std::size_t d);

struct Linear {
    Parameter weight;  // [d_in, d_out]
    Parameter bias;    // [d_out]

    Linear(const std::string& name, std::size_t d_in, std::size_t d_out);
    void init(Prng& rng);
    Var forward(Tape& t, Var x) const;
    void collect(std::vector<Parameter*>& out);
};

struct LayerNorm {
    Parameter gain;  // [d]
    Parameter bias;  // [d]

    LayerNorm(const std::string& name, std::size_t d);
    void init(Prng& rng);
    Var forward(Tape& t, Var x) const;
    void collect(std::vector<Parameter*>& out);
};

// Scaled dot-product self-attention with per-head projections.
struct MultiHeadAttention {
    std::size_t dim = 0;
    std::size_t heads = 0;
    Linear wq, wk, wv, wo;
    // When set, the forward pass writes the attention probabilities
    // [n*heads, T, T] here. Test observability hook.
    Tensor* capture_probs = nullptr;

    MultiHeadAttention(const std::string& name, std::size_t d, std::size_t n_heads);
    void init(Prng& rng);
    Var forward(Tape& t, Var x);  // [n, T, d] -> [n, T, d]
    void collect(std::vector<Parameter*>& out);
};

struct FeedForward {
    Linear fc1, fc2;

    FeedForward(const std::string& name, std::size_t d, std::size_t hidden);
    void init(Prng& rng);
    Var forward(Tape& t, Var x) const;
    void collect(std::vector<Parameter*>& out);
};

// Pre-norm block: x + MHA(LN(x)), then h + FF(LN(h)).
struct TransformerBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    FeedForward ff;

    TransformerBlock(const std::string& name, std::size_t d, std::size_t n_heads,
                     std::size_t ff_hidden);
    void init(Prng& rng);
    Var forward(Tape& t, Var x);
    void collect(std::vector<Parameter*>& out);
};

// Input projection + positional encoding + transformer stack.
struct TransformerBackbone {
    Linear in_proj;
    Tensor pos;  // [T, d]
    std::vector<TransformerBlock> blocks;

    TransformerBackbone(const std::string& name, std::size_t c_in, std::size_t d,
                        std::size_t n_heads, std::size_t ff_hidden, std::size_t n_blocks,
                        std::size_t T);
    void init(Prng& rng);
    Var forward(Tape& t, Var x);  // [n, T, c_in] -> [n, T, d]
    void collect(std::vector<Parameter*>& out);
};

struct Conv1d {
    Parameter weight;  // [k, c_in, c_out]
    Parameter bias;    // [c_out]

    Conv1d(const std::string& name, std::size_t k, std::size_t c_in, std::size_t c_out);
    void init(Prng& rng);
    Var forward(Tape& t, Var x) const;
    void collect(std::vector<Parameter*>& out);
};

// relu(conv_k(x) + shortcut(x)); shortcut is identity, or a 1x1 projection
// when the channel width changes.
struct ResidualConvBlock {
    Conv1d conv;
    std::optional<Conv1d> proj;

    ResidualConvBlock(const std::string& name, std::size_t k, std::size_t c_in,
                      std::size_t c_out);
    void init(Prng& rng);
    Var forward(Tape& t, Var x) const;
    void collect(std::vector<Parameter*>& out);
};

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction over a fixed parameter list.
// step() consumes Parameter::grad buffers and zeroes them.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg);
    void step();
    std::size_t step_count() const { return step_; }

private:
    std::vector<Parameter*> params_;
    AdamConfig cfg_;
    std::size_t step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace calad
