#include "calad/nn.hpp"

#include <cmath>

#include "calad/errors.hpp"

namespace calad {

void glorot_init(Tensor& w, std::size_t fan_in, std::size_t fan_out, Prng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w.data) v = rng.uniform(-limit, limit);
}

Tensor sinusoidal_positions(std::size_t T, std::size_t d) {
    Tensor pos(Shape{T, d});
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            const double exponent = static_cast<double>(2 * (j / 2)) / static_cast<double>(d);
            const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
            pos(t, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pos;
}

Linear::Linear(const std::string& name, std::size_t d_in, std::size_t d_out)
    : weight(name + ".weight", Tensor(Shape{d_in, d_out})),
      bias(name + ".bias", Tensor(Shape{d_out})) {}

void Linear::init(Prng& rng) {
    glorot_init(weight.value, weight.value.shape[0], weight.value.shape[1], rng);
    bias.value.fill(0.0);
}

Var Linear::forward(Tape& t, Var x) const {
    auto& self = const_cast<Linear&>(*this);
    return t.add_bcast(t.matmul(x, t.leaf(self.weight)), t.leaf(self.bias));
}

void Linear::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, std::size_t d)
    : gain(name + ".gain", Tensor::full(Shape{d}, 1.0)), bias(name + ".bias", Tensor(Shape{d})) {}

void LayerNorm::init(Prng&) {
    gain.value.fill(1.0);
    bias.value.fill(0.0);
}

Var LayerNorm::forward(Tape& t, Var x) const {
    auto& self = const_cast<LayerNorm&>(*this);
    return t.layer_norm(x, t.leaf(self.gain), t.leaf(self.bias));
}

void LayerNorm::collect(std::vector<Parameter*>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t d,
                                       std::size_t n_heads)
    : dim(d),
      heads(n_heads),
      wq(name + ".wq", d, d),
      wk(name + ".wk", d, d),
      wv(name + ".wv", d, d),
      wo(name + ".wo", d, d) {
    if (n_heads == 0 || d % n_heads != 0) {
        throw ConfigError("attention dim " + std::to_string(d) + " not divisible by heads " +
                          std::to_string(n_heads));
    }
}

void MultiHeadAttention::init(Prng& rng) {
    wq.init(rng);
    wk.init(rng);
    wv.init(rng);
    wo.init(rng);
}

Var MultiHeadAttention::forward(Tape& t, Var x) {
    const Shape& s = x.shape();
    if (s.size() != 3 || s[2] != dim) {
        throw DimensionError("attention: expected [n,T," + std::to_string(dim) + "], got " +
                             shape_str(s));
    }
    const std::size_t n = s[0], T = s[1], dh = dim / heads;

    auto split = [&](Var v) {
        Var v4 = t.reshape(v, Shape{n, T, heads, dh});
        v4 = t.permute(v4, {0, 2, 1, 3});
        return t.reshape(v4, Shape{n * heads, T, dh});
    };
    Var q = split(wq.forward(t, x));
    Var k = split(wk.forward(t, x));
    Var v = split(wv.forward(t, x));

    Var scores = t.scale(t.bmm(q, t.permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var probs = t.softmax(scores);
    if (capture_probs) *capture_probs = probs.value();

    Var ctx = t.bmm(probs, v);  // [n*heads, T, dh]
    ctx = t.reshape(ctx, Shape{n, heads, T, dh});
    ctx = t.permute(ctx, {0, 2, 1, 3});
    ctx = t.reshape(ctx, Shape{n, T, dim});
    return wo.forward(t, ctx);
}

void MultiHeadAttention::collect(std::vector<Parameter*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

FeedForward::FeedForward(const std::string& name, std::size_t d, std::size_t hidden)
    : fc1(name + ".fc1", d, hidden), fc2(name + ".fc2", hidden, d) {}

void FeedForward::init(Prng& rng) {
    fc1.init(rng);
    fc2.init(rng);
}

Var FeedForward::forward(Tape& t, Var x) const {
    return fc2.forward(t, t.relu(fc1.forward(t, x)));
}

void FeedForward::collect(std::vector<Parameter*>& out) {
    fc1.collect(out);
    fc2.collect(out);
}

TransformerBlock::TransformerBlock(const std::string& name, std::size_t d, std::size_t n_heads,
                                   std::size_t ff_hidden)
    : ln1(name + ".ln1", d),
      ln2(name + ".ln2", d),
      attn(name + ".attn", d, n_heads),
      ff(name + ".ff", d, ff_hidden) {}

void TransformerBlock::init(Prng& rng) {
    ln1.init(rng);
    attn.init(rng);
    ln2.init(rng);
    ff.init(rng);
}

Var TransformerBlock::forward(Tape& t, Var x) {
    Var h = t.add(x, attn.forward(t, ln1.forward(t, x)));
    return t.add(h, ff.forward(t, ln2.forward(t, h)));
}

void TransformerBlock::collect(std::vector<Parameter*>& out) {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    ff.collect(out);
}

TransformerBackbone::TransformerBackbone(const std::string& name, std::size_t c_in,
                                         std::size_t d, std::size_t n_heads,
                                         std::size_t ff_hidden, std::size_t n_blocks,
                                         std::size_t T)
    : in_proj(name + ".in_proj", c_in, d), pos(sinusoidal_positions(T, d)) {
    blocks.reserve(n_blocks);
    for (std::size_t i = 0; i < n_blocks; ++i) {
        blocks.emplace_back(name + ".block" + std::to_string(i), d, n_heads, ff_hidden);
    }
}

void TransformerBackbone::init(Prng& rng) {
    in_proj.init(rng);
    for (auto& b : blocks) b.init(rng);
}

Var TransformerBackbone::forward(Tape& t, Var x) {
    Var h = t.add_bcast(in_proj.forward(t, x), t.input(pos));
    for (auto& b : blocks) h = b.forward(t, h);
    return h;
}

void TransformerBackbone::collect(std::vector<Parameter*>& out) {
    in_proj.collect(out);
    for (auto& b : blocks) b.collect(out);
}

Conv1d::Conv1d(const std::string& name, std::size_t k, std::size_t c_in, std::size_t c_out)
    : weight(name + ".weight", Tensor(Shape{k, c_in, c_out})),
      bias(name + ".bias", Tensor(Shape{c_out})) {}

void Conv1d::init(Prng& rng) {
    const std::size_t k = weight.value.shape[0];
    glorot_init(weight.value, k * weight.value.shape[1], k * weight.value.shape[2], rng);
    bias.value.fill(0.0);
}

Var Conv1d::forward(Tape& t, Var x) const {
    auto& self = const_cast<Conv1d&>(*this);
    return t.conv1d_same(x, t.leaf(self.weight), t.leaf(self.bias));
}

void Conv1d::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

ResidualConvBlock::ResidualConvBlock(const std::string& name, std::size_t k, std::size_t c_in,
                                     std::size_t c_out)
    : conv(name + ".conv", k, c_in, c_out) {
    if (c_in != c_out) proj.emplace(name + ".proj", 1, c_in, c_out);
}

void ResidualConvBlock::init(Prng& rng) {
    conv.init(rng);
    if (proj) proj->init(rng);
}

Var ResidualConvBlock::forward(Tape& t, Var x) const {
    Var h = conv.forward(t, x);
    Var s = proj ? proj->forward(t, x) : x;
    return t.relu(t.add(h, s));
}

void ResidualConvBlock::collect(std::vector<Parameter*>& out) {
    conv.collect(out);
    if (proj) proj->collect(out);
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr < 0.0) throw ConfigError("adam: lr must be >= 0");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Parameter* p : params_) {
        m_.push_back(Tensor::zeros(p->value.shape));
        v_.push_back(Tensor::zeros(p->value.shape));
    }
}

void Adam::step() {
    step_ += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        if (!p.grad.all_finite()) {
            throw NumericError("adam: non-finite gradient for parameter '" + p.name + "'");
        }
        double* m = m_[i].data.data();
        double* v = v_[i].data.data();
        const double* g = p.grad.data.data();
        double* w = p.value.data.data();
        const std::size_t n = p.value.numel();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        p.zero_grad();
    }
}

}  // namespace calad
