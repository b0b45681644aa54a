#include "calad/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "calad/errors.hpp"

namespace calad {

namespace {

constexpr double kSimClamp = 1e-7;

}  // namespace

CaladNetwork::CaladNetwork(const MainConfig& cfg, std::size_t channels_, std::size_t ws_)
    : backbone("calad", channels_, cfg.d_model, cfg.heads, cfg.ff_hidden, cfg.n_blocks, ws_),
      head("calad.head", cfg.d_model, cfg.n_classes),
      mlp1("calad.mlp1", cfg.n_classes, cfg.mlp_hidden),
      mlp2("calad.mlp2", cfg.mlp_hidden, ws_ * channels_),
      ws(ws_),
      channels(channels_) {}

void CaladNetwork::init(Prng& rng) {
    backbone.init(rng);
    head.init(rng);
    mlp1.init(rng);
    mlp2.init(rng);
}

Var CaladNetwork::logits(Tape& t, Var x) {
    return head.forward(t, t.mean_time(backbone.forward(t, x)));
}

Var CaladNetwork::reconstruct(Tape& t, Var logit) {
    return mlp2.forward(t, t.relu(mlp1.forward(t, logit)));
}

std::vector<Parameter*> CaladNetwork::parameters() {
    std::vector<Parameter*> out;
    backbone.collect(out);
    head.collect(out);
    mlp1.collect(out);
    mlp2.collect(out);
    return out;
}

Tensor CaladNetwork::infer_logits(const Tensor& windows, std::size_t batch) {
    const std::size_t N = windows.shape[0];
    const std::size_t K = head.bias.value.numel();
    Tensor out(Shape{N, K});
    for (std::size_t begin = 0; begin < N; begin += batch) {
        const std::size_t n = std::min(batch, N - begin);
        Tensor chunk(Shape{n, windows.shape[1], windows.shape[2]});
        std::copy(windows.data.begin() + begin * windows.shape[1] * windows.shape[2],
                  windows.data.begin() + (begin + n) * windows.shape[1] * windows.shape[2],
                  chunk.data.begin());
        Tape tape;
        Var z = logits(tape, tape.input(std::move(chunk)));
        const Tensor& val = z.value();
        std::copy(val.data.begin(), val.data.end(), out.data.begin() + begin * K);
    }
    return out;
}

Var similarity(Tape& t, Var zi, Var zj) {
    if (zi.shape() != zj.shape()) {
        throw DimensionError("similarity: logits shapes differ");
    }
    Var pi = t.softmax(zi);
    Var pj = t.softmax(zj);
    return t.clamp(dot_rows(t, pi, pj), kSimClamp, 1.0 - kSimClamp);
}

Var contrastive_loss(Tape& t, Var z_anc, Var z_near, Var z_fur, bool literal_sign) {
    Var s_near = similarity(t, z_anc, z_near);
    Var s_fur = similarity(t, z_anc, z_fur);
    // BCE(s, 1) = -ln s, BCE(s, 0) = -ln(1 - s).
    Var near_term = t.scale(t.log(s_near), -1.0);
    Var one_minus = t.add_scalar(t.scale(s_fur, -1.0), 1.0);
    Var fur_term = t.scale(t.log(one_minus), -1.0);
    Var combined = literal_sign ? t.sub(near_term, fur_term) : t.add(near_term, fur_term);
    return t.mean_all(combined);
}

Var reconstruction_loss(Tape& t, Var w_anc, Var w_hat) {
    const Shape& sa = w_anc.shape();
    const std::size_t n = sa.empty() ? 1 : sa[0];
    const std::size_t flat = w_anc.value().numel() / n;
    Var a = t.reshape(w_anc, Shape{n, flat});
    Var b = t.reshape(w_hat, Shape{n, flat});
    Var d = t.sub(a, b);
    return t.mean_all(t.sum_lastdim(t.mul(d, d)));
}

namespace {

Tensor gather_rows3(const Tensor& stack, const std::vector<std::size_t>& order,
                    const std::vector<std::size_t>* map, std::size_t begin, std::size_t count) {
    const std::size_t ws = stack.shape[1], C = stack.shape[2];
    Tensor out(Shape{count, ws, C});
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t src_idx = order[begin + i];
        if (map) src_idx = (*map)[src_idx];
        const double* src = stack.data.data() + src_idx * ws * C;
        std::copy(src, src + ws * C, out.data.data() + i * ws * C);
    }
    return out;
}

void shuffle_indices(std::vector<std::size_t>& idx, Prng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::size_t j = rng.next_below(i);
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace

CaladTrainLog train_calad(CaladNetwork& network, const WindowSet& anchors,
                          const NeighborIndex& index, const MainConfig& cfg, Prng& rng) {
    const std::size_t N = anchors.count();
    if (N < 2) throw UsageError("train_calad: need at least two windows");
    if (index.count() != N) {
        throw UsageError("train_calad: neighbor index size does not match the window set");
    }
    Adam opt(network.parameters(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), 0);

    CaladTrainLog log;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(idx, rng);
        LossBreakdown epoch_loss;
        for (std::size_t begin = 0; begin < N; begin += cfg.batch) {
            const std::size_t n = std::min(cfg.batch, N - begin);
            Tape tape;
            Var anc = tape.input(gather_rows3(anchors.windows, idx, nullptr, begin, n));
            Var near = tape.input(gather_rows3(anchors.windows, idx, &index.nearest_of, begin, n));
            Var fur = tape.input(gather_rows3(anchors.windows, idx, &index.furthest_of, begin, n));

            Var z_anc = network.logits(tape, anc);
            Var z_near = network.logits(tape, near);
            Var z_fur = network.logits(tape, fur);

            Var contra = contrastive_loss(tape, z_anc, z_near, z_fur, cfg.literal_eq9_sign);
            // Reconstruction head applied to the anchor only.
            Var rec = reconstruction_loss(tape, anc, network.reconstruct(tape, z_anc));
            Var total = tape.add(contra, rec);

            const double cv = contra.value().scalar_value();
            const double rv = rec.value().scalar_value();
            const double tv = total.value().scalar_value();
            if (!std::isfinite(tv)) {
                throw TrainingDivergedError("training diverged at epoch " +
                                            std::to_string(epoch + 1) +
                                            "; consider lowering the learning rate");
            }
            const double w = static_cast<double>(n);
            epoch_loss.contra += cv * w;
            epoch_loss.rec += rv * w;
            epoch_loss.total += tv * w;

            tape.backward(total);
            opt.step();
        }
        const double invN = 1.0 / static_cast<double>(N);
        epoch_loss.contra *= invN;
        epoch_loss.rec *= invN;
        epoch_loss.total *= invN;
        log.per_epoch.push_back(epoch_loss);
    }
    return log;
}

}  // namespace calad
