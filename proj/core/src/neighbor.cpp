#include "calad/neighbor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "calad/errors.hpp"

namespace calad {

TripletEncoder::TripletEncoder(const EncoderConfig& cfg, std::size_t channels)
    : head("enc.head", cfg.conv_channels.empty() ? channels : cfg.conv_channels.back(),
           cfg.embed_dim) {
    std::size_t c_in = channels;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        blocks.emplace_back("enc.block" + std::to_string(i), cfg.kernel, c_in,
                            cfg.conv_channels[i]);
        c_in = cfg.conv_channels[i];
    }
}

void TripletEncoder::init(Prng& rng) {
    for (auto& b : blocks) b.init(rng);
    head.init(rng);
}

Var TripletEncoder::forward(Tape& t, Var x) {
    Var h = x;
    for (auto& b : blocks) h = b.forward(t, h);
    return head.forward(t, t.mean_time(h));
}

std::vector<Parameter*> TripletEncoder::parameters() {
    std::vector<Parameter*> out;
    for (auto& b : blocks) b.collect(out);
    head.collect(out);
    return out;
}

Tensor TripletEncoder::embed(const Tensor& windows, std::size_t batch) {
    const std::size_t N = windows.shape[0], ws = windows.shape[1], C = windows.shape[2];
    const std::size_t d = head.bias.value.numel();
    Tensor out(Shape{N, d});
    for (std::size_t begin = 0; begin < N; begin += batch) {
        const std::size_t n = std::min(batch, N - begin);
        Tensor chunk(Shape{n, ws, C});
        std::copy(windows.data.begin() + begin * ws * C,
                  windows.data.begin() + (begin + n) * ws * C, chunk.data.begin());
        Tape tape;
        Var z = forward(tape, tape.input(std::move(chunk)));
        const Tensor& val = z.value();
        std::copy(val.data.begin(), val.data.end(), out.data.begin() + begin * d);
    }
    return out;
}

Var triplet_loss(Tape& t, Var za, Var zp, Var zn, double alpha) {
    Var dp = squared_distance_rows(t, za, zp);
    Var dn = squared_distance_rows(t, za, zn);
    Var hinge = t.relu(t.add_scalar(t.sub(dp, dn), alpha));
    return t.mean_all(hinge);
}

namespace {

Tensor gather_rows3(const Tensor& stack, const std::vector<std::size_t>& idx, std::size_t begin,
                    std::size_t count) {
    const std::size_t ws = stack.shape[1], C = stack.shape[2];
    Tensor out(Shape{count, ws, C});
    for (std::size_t i = 0; i < count; ++i) {
        const double* src = stack.data.data() + idx[begin + i] * ws * C;
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

EncoderTrainResult train_encoder(TripletEncoder& encoder, const TripletSet& triplets,
                                 const EncoderConfig& cfg, Prng& rng) {
    const std::size_t N = triplets.count();
    if (N < 2) throw UsageError("train_encoder: need at least two triplets");
    Adam opt(encoder.parameters(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), 0);

    EncoderTrainResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(idx, rng);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < N; begin += cfg.batch) {
            const std::size_t n = std::min(cfg.batch, N - begin);
            Tape tape;
            Var za = encoder.forward(tape, tape.input(gather_rows3(triplets.anchors, idx, begin, n)));
            Var zp = encoder.forward(tape, tape.input(gather_rows3(triplets.positives, idx, begin, n)));
            Var zn = encoder.forward(tape, tape.input(gather_rows3(triplets.negatives, idx, begin, n)));
            Var loss = triplet_loss(tape, za, zp, zn, cfg.margin);
            const double lv = loss.value().scalar_value();
            if (!std::isfinite(lv)) {
                throw TrainingDivergedError("encoder training diverged at epoch " +
                                            std::to_string(epoch + 1));
            }
            epoch_loss += lv * static_cast<double>(n);
            tape.backward(loss);
            opt.step();
        }
        epoch_loss /= static_cast<double>(N);
        if (epoch == 0) result.initial_loss = epoch_loss;
        result.final_loss = epoch_loss;
    }
    return result;
}

NeighborIndex build_index(TripletEncoder& encoder, const WindowSet& anchors) {
    if (anchors.count() < 2) throw UsageError("build_index: need at least two windows");
    return build_index_from_embeddings(encoder.embed(anchors.windows));
}

NeighborIndex build_index_from_embeddings(const Tensor& embeddings) {
    if (embeddings.ndim() != 2 || embeddings.shape[0] < 2) {
        throw UsageError("build_index: need at least two embeddings");
    }
    const std::size_t N = embeddings.shape[0], d = embeddings.shape[1];
    NeighborIndex index;
    index.embeddings = embeddings;
    index.nearest_of.assign(N, 0);
    index.furthest_of.assign(N, 0);

    // Exact scan, chunked over queries to keep the working set small. The
    // per-pair arithmetic is a plain subtract-square-sum, so chunking cannot
    // change the result.
    constexpr std::size_t kChunk = 64;
    for (std::size_t q0 = 0; q0 < N; q0 += kChunk) {
        const std::size_t q1 = std::min(q0 + kChunk, N);
        for (std::size_t i = q0; i < q1; ++i) {
            const double* zi = embeddings.data.data() + i * d;
            double best_near = 0.0, best_far = -1.0;
            std::size_t arg_near = N, arg_far = N;
            for (std::size_t j = 0; j < N; ++j) {
                if (j == i) continue;
                const double* zj = embeddings.data.data() + j * d;
                double dist = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = zi[k] - zj[k];
                    dist += diff * diff;
                }
                if (arg_near == N || dist < best_near) {
                    best_near = dist;
                    arg_near = j;
                }
                if (arg_far == N || dist > best_far) {
                    best_far = dist;
                    arg_far = j;
                }
            }
            index.nearest_of[i] = arg_near;
            index.furthest_of[i] = arg_far;
        }
    }
    return index;
}

}  // namespace calad
