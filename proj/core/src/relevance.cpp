#include "calad/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "calad/errors.hpp"

namespace calad {

TransformerAutoencoder::TransformerAutoencoder(const AeConfig& cfg, std::size_t channels,
                                               std::size_t ws)
    : backbone("ae", channels, cfg.d_model, cfg.heads, cfg.ff_hidden, cfg.n_blocks, ws),
      out_proj("ae.out_proj", cfg.d_model, channels) {}

void TransformerAutoencoder::init(Prng& rng) {
    backbone.init(rng);
    out_proj.init(rng);
}

Var TransformerAutoencoder::forward(Tape& t, Var x) {
    return out_proj.forward(t, backbone.forward(t, x));
}

std::vector<Parameter*> TransformerAutoencoder::parameters() {
    std::vector<Parameter*> out;
    backbone.collect(out);
    out_proj.collect(out);
    return out;
}

Tensor TransformerAutoencoder::reconstruct(const Tensor& windows, std::size_t batch) {
    const std::size_t N = windows.shape[0], ws = windows.shape[1], C = windows.shape[2];
    Tensor out(windows.shape);
    for (std::size_t begin = 0; begin < N; begin += batch) {
        const std::size_t n = std::min(batch, N - begin);
        Tensor chunk(Shape{n, ws, C});
        std::copy(windows.data.begin() + begin * ws * C,
                  windows.data.begin() + (begin + n) * ws * C, chunk.data.begin());
        Tape tape;
        Var y = forward(tape, tape.input(std::move(chunk)));
        const Tensor& val = y.value();
        std::copy(val.data.begin(), val.data.end(), out.data.begin() + begin * ws * C);
    }
    return out;
}

namespace {

Tensor gather_windows(const Tensor& windows, const std::vector<std::size_t>& idx,
                      std::size_t begin, std::size_t count) {
    const std::size_t ws = windows.shape[1], C = windows.shape[2];
    Tensor out(Shape{count, ws, C});
    for (std::size_t i = 0; i < count; ++i) {
        const double* src = windows.data.data() + idx[begin + i] * ws * C;
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

AeTrainResult train_autoencoder(TransformerAutoencoder& model, const WindowSet& train_windows,
                                const AeConfig& cfg, Prng& rng) {
    const std::size_t N = train_windows.count();
    if (N == 0) throw UsageError("train_autoencoder: empty window set");
    Adam opt(model.parameters(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), 0);

    AeTrainResult result;
    result.epochs = cfg.epochs;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(idx, rng);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < N; begin += cfg.batch) {
            const std::size_t n = std::min(cfg.batch, N - begin);
            Tape tape;
            Var x = tape.input(gather_windows(train_windows.windows, idx, begin, n));
            Var loss = mse(tape, model.forward(tape, x), x);
            const double lv = loss.value().scalar_value();
            if (!std::isfinite(lv)) {
                throw TrainingDivergedError("autoencoder training diverged at epoch " +
                                            std::to_string(epoch + 1));
            }
            epoch_loss += lv * static_cast<double>(n);
            tape.backward(loss);
            opt.step();
        }
        result.final_loss = epoch_loss / static_cast<double>(N);
    }
    return result;
}

ReconstructionErrors reconstruction_errors(TransformerAutoencoder& model, const Tensor& series,
                                           std::size_t ws) {
    if (series.ndim() != 2) throw UsageError("reconstruction_errors: series must be [T, C]");
    const std::size_t T = series.shape[0], C = series.shape[1];
    if (T < ws) throw UsageError("reconstruction_errors: series shorter than window size");

    const std::size_t full_blocks = T / ws;
    const bool has_tail = (T % ws) != 0;
    const std::size_t n_blocks = full_blocks + (has_tail ? 1 : 0);
    Tensor blocks(Shape{n_blocks, ws, C});
    for (std::size_t b = 0; b < full_blocks; ++b) {
        const double* src = series.data.data() + b * ws * C;
        std::copy(src, src + ws * C, blocks.data.data() + b * ws * C);
    }
    if (has_tail) {
        const double* src = series.data.data() + (T - ws) * C;
        std::copy(src, src + ws * C, blocks.data.data() + full_blocks * ws * C);
    }

    Tensor recon_blocks = model.reconstruct(blocks);

    Tensor recon(Shape{T, C});
    for (std::size_t b = 0; b < full_blocks; ++b) {
        const double* src = recon_blocks.data.data() + b * ws * C;
        std::copy(src, src + ws * C, recon.data.data() + b * ws * C);
    }
    if (has_tail) {
        // The right-aligned tail block fills only the positions past the
        // last full block.
        const std::size_t tail_start = full_blocks * ws;
        const std::size_t skip = tail_start - (T - ws);
        const double* src = recon_blocks.data.data() + full_blocks * ws * C + skip * C;
        std::copy(src, src + (T - tail_start) * C, recon.data.data() + tail_start * C);
    }

    ReconstructionErrors out;
    out.e = Tensor(Shape{T, C});
    out.y.assign(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double err = std::abs(series(t, c) - recon(t, c));
            out.e(t, c) = err;
            sum += err;
        }
        out.y[t] = sum / static_cast<double>(C);
    }
    return out;
}

RegressionProblem build_regression_problem(const Tensor& inputs,
                                           const std::vector<double>& response) {
    if (inputs.ndim() != 2) throw UsageError("regression: inputs must be [n, C]");
    const std::size_t n = inputs.shape[0], C = inputs.shape[1];
    if (response.size() != n) throw UsageError("regression: response length mismatch");
    if (n < 2) throw UsageError("regression: need at least two samples");

    RegressionProblem p;
    p.predictors = Tensor(Shape{n, C});
    p.response = response;
    p.col_mean.assign(C, 0.0);
    p.col_std.assign(C, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < C; ++c) p.col_mean[c] += inputs(i, c);
    }
    for (std::size_t c = 0; c < C; ++c) p.col_mean[c] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < C; ++c) {
            const double d = inputs(i, c) - p.col_mean[c];
            p.col_std[c] += d * d;
        }
    }
    for (std::size_t c = 0; c < C; ++c) {
        p.col_std[c] = std::sqrt(p.col_std[c] / static_cast<double>(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < C; ++c) {
            p.predictors(i, c) =
                p.col_std[c] > 1e-12 ? (inputs(i, c) - p.col_mean[c]) / p.col_std[c] : 0.0;
        }
    }
    return p;
}

namespace {

double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

}  // namespace

LassoResult lasso_fit(const RegressionProblem& problem, double lambda) {
    if (lambda < 0.0) throw UsageError("lasso_fit: lambda must be >= 0");
    const std::size_t n = problem.predictors.shape[0];
    const std::size_t C = problem.predictors.shape[1];
    const double nd = static_cast<double>(n);

    // Center the response; columns are already mean 0, so the unpenalized
    // intercept is the response mean.
    double ybar = 0.0;
    for (double v : problem.response) ybar += v;
    ybar /= nd;

    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) residual[i] = problem.response[i] - ybar;

    std::vector<double> col_sq(C, 0.0);  // X_c . X_c / n
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = problem.predictors(i, c);
            s += v * v;
        }
        col_sq[c] = s / nd;
    }

    LassoResult result;
    result.beta.assign(C, 0.0);
    result.intercept = ybar;

    constexpr std::size_t kMaxSweeps = 10000;
    constexpr double kTol = 1e-8;
    bool converged = false;
    std::size_t sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        double max_change = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            if (col_sq[c] == 0.0) continue;
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += problem.predictors(i, c) * residual[i];
            const double z = dot / nd + col_sq[c] * result.beta[c];
            const double beta_new = soft_threshold(z, lambda) / col_sq[c];
            const double delta = beta_new - result.beta[c];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < n; ++i) {
                    residual[i] -= delta * problem.predictors(i, c);
                }
                result.beta[c] = beta_new;
            }
            max_change = std::max(max_change, std::abs(delta));
        }
        if (max_change < kTol) {
            ++sweep;
            converged = true;
            break;
        }
    }
    result.sweeps = sweep;
    result.converged = converged;
    return result;
}

ChannelRelevance estimate_relevance(const std::vector<double>& errors_y, const Tensor& inputs,
                                    double lambda) {
    RegressionProblem problem = build_regression_problem(inputs, errors_y);
    const std::size_t C = problem.predictors.shape[1];
    const std::size_t n = problem.predictors.shape[0];

    ChannelRelevance rel;
    rel.response_mean = 0.0;
    rel.response_max = 0.0;
    for (double v : errors_y) {
        rel.response_mean += v;
        rel.response_max = std::max(rel.response_max, v);
    }
    rel.response_mean /= static_cast<double>(errors_y.size());

    double lam = lambda;
    LassoResult fit = lasso_fit(problem, lam);
    auto nonzero_count = [&](const std::vector<double>& beta) {
        std::size_t k = 0;
        for (double b : beta) k += (b != 0.0) ? 1 : 0;
        return k;
    };

    // Degeneracy fallback: halve lambda until something activates.
    std::size_t halvings = 0;
    while (nonzero_count(fit.beta) == 0 && halvings < 20) {
        lam *= 0.5;
        fit = lasso_fit(problem, lam);
        ++halvings;
        rel.fallback_used = true;
    }

    rel.beta = fit.beta;
    rel.lambda_used = lam;
    rel.labels.assign(C, 0);

    const std::size_t top_k = static_cast<std::size_t>(
        std::ceil(0.2 * static_cast<double>(C)));

    if (nonzero_count(fit.beta) == 0) {
        // Still flat: rank channels by |correlation| with the response.
        rel.fallback_used = true;
        std::vector<double> corr(C, 0.0);
        double y_mean = 0.0;
        for (double v : errors_y) y_mean += v;
        y_mean /= static_cast<double>(n);
        double y_var = 0.0;
        for (double v : errors_y) y_var += (v - y_mean) * (v - y_mean);
        if (y_var > 0.0) {
            for (std::size_t c = 0; c < C; ++c) {
                double cov = 0.0, x_var = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double xc = problem.predictors(i, c);
                    cov += xc * (errors_y[i] - y_mean);
                    x_var += xc * xc;
                }
                corr[c] = (x_var > 0.0) ? std::abs(cov) / std::sqrt(x_var * y_var) : 0.0;
            }
        }
        std::vector<std::size_t> order(C);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return corr[a] > corr[b]; });
        for (std::size_t i = 0; i < std::min(top_k, C); ++i) rel.labels[order[i]] = 1;
    } else if (nonzero_count(fit.beta) == C && C >= 2) {
        // Everything active: keep only the strongest fifth as relevant so the
        // augmentation has both channel sets.
        rel.fallback_used = true;
        std::vector<std::size_t> order(C);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(fit.beta[a]) > std::abs(fit.beta[b]);
        });
        for (std::size_t i = 0; i < std::min(top_k, C); ++i) rel.labels[order[i]] = 1;
    } else {
        for (std::size_t c = 0; c < C; ++c) rel.labels[c] = (fit.beta[c] != 0.0) ? 1 : 0;
    }
    return rel;
}

}  // namespace calad
