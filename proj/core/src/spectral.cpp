#include "calad/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <unordered_map>

#include "calad/errors.hpp"

namespace calad {

namespace {

// Cached FFTW plans per transform length. Buffers are owned by the cache and
// copied in/out, so callers never touch FFTW alignment rules.
class FftEngine {
public:
    static FftEngine& instance() {
        static FftEngine engine;
        return engine;
    }

    void forward(const double* x, std::size_t n, std::complex<double>* out) {
        std::lock_guard<std::mutex> lock(mu_);
        Plans& p = plans_for(n);
        std::copy(x, x + n, p.real);
        fftw_execute(p.r2c);
        const std::size_t bins = n / 2 + 1;
        for (std::size_t i = 0; i < bins; ++i) {
            out[i] = std::complex<double>(p.cplx[i][0], p.cplx[i][1]);
        }
    }

    void inverse(const std::complex<double>* bins, std::size_t n, double* out) {
        std::lock_guard<std::mutex> lock(mu_);
        Plans& p = plans_for(n);
        const std::size_t nb = n / 2 + 1;
        for (std::size_t i = 0; i < nb; ++i) {
            p.cplx[i][0] = bins[i].real();
            p.cplx[i][1] = bins[i].imag();
        }
        fftw_execute(p.c2r);
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = p.real[i] * inv;
    }

private:
    struct Plans {
        double* real = nullptr;
        fftw_complex* cplx = nullptr;
        fftw_plan r2c = nullptr;
        fftw_plan c2r = nullptr;
    };

    Plans& plans_for(std::size_t n) {
        auto it = plans_.find(n);
        if (it != plans_.end()) return it->second;
        Plans p;
        p.real = fftw_alloc_real(n);
        p.cplx = fftw_alloc_complex(n / 2 + 1);
        p.r2c = fftw_plan_dft_r2c_1d(static_cast<int>(n), p.real, p.cplx, FFTW_ESTIMATE);
        p.c2r = fftw_plan_dft_c2r_1d(static_cast<int>(n), p.cplx, p.real, FFTW_ESTIMATE);
        return plans_.emplace(n, p).first->second;
    }

    std::mutex mu_;
    std::unordered_map<std::size_t, Plans> plans_;
};

}  // namespace

Spectrum fft_forward(const std::vector<double>& x) {
    if (x.size() < 2) throw UsageError("fft_forward: signal length must be >= 2");
    Spectrum s;
    s.length = x.size();
    s.bins.resize(x.size() / 2 + 1);
    FftEngine::instance().forward(x.data(), x.size(), s.bins.data());
    return s;
}

std::vector<double> fft_inverse(const Spectrum& s) {
    if (s.length < 2 || s.bins.size() != s.length / 2 + 1) {
        throw UsageError("fft_inverse: inconsistent spectrum");
    }
    std::vector<double> out(s.length);
    FftEngine::instance().inverse(s.bins.data(), s.length, out.data());
    return out;
}

void AugmentConfig::validate() const {
    if (!(bin_fraction > 0.0) || bin_fraction > 1.0) {
        throw ConfigError("augment: bin_fraction must be in (0, 1]");
    }
    if (amp_sigma < 0.0) throw ConfigError("augment: amp_sigma must be >= 0");
    if (phase_max < 0.0 || phase_max > 3.14159265358979324) {
        throw ConfigError("augment: phase_max must be in [0, pi]");
    }
}

std::vector<double> perturb_channel(const std::vector<double>& x, const AugmentConfig& cfg,
                                    Prng& rng) {
    cfg.validate();
    const std::size_t ws = x.size();
    Spectrum s = fft_forward(x);

    // Selectable bins: strictly interior. DC keeps the mean; for even ws the
    // Nyquist bin must stay real to keep the inverse real.
    const std::size_t n_bins = s.bins.size();
    const bool has_nyquist = (ws % 2 == 0);
    const std::size_t pool = n_bins - 1 - (has_nyquist ? 1 : 0);
    std::size_t m = static_cast<std::size_t>(
        std::ceil(cfg.bin_fraction * static_cast<double>(ws) / 2.0));
    m = std::min(m, pool);

    std::vector<std::size_t> candidates(pool);
    for (std::size_t i = 0; i < pool; ++i) candidates[i] = i + 1;
    // Partial Fisher-Yates for a uniform m-subset.
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t j = i + rng.next_below(pool - i);
        std::swap(candidates[i], candidates[j]);
    }
    std::vector<std::size_t> selected(candidates.begin(), candidates.begin() + m);
    std::sort(selected.begin(), selected.end());

    for (std::size_t b : selected) {
        const double g = std::max(0.0, 1.0 + cfg.amp_sigma * rng.normal());
        const double theta = rng.uniform(-cfg.phase_max, cfg.phase_max);
        s.bins[b] *= std::complex<double>(g * std::cos(theta), g * std::sin(theta));
    }
    return fft_inverse(s);
}

namespace {

constexpr std::uint64_t kRolePositive = 1;
constexpr std::uint64_t kRoleNegative = 2;

void perturb_window_channels(const Tensor& windows, Tensor& out, std::size_t window,
                             const std::vector<bool>& perturb_mask, const AugmentConfig& cfg,
                             Prng& rng) {
    const std::size_t ws = windows.shape[1], C = windows.shape[2];
    std::vector<double> column(ws);
    for (std::size_t c = 0; c < C; ++c) {
        if (!perturb_mask[c]) continue;
        for (std::size_t t = 0; t < ws; ++t) column[t] = windows(window, t, c);
        std::vector<double> perturbed = perturb_channel(column, cfg, rng);
        for (std::size_t t = 0; t < ws; ++t) out(window, t, c) = perturbed[t];
    }
}

}  // namespace

TripletSet build_triplets(const WindowSet& anchors, const ChannelRelevance& relevance,
                          const AugmentConfig& cfg) {
    cfg.validate();
    const std::size_t N = anchors.count();
    const std::size_t C = anchors.channels();
    if (N == 0) throw UsageError("build_triplets: empty window set");

    std::vector<bool> relevant_mask(C, false);
    std::vector<bool> irrelevant_mask(C, false);
    if (cfg.mode == AugmentMode::channel_wise) {
        if (relevance.channels() != C) {
            throw ConfigError("build_triplets: relevance channel count " +
                              std::to_string(relevance.channels()) + " != window channels " +
                              std::to_string(C));
        }
        std::size_t n_rel = 0;
        for (std::size_t c = 0; c < C; ++c) {
            relevant_mask[c] = relevance.labels[c] == 1;
            irrelevant_mask[c] = !relevant_mask[c];
            n_rel += relevant_mask[c] ? 1 : 0;
        }
        if (n_rel == 0) {
            throw ConfigError("build_triplets: no relevant channels (upstream guarantee violated)");
        }
        if (n_rel == C) {
            throw ConfigError("build_triplets: no irrelevant channels (upstream guarantee violated)");
        }
    } else {
        relevant_mask.assign(C, true);
        irrelevant_mask.assign(C, true);
    }

    TripletSet set;
    set.anchors = anchors.windows;
    set.positives = anchors.windows;
    set.negatives = anchors.windows;

    AugmentConfig neg_cfg = cfg;
    if (cfg.mode == AugmentMode::all_channel) neg_cfg.amp_sigma = 2.0 * cfg.amp_sigma;

    const Prng base(cfg.seed);
    for (std::size_t i = 0; i < N; ++i) {
        // Positives perturb irrelevant channels, negatives the relevant ones.
        Prng pos_rng = base.substream(i, kRolePositive);
        perturb_window_channels(anchors.windows, set.positives, i, irrelevant_mask, cfg, pos_rng);
        Prng neg_rng = base.substream(i, kRoleNegative);
        perturb_window_channels(anchors.windows, set.negatives, i, relevant_mask, neg_cfg,
                                neg_rng);
    }
    return set;
}

}  // namespace calad
