#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "calad/dataio.hpp"
#include "calad/prng.hpp"
#include "calad/relevance.hpp"
#include "calad/tensor.hpp"

namespace calad {

// Conjugate-symmetric half spectrum of a length-ws real signal: ws/2+1 bins,
// bin 0 (DC) real.
struct Spectrum {
    std::size_t length = 0;
    std::vector<std::complex<double>> bins;
};

Spectrum fft_forward(const std::vector<double>& x);
std::vector<double> fft_inverse(const Spectrum& s);

enum class AugmentMode { channel_wise, all_channel };

struct AugmentConfig {
    double bin_fraction = 0.2;  // fraction of the ws/2 positive-frequency bins
    double amp_sigma = 0.5;
    double phase_max = 3.141592653589793;
    AugmentMode mode = AugmentMode::channel_wise;
    std::uint64_t seed = 0;

    void validate() const;
};

// Spectral perturbation of one channel: scales and rotates a seeded subset
// of interior bins (DC and Nyquist untouched), then inverts. Output is real
// and keeps the input mean.
std::vector<double> perturb_channel(const std::vector<double>& x, const AugmentConfig& cfg,
                                    Prng& rng);

// Anchor windows with their channel-aware positive/negative views.
// In channel_wise mode positives perturb exactly the irrelevant channels and
// negatives exactly the relevant ones; untouched channels are bit-exact
// copies of the anchor.
struct TripletSet {
    Tensor anchors;    // [N, ws, C]
    Tensor positives;  // [N, ws, C]
    Tensor negatives;  // [N, ws, C]

    std::size_t count() const { return anchors.ndim() == 3 ? anchors.shape[0] : 0; }
};

TripletSet build_triplets(const WindowSet& anchors, const ChannelRelevance& relevance,
                          const AugmentConfig& cfg);

}  // namespace calad
