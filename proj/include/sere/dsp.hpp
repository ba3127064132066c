#pragma once

#include <complex>
#include <span>
#include <vector>

#include "sere/matrix.hpp"
#include "sere/wav.hpp"

namespace sere {

/// Fixed-hop framing. T = max(0, floor((len - frame_length)/hop_length) + 1).
struct FrameGrid {
    int frame_length = 400;  // 25 ms at 16 kHz
    int hop_length = 160;    // 10 ms at 16 kHz

    int num_frames(size_t len) const;
};

/// Settings for the four per-frame extractors.
struct FeatureConfig {
    double f0_min = 80.0;
    double f0_max = 400.0;
    double voicing_threshold = 0.5;  // accept when CMND < threshold
    int n_mels = 26;
    int n_fft = 0;  // 0 = next power of two >= frame_length
    double mel_floor = 1e-10;
};

/// Per-frame static features, one row per frame:
/// columns [F0, RMS energy, MFCC c2, spectral centroid].
using StaticFeatures = Matrix;

/// In-place radix-2 FFT. Size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& buf);

/// Symmetric Hann window of the given length.
std::vector<double> hann_window(int n);

int next_pow2(int n);

/// YIN-style F0 estimate via the cumulative-mean normalized difference,
/// with parabolic refinement of the selected lag. Returns 0 when no lag
/// in [sr/fmax, sr/fmin] clears the voicing threshold (unvoiced).
/// Requires frame.size() >= 2*sample_rate/fmin.
double estimate_f0(std::span<const double> frame, int sample_rate, double fmin, double fmax,
                   double voicing_threshold = 0.5);

/// sqrt(mean(x^2)). Requires a non-empty frame.
double rms_energy(std::span<const double> frame);

/// Magnitude-weighted mean of FFT bin frequencies (Hann-windowed,
/// zero-padded to n_fft). Returns 0 for an all-zero spectrum.
double spectral_centroid(std::span<const double> frame, int sample_rate, int n_fft = 0);

/// Log mel-band energies of a frame: Hann window, power spectrum,
/// triangular HTK-mel filterbank over [0, sr/2], natural log of
/// max(energy, floor).
std::vector<double> mel_log_energies(std::span<const double> frame, int sample_rate, int n_mels,
                                     int n_fft, double floor_value);

/// Orthonormal DCT-II coefficient k of a value vector.
double dct_ortho_coeff(std::span<const double> values, int k);

/// MFCC coefficient at index 2 (0-based, counting c0).
double mfcc_coeff2(std::span<const double> frame, int sample_rate, int n_mels = 26, int n_fft = 0,
                   double floor_value = 1e-10);

/// Runs all four extractors over every frame of the grid (frames are
/// independent; computed in parallel). Row t holds [F0, E, M, C].
/// Throws PreconditionError when the audio is shorter than one frame.
StaticFeatures extract_static(const AudioBuffer& audio, const FrameGrid& grid,
                              const FeatureConfig& cfg = {});

}  // namespace sere
