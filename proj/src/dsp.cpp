#include "sere/dsp.hpp"

#include <algorithm>
#include <cmath>

#include "sere/errors.hpp"

namespace sere {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// Windowed power/magnitude spectrum, bins 0..n_fft/2.
std::vector<double> magnitude_spectrum(std::span<const double> frame, int n_fft) {
    std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft));
    std::vector<double> window = hann_window(static_cast<int>(frame.size()));
    size_t n = std::min(frame.size(), static_cast<size_t>(n_fft));
    for (size_t i = 0; i < n; ++i) buf[i] = frame[i] * window[i];
    fft_inplace(buf);
    std::vector<double> mag(static_cast<size_t>(n_fft / 2 + 1));
    for (size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(buf[k]);
    return mag;
}

}  // namespace

int FrameGrid::num_frames(size_t len) const {
    if (len < static_cast<size_t>(frame_length)) return 0;
    return static_cast<int>((len - frame_length) / hop_length) + 1;
}

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

std::vector<double> hann_window(int n) {
    std::vector<double> w(static_cast<size_t>(n), 1.0);
    if (n < 2) return w;
    for (int i = 0; i < n; ++i) {
        w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (n - 1));
    }
    return w;
}

void fft_inplace(std::vector<std::complex<double>>& buf) {
    const size_t n = buf.size();
    if (n == 0 || (n & (n - 1)) != 0) throw PreconditionError("FFT size must be a power of two");

    // bit-reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(buf[i], buf[j]);
    }

    for (size_t len = 2; len <= n; len <<= 1) {
        double angle = -2.0 * kPi / static_cast<double>(len);
        std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = buf[i + k];
                std::complex<double> v = buf[i + k + len / 2] * w;
                buf[i + k] = u + v;
                buf[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

double estimate_f0(std::span<const double> frame, int sample_rate, double fmin, double fmax,
                   double voicing_threshold) {
    if (!(fmin > 0.0 && fmin < fmax && fmax < sample_rate / 2.0)) {
        throw PreconditionError("need 0 < fmin < fmax < sample_rate/2");
    }
    const int tau_max = static_cast<int>(std::ceil(sample_rate / fmin));
    const int tau_min = std::max(2, static_cast<int>(sample_rate / fmax));
    if (frame.size() < static_cast<size_t>(2.0 * sample_rate / fmin)) {
        throw PreconditionError("frame too short for fmin");
    }

    const int window = static_cast<int>(frame.size()) - tau_max;

    // difference function d(tau) over a fixed comparison window
    std::vector<double> d(static_cast<size_t>(tau_max) + 1, 0.0);
    for (int tau = 1; tau <= tau_max; ++tau) {
        double acc = 0.0;
        for (int j = 0; j < window; ++j) {
            double diff = frame[static_cast<size_t>(j)] - frame[static_cast<size_t>(j + tau)];
            acc += diff * diff;
        }
        d[static_cast<size_t>(tau)] = acc;
    }

    // cumulative-mean normalized difference d'(tau)
    std::vector<double> dp(static_cast<size_t>(tau_max) + 1, 1.0);
    double running = 0.0;
    for (int tau = 1; tau <= tau_max; ++tau) {
        running += d[static_cast<size_t>(tau)];
        dp[static_cast<size_t>(tau)] =
            running > 0.0 ? d[static_cast<size_t>(tau)] * tau / running : 1.0;
    }

    // first lag under the threshold, descended to its local minimum
    int tau_star = -1;
    for (int tau = tau_min; tau <= tau_max; ++tau) {
        if (dp[static_cast<size_t>(tau)] < voicing_threshold) {
            while (tau + 1 <= tau_max &&
                   dp[static_cast<size_t>(tau + 1)] < dp[static_cast<size_t>(tau)]) {
                ++tau;
            }
            tau_star = tau;
            break;
        }
    }
    if (tau_star < 0) return 0.0;

    double refined = static_cast<double>(tau_star);
    if (tau_star > 1 && tau_star < tau_max) {
        double prev = dp[static_cast<size_t>(tau_star - 1)];
        double cur = dp[static_cast<size_t>(tau_star)];
        double next = dp[static_cast<size_t>(tau_star + 1)];
        double denom = prev + next - 2.0 * cur;
        if (denom != 0.0) refined += 0.5 * (prev - next) / denom;
    }
    return sample_rate / refined;
}

double rms_energy(std::span<const double> frame) {
    if (frame.empty()) throw PreconditionError("rms_energy: empty frame");
    double acc = 0.0;
    for (double v : frame) acc += v * v;
    return std::sqrt(acc / static_cast<double>(frame.size()));
}

double spectral_centroid(std::span<const double> frame, int sample_rate, int n_fft) {
    if (frame.empty()) throw PreconditionError("spectral_centroid: empty frame");
    if (n_fft <= 0) n_fft = next_pow2(static_cast<int>(frame.size()));
    std::vector<double> mag = magnitude_spectrum(frame, n_fft);

    double weighted = 0.0;
    double total = 0.0;
    for (size_t k = 0; k < mag.size(); ++k) {
        double freq = static_cast<double>(k) * sample_rate / n_fft;
        weighted += freq * mag[k];
        total += mag[k];
    }
    return total > 0.0 ? weighted / total : 0.0;
}

std::vector<double> mel_log_energies(std::span<const double> frame, int sample_rate, int n_mels,
                                     int n_fft, double floor_value) {
    if (frame.empty()) throw PreconditionError("mel_log_energies: empty frame");
    if (n_mels < 4) throw PreconditionError("mel_log_energies: need n_mels >= 4");
    if (n_fft <= 0) n_fft = next_pow2(static_cast<int>(frame.size()));

    std::vector<double> mag = magnitude_spectrum(frame, n_fft);
    std::vector<double> power(mag.size());
    for (size_t k = 0; k < mag.size(); ++k) power[k] = mag[k] * mag[k];

    // n_mels + 2 edge frequencies equally spaced on the mel scale
    std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
    double mel_lo = hz_to_mel(0.0);
    double mel_hi = hz_to_mel(sample_rate / 2.0);
    for (size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                          static_cast<double>(n_mels + 1));
    }

    std::vector<double> out(static_cast<size_t>(n_mels));
    for (int m = 0; m < n_mels; ++m) {
        double lo = edges[static_cast<size_t>(m)];
        double ctr = edges[static_cast<size_t>(m) + 1];
        double hi = edges[static_cast<size_t>(m) + 2];
        double energy = 0.0;
        for (size_t k = 0; k < power.size(); ++k) {
            double freq = static_cast<double>(k) * sample_rate / n_fft;
            double rising = (freq - lo) / (ctr - lo);
            double falling = (hi - freq) / (hi - ctr);
            double weight = std::max(0.0, std::min(rising, falling));
            energy += weight * power[k];
        }
        out[static_cast<size_t>(m)] = std::log(std::max(energy, floor_value));
    }
    return out;
}

double dct_ortho_coeff(std::span<const double> values, int k) {
    const int n = static_cast<int>(values.size());
    if (n == 0) throw PreconditionError("dct_ortho_coeff: empty input");
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += values[static_cast<size_t>(i)] * std::cos(kPi * k * (i + 0.5) / n);
    }
    double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    return scale * acc;
}

double mfcc_coeff2(std::span<const double> frame, int sample_rate, int n_mels, int n_fft,
                   double floor_value) {
    std::vector<double> logmel = mel_log_energies(frame, sample_rate, n_mels, n_fft, floor_value);
    return dct_ortho_coeff(logmel, 2);
}

StaticFeatures extract_static(const AudioBuffer& audio, const FrameGrid& grid,
                              const FeatureConfig& cfg) {
    if (grid.hop_length < 1 || grid.frame_length < grid.hop_length) {
        throw PreconditionError("need frame_length >= hop_length >= 1");
    }
    const int num_frames = grid.num_frames(audio.samples.size());
    if (num_frames < 1) throw PreconditionError("audio shorter than one frame");
    if (cfg.n_mels < 4) throw PreconditionError("need n_mels >= 4");
    if (!(cfg.f0_min > 0.0 && cfg.f0_min < cfg.f0_max && cfg.f0_max < audio.sample_rate / 2.0)) {
        throw PreconditionError("need 0 < fmin < fmax < sample_rate/2");
    }

    const int n_fft = cfg.n_fft > 0 ? cfg.n_fft : next_pow2(grid.frame_length);

    // The F0 search needs a window of at least 2*sr/fmin samples; extend
    // the pitch frame past the grid frame when necessary (it stays anchored
    // at the frame start and is clipped at the end of the signal).
    const int f0_window =
        std::max(grid.frame_length, static_cast<int>(std::ceil(2.0 * audio.sample_rate / cfg.f0_min)));

    StaticFeatures out(num_frames, 4);

#pragma omp parallel for schedule(static)
    for (int t = 0; t < num_frames; ++t) {
        const size_t start = static_cast<size_t>(t) * grid.hop_length;
        std::span<const double> frame(audio.samples.data() + start,
                                      static_cast<size_t>(grid.frame_length));

        size_t f0_len = std::min(static_cast<size_t>(f0_window), audio.samples.size() - start);
        double f0 = 0.0;
        if (f0_len >= static_cast<size_t>(2.0 * audio.sample_rate / cfg.f0_min)) {
            std::span<const double> pitch_frame(audio.samples.data() + start, f0_len);
            f0 = estimate_f0(pitch_frame, audio.sample_rate, cfg.f0_min, cfg.f0_max,
                             cfg.voicing_threshold);
        }

        out(t, 0) = f0;
        out(t, 1) = rms_energy(frame);
        out(t, 2) = mfcc_coeff2(frame, audio.sample_rate, cfg.n_mels, n_fft, cfg.mel_floor);
        out(t, 3) = spectral_centroid(frame, audio.sample_rate, n_fft);
    }
    return out;
}

}  // namespace sere
