#!/usr/bin/env python3
"""Independent MFCC reference for the frozen value in test_dsp.cpp.

Computes coefficient c2 (0-based DCT-II index, orthonormal) of the log-mel
spectrum of a 440 Hz sine frame, using numpy's FFT and scipy's DCT as the
independent numerical path. Pipeline definition (must stay in sync with the
documented library behavior):

  frame:   x[n] = 0.6 * sin(2*pi*440*n/16000), n = 0..399
  window:  symmetric Hann, w[n] = 0.5 - 0.5*cos(2*pi*n/(N-1))
  fft:     zero-pad to 512, power spectrum |X_k|^2 for k = 0..256
  mel:     HTK scale 2595*log10(1+f/700), 26 triangular filters with 28
           equally-spaced mel edge points spanning [0, 8000], no area norm
  log:     natural log of max(E_m, 1e-10)
  dct:     DCT-II, norm='ortho', take index 2
"""

import numpy as np
from scipy.fft import dct

SR = 16000
N = 400
NFFT = 512
NMELS = 26
FLOOR = 1e-10


def hann(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))


def mel(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def mel_inv(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mel_filterbank(nmels, nfft, sr):
    edges = mel_inv(np.linspace(mel(0.0), mel(sr / 2.0), nmels + 2))
    bins = np.arange(nfft // 2 + 1) * sr / nfft
    fb = np.zeros((nmels, nfft // 2 + 1))
    for m in range(nmels):
        lo, ctr, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (bins - lo) / (ctr - lo)
        falling = (hi - bins) / (hi - ctr)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mfcc_c2(frame):
    x = np.zeros(NFFT)
    x[:N] = frame * hann(N)
    spec = np.fft.rfft(x)
    power = np.abs(spec) ** 2
    energies = mel_filterbank(NMELS, NFFT, SR) @ power
    logmel = np.log(np.maximum(energies, FLOOR))
    return dct(logmel, type=2, norm="ortho")[2]


def main():
    n = np.arange(N)
    sine = 0.6 * np.sin(2.0 * np.pi * 440.0 * n / SR)
    print(f"mfcc_c2(440Hz sine, amp 0.6) = {mfcc_c2(sine):.12f}")

    silence = np.zeros(N)
    print(f"mfcc_c2(silence)             = {mfcc_c2(silence):.12e}")


if __name__ == "__main__":
    main()
