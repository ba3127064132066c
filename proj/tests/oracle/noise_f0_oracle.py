#!/usr/bin/env python3
"""Confirms the seeded white-noise frame used in test_dsp.cpp is unvoiced.

Replicates the library RNG (splitmix64) and the YIN cumulative-mean
normalized difference, and reports the minimum d'(tau) over the search
range. The estimator returns 0 (unvoiced) whenever min d' >= 0.5.
"""

MASK = (1 << 64) - 1


class Rng:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next_u64() >> 11) * (2.0 ** -53)


def cmnd_min(frame, sr, fmin, fmax):
    tau_max = int(-(-sr // fmin))  # ceil
    tau_min = sr // fmax
    window = len(frame) - tau_max
    d = [0.0] * (tau_max + 1)
    for tau in range(1, tau_max + 1):
        acc = 0.0
        for j in range(window):
            diff = frame[j] - frame[j + tau]
            acc += diff * diff
        d[tau] = acc
    dprime = [1.0] * (tau_max + 1)
    running = 0.0
    for tau in range(1, tau_max + 1):
        running += d[tau]
        dprime[tau] = d[tau] * tau / running if running > 0 else 1.0
    return min(dprime[max(2, tau_min) : tau_max + 1])


def main():
    seed = 20240817
    rng = Rng(seed)
    frame = [2.0 * rng.uniform() - 1.0 for _ in range(1024)]
    m = cmnd_min(frame, 16000, 80, 800)
    print(f"seed {seed}: min d'(tau) over [20, 200] = {m:.6f}")
    print("unvoiced (>= 0.5):", m >= 0.5)


if __name__ == "__main__":
    main()
