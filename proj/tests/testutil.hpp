#pragma once

#include <cmath>
#include <vector>

#include "sere/matrix.hpp"
#include "sere/rng.hpp"

namespace testutil {

inline std::vector<double> sine(double freq, double amp, int sample_rate, int n) {
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        out[static_cast<size_t>(i)] = amp * std::sin(2.0 * 3.14159265358979323846 * freq * i / sample_rate);
    }
    return out;
}

inline sere::Matrix random_matrix(sere::Rng& rng, int rows, int cols, double scale = 1.0) {
    sere::Matrix m(rows, cols);
    for (double& v : m.data()) v = scale * rng.normal();
    return m;
}

inline std::vector<double> random_vector(sere::Rng& rng, int n, double scale = 1.0) {
    std::vector<double> v(static_cast<size_t>(n));
    for (double& x : v) x = scale * rng.normal();
    return v;
}

}  // namespace testutil
