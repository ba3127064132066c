// Timing comparison of the parallel kernels against the serial reference
// path. Not part of the test suite; build and run directly:
//   ./build/bench_kernels [T] [d] [pairs]

#include <cstdio>
#include <cstdlib>
#include <omp.h>
#include <vector>

#include "sere/irf.hpp"
#include "sere/rng.hpp"

using sere::IrfParams;
using sere::Matrix;

namespace {

Matrix random_matrix(sere::Rng& rng, int rows, int cols) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

std::vector<double> random_burst(sere::Rng& rng, int n) {
    std::vector<double> b(static_cast<size_t>(n));
    for (double& v : b) v = std::abs(rng.normal());
    return b;
}

}  // namespace

int main(int argc, char** argv) {
    int frames = argc > 1 ? std::atoi(argv[1]) : 512;
    int dim = argc > 2 ? std::atoi(argv[2]) : 68;
    int pairs = argc > 3 ? std::atoi(argv[3]) : 20;

    sere::Rng rng(7);
    IrfParams params;

    std::vector<Matrix> us;
    std::vector<std::vector<double>> bs;
    for (int p = 0; p < 2 * pairs; ++p) {
        us.push_back(random_matrix(rng, frames, dim));
        bs.push_back(random_burst(rng, frames));
    }

    std::printf("resonance_matrix %dx%d, dim %d, %d pairs, %d threads\n", frames, frames, dim,
                pairs, omp_get_max_threads());

    double t0 = omp_get_wtime();
    double sink_serial = 0.0;
    for (int p = 0; p < pairs; ++p) {
        Matrix R = sere::ref::resonance_matrix(us[2 * p], bs[2 * p], us[2 * p + 1], bs[2 * p + 1],
                                               params);
        sink_serial += R(0, 0);
    }
    double t_serial = omp_get_wtime() - t0;

    t0 = omp_get_wtime();
    double sink_parallel = 0.0;
    for (int p = 0; p < pairs; ++p) {
        Matrix R = sere::resonance_matrix(us[2 * p], bs[2 * p], us[2 * p + 1], bs[2 * p + 1],
                                          params);
        sink_parallel += R(0, 0);
    }
    double t_parallel = omp_get_wtime() - t0;

    std::printf("serial reference: %8.3f ms/pair\n", 1e3 * t_serial / pairs);
    std::printf("openmp kernel:    %8.3f ms/pair\n", 1e3 * t_parallel / pairs);
    std::printf("speedup:          %8.2fx\n", t_serial / t_parallel);
    if (sink_serial != sink_parallel) std::printf("note: first entries differ\n");
    return 0;
}
