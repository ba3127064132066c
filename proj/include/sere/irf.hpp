#pragma once

#include <vector>

#include "sere/idfe.hpp"
#include "sere/matrix.hpp"

namespace sere {

/// Burst-intensity weights and the synchrony temperature.
struct IrfParams {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
    double delta = 1.0;  // > 0
};

/// Full output of one resonance computation between a source (rows) and a
/// target (columns) utterance.
struct ResonanceResult {
    Matrix R;                    // T_s x T_t, entries in [-1, 1]
    std::vector<int> j_star;     // per source frame, argmax column (ties -> lowest)
    std::vector<double> v;       // mean of target U rows at j_star positions
    double irf = 0.0;            // mean of R(i, j_star[i])
};

/// Cosine of two vectors; defined as 0 when either norm is 0.
double safe_cosine(std::span<const double> a, std::span<const double> b);

/// B(t) = alpha*|r1| + beta*|r2| + gamma*(|r3| + |r4|).
std::vector<double> burst_intensity(const Matrix& r, const IrfParams& params);

/// R(i,j) = exp(-delta*(B_s(i) - B_t(j))^2) * cos(U_s(i), U_t(j)).
/// Rows are independent and computed in parallel; each entry is produced
/// by exactly one iteration, so the result does not depend on the
/// schedule. Throws ShapeError on dimension mismatch.
Matrix resonance_matrix(const Matrix& U_s, const std::vector<double>& B_s, const Matrix& U_t,
                        const std::vector<double>& B_t, const IrfParams& params);

/// Row-wise argmax with lowest-index tie-breaking.
std::vector<int> align(const Matrix& R);

/// v = mean over source frames of U_t(j_star[i]), accumulated in index
/// order. Throws PreconditionError on an out-of-range index.
std::vector<double> resonance_pool(const Matrix& U_t, const std::vector<int>& j_star);

/// Mean of the row-maximal resonance values, accumulated in index order.
double irf_score(const Matrix& R, const std::vector<int>& j_star);

/// Composes burst_intensity -> resonance_matrix -> align -> resonance_pool
/// -> irf_score. Burst intensities are recomputed from the last four
/// columns of U.
ResonanceResult resonate(const EnhancedRep& a, const EnhancedRep& b, const IrfParams& params);

/// Computes and stores the burst vector of a fused representation.
void fill_burst(EnhancedRep& rep, const IrfParams& params);

namespace ref {

/// Serial double-loop reference implementations, kept independent of the
/// parallel kernels above; used by the test suites and the benchmark.
Matrix resonance_matrix(const Matrix& U_s, const std::vector<double>& B_s, const Matrix& U_t,
                        const std::vector<double>& B_t, const IrfParams& params);
std::vector<int> align(const Matrix& R);
double irf_score(const Matrix& R, const std::vector<int>& j_star);
std::vector<double> resonance_pool(const Matrix& U_t, const std::vector<int>& j_star);
ResonanceResult resonate(const EnhancedRep& a, const EnhancedRep& b, const IrfParams& params);

}  // namespace ref

}  // namespace sere
