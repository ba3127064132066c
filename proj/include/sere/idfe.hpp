#pragma once

#include <vector>

#include "sere/matrix.hpp"

namespace sere {

/// Learnable context-gate parameters: gate(t) = sigmoid(w . H(t) + b).
struct IdfeParams {
    std::vector<double> w;  // length d
    double b = 0.0;

    static IdfeParams zeros(int d) { return {std::vector<double>(static_cast<size_t>(d), 0.0), 0.0}; }
};

/// Intermediate products of the dynamic-feature pipeline.
struct DynamicFeatures {
    Matrix deltas;      // T x 4, frame-to-frame differences
    Matrix normalized;  // T x 4, deltas / (mean |delta| + eps) per column
    std::vector<double> gate;  // T, in (0,1)
    Matrix r;           // T x 4, gate(t) * normalized(t, .)
};

/// Fused representation U = [H ; r], T x (d+4). burst is filled later by
/// the resonance stage.
struct EnhancedRep {
    Matrix U;
    std::vector<double> burst;

    int frames() const { return U.rows(); }
    int dim() const { return U.cols(); }
};

/// Adjacent-frame differences; row 0 is zero so T is preserved.
Matrix frame_deltas(const Matrix& features);

/// Divides each column by its mean absolute value plus epsilon.
Matrix normalize_deltas(const Matrix& deltas, double epsilon = 1e-3);

/// Per-frame sigmoid gate from the embedding sequence.
std::vector<double> context_gate(const Matrix& H, const IdfeParams& params);

/// Row-wise concatenation [H ; r]. Throws ShapeError on frame-count mismatch.
EnhancedRep fuse(const Matrix& H, const Matrix& r);

/// Linear time-resampling of each column to target_rows (endpoints aligned).
Matrix resample_rows(const Matrix& m, int target_rows);

/// Full pipeline: resample static features to H's frame count, compute
/// normalized deltas, gate them by semantic context, fuse with H.
std::pair<DynamicFeatures, EnhancedRep> run_idfe(const Matrix& features, const Matrix& H,
                                                 const IdfeParams& params, double epsilon = 1e-3);

}  // namespace sere
