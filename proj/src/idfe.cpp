#include "sere/idfe.hpp"

#include <cmath>

#include "sere/errors.hpp"

namespace sere {

Matrix frame_deltas(const Matrix& features) {
    Matrix out(features.rows(), features.cols(), 0.0);
    for (int t = 1; t < features.rows(); ++t) {
        for (int i = 0; i < features.cols(); ++i) {
            out(t, i) = features(t, i) - features(t - 1, i);
        }
    }
    return out;
}

Matrix normalize_deltas(const Matrix& deltas, double epsilon) {
    if (epsilon <= 0.0) throw PreconditionError("normalize_deltas: epsilon must be > 0");
    Matrix out(deltas.rows(), deltas.cols());
    const int rows = deltas.rows();
    for (int i = 0; i < deltas.cols(); ++i) {
        double var = 0.0;
        for (int t = 0; t < rows; ++t) var += std::abs(deltas(t, i));
        if (rows > 0) var /= rows;
        for (int t = 0; t < rows; ++t) out(t, i) = deltas(t, i) / (var + epsilon);
    }
    return out;
}

std::vector<double> context_gate(const Matrix& H, const IdfeParams& params) {
    if (static_cast<int>(params.w.size()) != H.cols()) {
        throw ShapeError("context_gate: gate weight length != embedding dim");
    }
    std::vector<double> gate(static_cast<size_t>(H.rows()));
    for (int t = 0; t < H.rows(); ++t) {
        double a = params.b + dot(H.row(t), params.w);
        gate[static_cast<size_t>(t)] = 1.0 / (1.0 + std::exp(-a));
    }
    return gate;
}

EnhancedRep fuse(const Matrix& H, const Matrix& r) {
    if (H.rows() != r.rows()) throw ShapeError("fuse: frame counts differ");
    EnhancedRep rep;
    rep.U = Matrix(H.rows(), H.cols() + r.cols());
    for (int t = 0; t < H.rows(); ++t) {
        for (int m = 0; m < H.cols(); ++m) rep.U(t, m) = H(t, m);
        for (int k = 0; k < r.cols(); ++k) rep.U(t, H.cols() + k) = r(t, k);
    }
    return rep;
}

Matrix resample_rows(const Matrix& m, int target_rows) {
    if (m.rows() == 0 || target_rows <= 0) {
        throw PreconditionError("resample_rows: empty input or target");
    }
    if (m.rows() == target_rows) return m;

    Matrix out(target_rows, m.cols());
    for (int t = 0; t < target_rows; ++t) {
        double pos = target_rows == 1
                         ? 0.0
                         : static_cast<double>(t) * (m.rows() - 1) / (target_rows - 1);
        int lo = static_cast<int>(pos);
        int hi = std::min(lo + 1, m.rows() - 1);
        double frac = pos - lo;
        for (int c = 0; c < m.cols(); ++c) {
            out(t, c) = (1.0 - frac) * m(lo, c) + frac * m(hi, c);
        }
    }
    return out;
}

std::pair<DynamicFeatures, EnhancedRep> run_idfe(const Matrix& features, const Matrix& H,
                                                 const IdfeParams& params, double epsilon) {
    DynamicFeatures dyn;
    Matrix aligned = resample_rows(features, H.rows());
    dyn.deltas = frame_deltas(aligned);
    dyn.normalized = normalize_deltas(dyn.deltas, epsilon);
    dyn.gate = context_gate(H, params);
    dyn.r = Matrix(H.rows(), dyn.normalized.cols());
    for (int t = 0; t < H.rows(); ++t) {
        for (int k = 0; k < dyn.normalized.cols(); ++k) {
            dyn.r(t, k) = dyn.gate[static_cast<size_t>(t)] * dyn.normalized(t, k);
        }
    }
    EnhancedRep rep = fuse(H, dyn.r);
    return {std::move(dyn), std::move(rep)};
}

}  // namespace sere
