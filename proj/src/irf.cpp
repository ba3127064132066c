#include "sere/irf.hpp"

#include <cmath>

#include "sere/errors.hpp"

namespace sere {

double safe_cosine(std::span<const double> a, std::span<const double> b) {
    double aa = dot(a, a);
    double bb = dot(b, b);
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return dot(a, b) / (std::sqrt(aa) * std::sqrt(bb));
}

std::vector<double> burst_intensity(const Matrix& r, const IrfParams& params) {
    if (r.cols() != 4) throw ShapeError("burst_intensity: expected 4 dynamic features");
    std::vector<double> burst(static_cast<size_t>(r.rows()));
    for (int t = 0; t < r.rows(); ++t) {
        burst[static_cast<size_t>(t)] = params.alpha * std::abs(r(t, 0)) +
                                        params.beta * std::abs(r(t, 1)) +
                                        params.gamma * (std::abs(r(t, 2)) + std::abs(r(t, 3)));
    }
    return burst;
}

Matrix resonance_matrix(const Matrix& U_s, const std::vector<double>& B_s, const Matrix& U_t,
                        const std::vector<double>& B_t, const IrfParams& params) {
    if (U_s.cols() != U_t.cols()) throw ShapeError("resonance_matrix: feature dims differ");
    if (static_cast<int>(B_s.size()) != U_s.rows() || static_cast<int>(B_t.size()) != U_t.rows()) {
        throw ShapeError("resonance_matrix: burst length != frame count");
    }
    if (!(params.delta > 0.0)) throw PreconditionError("resonance_matrix: delta must be > 0");

    Matrix R(U_s.rows(), U_t.rows());

#pragma omp parallel for schedule(static)
    for (int i = 0; i < U_s.rows(); ++i) {
        for (int j = 0; j < U_t.rows(); ++j) {
            double db = B_s[static_cast<size_t>(i)] - B_t[static_cast<size_t>(j)];
            R(i, j) = std::exp(-params.delta * db * db) * safe_cosine(U_s.row(i), U_t.row(j));
        }
    }
    return R;
}

std::vector<int> align(const Matrix& R) {
    if (R.cols() < 1) throw PreconditionError("align: no target frames");
    std::vector<int> j_star(static_cast<size_t>(R.rows()));
    for (int i = 0; i < R.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < R.cols(); ++j) {
            if (R(i, j) > R(i, best)) best = j;
        }
        j_star[static_cast<size_t>(i)] = best;
    }
    return j_star;
}

std::vector<double> resonance_pool(const Matrix& U_t, const std::vector<int>& j_star) {
    if (j_star.empty()) throw PreconditionError("resonance_pool: no alignment indices");
    std::vector<double> v(static_cast<size_t>(U_t.cols()), 0.0);
    for (int idx : j_star) {
        if (idx < 0 || idx >= U_t.rows()) throw PreconditionError("resonance_pool: index out of range");
        for (int m = 0; m < U_t.cols(); ++m) v[static_cast<size_t>(m)] += U_t(idx, m);
    }
    for (double& x : v) x /= static_cast<double>(j_star.size());
    return v;
}

double irf_score(const Matrix& R, const std::vector<int>& j_star) {
    if (static_cast<int>(j_star.size()) != R.rows() || R.rows() == 0) {
        throw ShapeError("irf_score: alignment length != row count");
    }
    double acc = 0.0;
    for (int i = 0; i < R.rows(); ++i) acc += R(i, j_star[static_cast<size_t>(i)]);
    return acc / static_cast<double>(R.rows());
}

namespace {

Matrix dyn_part(const Matrix& U) {
    const int d4 = 4;
    Matrix r(U.rows(), d4);
    for (int t = 0; t < U.rows(); ++t) {
        for (int k = 0; k < d4; ++k) r(t, k) = U(t, U.cols() - d4 + k);
    }
    return r;
}

}  // namespace

void fill_burst(EnhancedRep& rep, const IrfParams& params) {
    rep.burst = burst_intensity(dyn_part(rep.U), params);
}

ResonanceResult resonate(const EnhancedRep& a, const EnhancedRep& b, const IrfParams& params) {
    if (a.U.cols() != b.U.cols()) throw ShapeError("resonate: feature dims differ");
    if (a.U.cols() < 4) throw ShapeError("resonate: representation narrower than 4");

    ResonanceResult res;
    std::vector<double> B_a = burst_intensity(dyn_part(a.U), params);
    std::vector<double> B_b = burst_intensity(dyn_part(b.U), params);
    res.R = resonance_matrix(a.U, B_a, b.U, B_b, params);
    res.j_star = align(res.R);
    res.v = resonance_pool(b.U, res.j_star);
    res.irf = irf_score(res.R, res.j_star);
    return res;
}

}  // namespace sere
