#include <cmath>

#include "sere/errors.hpp"
#include "sere/irf.hpp"

// Naive serial reference path. Written straight from the definitions with
// plain double loops, no shared helpers with the parallel kernels, so the
// two implementations can check each other.

namespace sere::ref {

Matrix resonance_matrix(const Matrix& U_s, const std::vector<double>& B_s, const Matrix& U_t,
                        const std::vector<double>& B_t, const IrfParams& params) {
    if (U_s.cols() != U_t.cols()) throw ShapeError("ref::resonance_matrix: feature dims differ");
    Matrix R(U_s.rows(), U_t.rows());
    for (int i = 0; i < U_s.rows(); ++i) {
        for (int j = 0; j < U_t.rows(); ++j) {
            double num = 0.0;
            double na = 0.0;
            double nb = 0.0;
            for (int m = 0; m < U_s.cols(); ++m) {
                num += U_s(i, m) * U_t(j, m);
                na += U_s(i, m) * U_s(i, m);
                nb += U_t(j, m) * U_t(j, m);
            }
            double cosine = (na == 0.0 || nb == 0.0) ? 0.0 : num / (std::sqrt(na) * std::sqrt(nb));
            double db = B_s[static_cast<size_t>(i)] - B_t[static_cast<size_t>(j)];
            R(i, j) = std::exp(-params.delta * db * db) * cosine;
        }
    }
    return R;
}

std::vector<int> align(const Matrix& R) {
    if (R.cols() < 1) throw PreconditionError("ref::align: no target frames");
    std::vector<int> j_star(static_cast<size_t>(R.rows()), 0);
    for (int i = 0; i < R.rows(); ++i) {
        double best = R(i, 0);
        int best_j = 0;
        for (int j = 0; j < R.cols(); ++j) {
            if (R(i, j) > best) {
                best = R(i, j);
                best_j = j;
            }
        }
        j_star[static_cast<size_t>(i)] = best_j;
    }
    return j_star;
}

double irf_score(const Matrix& R, const std::vector<int>& j_star) {
    double acc = 0.0;
    for (int i = 0; i < R.rows(); ++i) acc += R(i, j_star[static_cast<size_t>(i)]);
    return acc / static_cast<double>(R.rows());
}

std::vector<double> resonance_pool(const Matrix& U_t, const std::vector<int>& j_star) {
    std::vector<double> v(static_cast<size_t>(U_t.cols()), 0.0);
    for (size_t i = 0; i < j_star.size(); ++i) {
        for (int m = 0; m < U_t.cols(); ++m) {
            v[static_cast<size_t>(m)] += U_t(j_star[i], m);
        }
    }
    for (double& x : v) x /= static_cast<double>(j_star.size());
    return v;
}

ResonanceResult resonate(const EnhancedRep& a, const EnhancedRep& b, const IrfParams& params) {
    auto burst_of = [&params](const Matrix& U) {
        std::vector<double> burst(static_cast<size_t>(U.rows()));
        for (int t = 0; t < U.rows(); ++t) {
            int base = U.cols() - 4;
            burst[static_cast<size_t>(t)] = params.alpha * std::fabs(U(t, base)) +
                                            params.beta * std::fabs(U(t, base + 1)) +
                                            params.gamma * (std::fabs(U(t, base + 2)) +
                                                            std::fabs(U(t, base + 3)));
        }
        return burst;
    };

    ResonanceResult res;
    res.R = ref::resonance_matrix(a.U, burst_of(a.U), b.U, burst_of(b.U), params);
    res.j_star = ref::align(res.R);
    res.v = ref::resonance_pool(b.U, res.j_star);
    res.irf = ref::irf_score(res.R, res.j_star);
    return res;
}

}  // namespace sere::ref
