#include "sere/pca.hpp"

#include <cmath>
#include <vector>

#include "sere/errors.hpp"
#include "sere/rng.hpp"

namespace sere {

namespace {

/// Dominant eigenvector of a symmetric matrix by power iteration,
/// re-orthogonalized against an optional earlier component each step.
std::vector<double> dominant_vector(const Matrix& cov, const std::vector<double>* orthogonal_to,
                                    double* eigenvalue_out) {
    const int dim = cov.rows();
    Rng rng(0xC0FFEEULL);
    std::vector<double> v(static_cast<size_t>(dim));
    for (double& x : v) x = rng.normal();

    auto orthogonalize = [&](std::vector<double>& x) {
        if (!orthogonal_to) return;
        double proj = 0.0;
        for (int m = 0; m < dim; ++m) proj += x[static_cast<size_t>(m)] * (*orthogonal_to)[static_cast<size_t>(m)];
        for (int m = 0; m < dim; ++m) x[static_cast<size_t>(m)] -= proj * (*orthogonal_to)[static_cast<size_t>(m)];
    };
    auto normalize = [&](std::vector<double>& x) {
        double n2 = 0.0;
        for (double a : x) n2 += a * a;
        double n = std::sqrt(n2);
        if (n == 0.0) return false;
        for (double& a : x) a /= n;
        return true;
    };

    orthogonalize(v);
    if (!normalize(v)) {
        *eigenvalue_out = 0.0;
        return std::vector<double>(static_cast<size_t>(dim), 0.0);
    }

    std::vector<double> next(static_cast<size_t>(dim));
    double lambda = 0.0;
    for (int iter = 0; iter < 1000; ++iter) {
        for (int m = 0; m < dim; ++m) {
            double acc = 0.0;
            for (int n = 0; n < dim; ++n) acc += cov(m, n) * v[static_cast<size_t>(n)];
            next[static_cast<size_t>(m)] = acc;
        }
        orthogonalize(next);
        double n2 = 0.0;
        for (double a : next) n2 += a * a;
        lambda = std::sqrt(n2);
        if (lambda < 1e-300) {
            *eigenvalue_out = 0.0;
            return std::vector<double>(static_cast<size_t>(dim), 0.0);
        }
        double drift = 0.0;
        for (int m = 0; m < dim; ++m) {
            next[static_cast<size_t>(m)] /= lambda;
            drift = std::max(drift, std::abs(next[static_cast<size_t>(m)] - v[static_cast<size_t>(m)]));
        }
        std::swap(v, next);
        if (drift < 1e-14) break;
        // sign flips oscillate for negative eigenvalues; covariance is PSD
    }
    *eigenvalue_out = lambda;
    return v;
}

}  // namespace

Matrix pca_2d(const Matrix& samples) {
    const int n = samples.rows();
    const int dim = samples.cols();
    if (n < 3) throw PreconditionError("pca_2d: need at least 3 samples");

    std::vector<double> mean(static_cast<size_t>(dim), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int m = 0; m < dim; ++m) mean[static_cast<size_t>(m)] += samples(i, m);
    }
    for (double& x : mean) x /= n;

    Matrix centered(n, dim);
    for (int i = 0; i < n; ++i) {
        for (int m = 0; m < dim; ++m) centered(i, m) = samples(i, m) - mean[static_cast<size_t>(m)];
    }

    Matrix cov(dim, dim);
#pragma omp parallel for schedule(static)
    for (int a = 0; a < dim; ++a) {
        for (int b = a; b < dim; ++b) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += centered(i, a) * centered(i, b);
            cov(a, b) = acc / n;
            cov(b, a) = cov(a, b);
        }
    }

    double lambda1 = 0.0;
    std::vector<double> v1 = dominant_vector(cov, nullptr, &lambda1);

    // deflate and find the runner-up
    Matrix deflated = cov;
    for (int a = 0; a < dim; ++a) {
        for (int b = 0; b < dim; ++b) {
            deflated(a, b) -= lambda1 * v1[static_cast<size_t>(a)] * v1[static_cast<size_t>(b)];
        }
    }
    double lambda2 = 0.0;
    std::vector<double> v2 = dominant_vector(deflated, &v1, &lambda2);

    Matrix scores(n, 2);
    for (int i = 0; i < n; ++i) {
        double s1 = 0.0;
        double s2 = 0.0;
        for (int m = 0; m < dim; ++m) {
            s1 += centered(i, m) * v1[static_cast<size_t>(m)];
            s2 += centered(i, m) * v2[static_cast<size_t>(m)];
        }
        scores(i, 0) = s1;
        scores(i, 1) = s2;
    }
    return scores;
}

}  // namespace sere
