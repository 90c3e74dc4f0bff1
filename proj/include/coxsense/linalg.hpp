#pragma once

#include "coxsense/core.hpp"

#include <Eigen/Eigenvalues>

namespace coxsense {

/// Default eigenvalue floor used when taking square roots of kernel matrices.
inline double default_jitter(const Matrix& K) { return 1e-10 * std::max(K.trace(), 1e-300); }

struct ClippedEigen {
    Vector values;   // clipped to [jitter, inf)
    Matrix vectors;
};

inline ClippedEigen clipped_eigen(const Matrix& K, double jitter) {
    if (K.rows() != K.cols()) throw ParameterError("clipped_eigen: matrix must be square");
    const Matrix sym = 0.5 * (K + K.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    return {es.eigenvalues().cwiseMax(jitter), es.eigenvalues().size() ? es.eigenvectors() : Matrix()};
}

/// K with eigenvalues clipped to [jitter, inf).
inline Matrix clip_psd(const Matrix& K, double jitter) {
    const auto e = clipped_eigen(K, jitter);
    Matrix out = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    return 0.5 * (out + out.transpose());
}

/// Symmetric PSD square root S with S*S equal to K after eigenvalue clipping.
inline Matrix psd_sqrt(const Matrix& K, double jitter) {
    const auto e = clipped_eigen(K, jitter);
    Matrix S = e.vectors * e.values.cwiseSqrt().asDiagonal() * e.vectors.transpose();
    return 0.5 * (S + S.transpose());
}

inline Matrix psd_sqrt(const Matrix& K) { return psd_sqrt(K, default_jitter(K)); }

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
template <class Apply>
double power_iteration(Apply&& apply, Eigen::Index n, int iterations, std::uint64_t seed = 7) {
    Rng rng(seed);
    Vector v = standard_normal(n, rng);
    v.normalize();
    double lambda = 0.0;
    for (int k = 0; k < iterations; ++k) {
        Vector w = apply(v);
        const double nrm = w.norm();
        if (nrm == 0.0) return 0.0;
        lambda = v.dot(w);
        v = w / nrm;
    }
    // Rayleigh quotient of the final iterate.
    return std::max(lambda, v.dot(apply(v)));
}

inline double power_iteration(const Matrix& A, int iterations, std::uint64_t seed = 7) {
    return power_iteration([&](const Vector& v) -> Vector { return A * v; }, A.rows(), iterations, seed);
}

struct QuadratureRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
inline QuadratureRule gauss_legendre(int n) {
    if (n < 1) throw ParameterError("gauss_legendre: order must be >= 1");
    QuadratureRule q;
    q.nodes.resize(n);
    q.weights.resize(n);
    const double pi = 3.14159265358979323846;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double pn = (n == 1) ? x : p1;
            const double pn1 = (n == 1) ? 1.0 : p0;
            dp = n * (x * pn - pn1) / (x * x - 1.0);
            const double dx = pn / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        q.nodes[i] = -x;
        q.nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        q.weights[i] = w;
        q.weights[n - 1 - i] = w;
    }
    return q;
}

/// Type-7 (linear interpolation) sample quantile.
inline double quantile7(std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace coxsense
