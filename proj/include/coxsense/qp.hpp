#pragma once

// Dual active-set quadratic programming.
//
// The core problem is the Euclidean projection onto a polytope {y : By ≥ b}. Its dual,
//     min ½‖Bᵀμ‖² − (b − Bθ)ᵀμ   s.t. μ ≥ 0,
// is solved by a Lawson-Hanson style active-set iteration. Subproblems on the free set P are
// solved through a QR factorization of B_Pᵀ rather than the normal matrix B_P B_Pᵀ, so the
// attainable accuracy follows cond(B) instead of cond(B)². A general QP
//     min ½yᵀHy + gᵀy  s.t. Ay ≥ b,  H positive definite,
// reduces to the same projection after the change of variables u = Lᵀy with H = LLᵀ.

#include "coxsense/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace coxsense {

struct ProjectionResult {
    Vector y;
    Vector mu;                  // multipliers of By ≥ b
    std::vector<int> free_set;  // constraints with positive multiplier
    int iterations = 0;
};

namespace detail {

// On free set P: the point y = θ + B_Pᵀz with B_P y = b_P, and its multipliers z.
struct FreeSolve {
    Vector y;
    Vector z;
};

inline FreeSolve solve_free(const Matrix& B, const Vector& b, const Vector& theta, const std::vector<int>& P) {
    const auto k = static_cast<Eigen::Index>(P.size());
    if (k == 0) return {theta, Vector()};
    Matrix BpT(B.cols(), k);
    Vector r(k);
    for (Eigen::Index a = 0; a < k; ++a) {
        BpT.col(a) = B.row(P[static_cast<std::size_t>(a)]).transpose();
        r(a) = b(P[static_cast<std::size_t>(a)]) - B.row(P[static_cast<std::size_t>(a)]).dot(theta);
    }
    Eigen::HouseholderQR<Matrix> qr(BpT);
    const Matrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    const double rmax = R.diagonal().cwiseAbs().maxCoeff();
    if (k <= B.cols() && R.diagonal().cwiseAbs().minCoeff() > 1e-14 * rmax) {
        const Vector s = R.transpose().triangularView<Eigen::Lower>().solve(r);
        Vector ys = Vector::Zero(B.cols());
        ys.head(k) = s;
        const Vector y = theta + qr.householderQ() * ys;
        const Vector z = R.triangularView<Eigen::Upper>().solve(s);
        return {y, z};
    }
    // Rank-deficient active rows: minimum-norm multipliers of the normal equations.
    const Matrix Q = BpT.transpose() * BpT;
    const Vector z = Q.completeOrthogonalDecomposition().solve(r);
    return {theta + BpT * z, z};
}

}  // namespace detail

/// argmin_{By ≥ b} ‖y − θ‖². `warm` is an optional guess of the free set.
inline ProjectionResult project_polytope(const Matrix& B, const Vector& b, const Vector& theta,
                                         const std::vector<int>& warm = {}, double tol = 1e-10) {
    const Eigen::Index n = B.rows();
    if (b.size() != n || B.cols() != theta.size()) throw ParameterError("projection: dimension mismatch");
    ProjectionResult res;
    res.mu = Vector::Zero(n);
    res.y = theta;
    const Vector slack0 = B * theta - b;
    if ((slack0.array() >= 0).all()) return res;

    const double scale = std::max({1.0, b.cwiseAbs().maxCoeff(), (B * theta).cwiseAbs().maxCoeff()});
    const double gtol = tol * scale;
    const int max_iter = 10 * static_cast<int>(n) + 100;
    std::vector<char> in_p(static_cast<std::size_t>(n), 0);
    std::vector<int> P;

    for (int i : warm)
        if (i >= 0 && i < n && !in_p[static_cast<std::size_t>(i)]) {
            in_p[static_cast<std::size_t>(i)] = 1;
            P.push_back(i);
        }
    while (!P.empty()) {
        auto fs = detail::solve_free(B, b, theta, P);
        std::vector<int> keep;
        for (std::size_t a = 0; a < P.size(); ++a) {
            if (fs.z(static_cast<Eigen::Index>(a)) > 0) keep.push_back(P[a]);
            else in_p[static_cast<std::size_t>(P[a])] = 0;
        }
        if (keep.size() == P.size()) {
            for (std::size_t a = 0; a < P.size(); ++a) res.mu(P[a]) = fs.z(static_cast<Eigen::Index>(a));
            res.y = fs.y;
            break;
        }
        P = std::move(keep);
    }

    int iter = 0;
    while (true) {
        const Vector g = B * res.y - b;   // dual gradient = primal slack
        Eigen::Index j = -1;
        double worst = -gtol;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!in_p[static_cast<std::size_t>(i)] && g(i) < worst) {
                worst = g(i);
                j = i;
            }
        }
        if (j < 0) break;
        if (++iter > max_iter)
            throw NumericalError("projection: iteration cap " + std::to_string(max_iter) + " reached (constraints=" +
                                 std::to_string(n) + ", free=" + std::to_string(P.size()) +
                                 ", worst violation=" + sci(worst) + ")");
        in_p[static_cast<std::size_t>(j)] = 1;
        P.push_back(static_cast<int>(j));

        bool first = true;
        bool stalled = false;
        while (true) {
            auto fs = detail::solve_free(B, b, theta, P);
            if (first && !(fs.z(fs.z.size() - 1) > 0)) {
                // The entering constraint cannot carry a positive multiplier: its violation is
                // at the round-off level of the free-set solve.
                P.pop_back();
                in_p[static_cast<std::size_t>(j)] = 0;
                stalled = true;
                break;
            }
            first = false;
            bool positive = true;
            for (Eigen::Index a = 0; a < fs.z.size(); ++a) positive = positive && fs.z(a) > 0;
            if (positive) {
                for (std::size_t a = 0; a < P.size(); ++a) res.mu(P[a]) = fs.z(static_cast<Eigen::Index>(a));
                res.y = fs.y;
                break;
            }
            double alpha = std::numeric_limits<double>::infinity();
            std::size_t blocking = 0;
            for (std::size_t a = 0; a < P.size(); ++a) {
                const double za = fs.z(static_cast<Eigen::Index>(a));
                if (za <= 0) {
                    const double ma = res.mu(P[a]);
                    const double ratio = ma / (ma - za);
                    if (ratio < alpha) {
                        alpha = ratio;
                        blocking = a;
                    }
                }
            }
            for (std::size_t a = 0; a < P.size(); ++a)
                res.mu(P[a]) += alpha * (fs.z(static_cast<Eigen::Index>(a)) - res.mu(P[a]));
            res.mu(P[blocking]) = 0;
            const double mu_max = res.mu.cwiseAbs().maxCoeff();
            std::vector<int> keep;
            for (int i : P) {
                if (res.mu(i) > 1e-15 * mu_max) keep.push_back(i);
                else {
                    res.mu(i) = 0;
                    in_p[static_cast<std::size_t>(i)] = 0;
                }
            }
            P = std::move(keep);
            Vector y = theta;
            for (int i : P) y.noalias() += res.mu(i) * B.row(i).transpose();
            res.y = y;
            if (++iter > max_iter)
                throw NumericalError("projection: iteration cap reached while releasing constraints (free=" +
                                     std::to_string(P.size()) + ")");
        }
        if (stalled) break;
    }
    res.free_set = P;
    std::sort(res.free_set.begin(), res.free_set.end());
    res.iterations = iter;
    return res;
}

/// Euclidean projection onto {y : Gy ≥ l·1}.
class PolytopeProjector {
public:
    PolytopeProjector() = default;
    PolytopeProjector(Matrix G, double l) : G_(std::move(G)), l_(l) {}

    [[nodiscard]] const Matrix& G() const { return G_; }
    [[nodiscard]] double lower() const { return l_; }

    [[nodiscard]] bool feasible(const Vector& theta, double tol = 0.0) const {
        return ((G_ * theta).array() >= l_ - tol).all();
    }

    /// Projection onto {Gy ≥ l + shift}. The free set of the last solve is reused as a warm
    /// start, so a projector is not safe for concurrent use.
    Vector project(const Vector& theta, double shift = 0.0) {
        auto res = project_polytope(G_, Vector::Constant(G_.rows(), l_ + shift), theta, warm_);
        if (!res.free_set.empty()) warm_ = res.free_set;
        return res.y;
    }

private:
    Matrix G_;
    double l_ = 0.0;
    std::vector<int> warm_;
};

/// pr(θ) = argmin_{Gy ≥ l} ‖θ − y‖².
inline Vector prox_project(const Matrix& G, double l, const Vector& theta) {
    return project_polytope(G, Vector::Constant(G.rows(), l), theta).y;
}

struct InequalityQp {
    Vector y;
    Vector multipliers;
    std::vector<int> active;
};

/// min ½yᵀHy + gᵀy subject to Ay ≥ b, H symmetric positive definite.
inline InequalityQp solve_inequality_qp(const Matrix& H, const Vector& g, const Matrix& A, const Vector& b,
                                        const std::vector<int>& warm = {}) {
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() != Eigen::Success) throw NumericalError("inequality qp: H is not positive definite");
    // With u = Lᵀy: ½‖u‖² + (L⁻¹g)ᵀu subject to (A L⁻ᵀ) u ≥ b.
    const Matrix Bt = llt.matrixL().solve(A.transpose());
    const Vector u0 = -llt.matrixL().solve(g);
    auto res = project_polytope(Bt.transpose(), b, u0, warm);
    const Vector y = llt.matrixU().solve(res.y);
    return {y, res.mu, res.free_set};
}

}  // namespace coxsense
