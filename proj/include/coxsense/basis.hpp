#pragma once

// Positive bases and the covariance-matching transform.
//
// A raw basis φ has pointwise nonnegative functions. The model intensity is
//     λ(x) = θᵀΦ(x),  Φ(x) = Γᵀφ(x),  Γ = V⁻¹K^{1/2},  V_ij = φ_j(t_i),
// so the raw coefficients are c = Γθ and the positivity constraint reads Γθ ≥ l·1.
// With these definitions Φ(t_i)ᵀΦ(t_j) = K_ij up to eigenvalue clipping.

#include "coxsense/kernels.hpp"
#include "coxsense/linalg.hpp"

#include <Eigen/SVD>
#include <fstream>

namespace coxsense {

enum class BasisKind { hat, bernstein, nmf };

inline std::string to_string(BasisKind k) {
    switch (k) {
        case BasisKind::hat: return "hat";
        case BasisKind::bernstein: return "bernstein";
        case BasisKind::nmf: return "nmf";
    }
    return "?";
}

inline BasisKind basis_kind_from_string(const std::string& s) {
    if (s == "hat" || s == "triangle") return BasisKind::hat;
    if (s == "bernstein") return BasisKind::bernstein;
    if (s == "nmf") return BasisKind::nmf;
    throw ParameterError("unknown basis kind '" + s + "' (valid: hat, bernstein, nmf)");
}

namespace detail {

// ∫_a^b max(0, 1 − |x − t|/s) dx.
inline double hat_integral(double t, double s, double a, double b) {
    auto F = [s](double u) {
        if (u <= -s) return 0.0;
        if (u <= 0) return (u + s) * (u + s) / (2 * s);
        if (u <= s) return s - (s - u) * (s - u) / (2 * s);
        return s;
    };
    return F(b - t) - F(a - t);
}

inline double binomial(int n, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
}

// Values of the equispaced 1-d hat functions through `grid` (nodes at grid points).
inline void grid_hat_values(const std::vector<double>& grid, double x, std::vector<double>& out) {
    const std::size_t n = grid.size();
    out.assign(n, 0.0);
    if (x <= grid.front()) { out[0] = 1.0; return; }
    if (x >= grid.back()) { out[n - 1] = 1.0; return; }
    const double h = (grid.back() - grid.front()) / static_cast<double>(n - 1);
    auto i = static_cast<std::size_t>(std::floor((x - grid.front()) / h));
    i = std::min(i, n - 2);
    const double u = (x - grid[i]) / h;
    out[i] = 1.0 - u;
    out[i + 1] = u;
}

inline std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = (n == 1) ? a : a + (b - a) * i / (n - 1);
    if (n > 1) v.back() = b;
    return v;
}

}  // namespace detail

/// Pointwise nonnegative basis {φ_j} with nodes t_j. Multi-dimensional hat and Bernstein
/// bases are tensor products indexed with x fastest.
struct RawBasis {
    BasisKind kind = BasisKind::hat;
    Domain domain;
    int per_axis = 0;                 // hat: nodes per axis; bernstein: degree + 1
    std::vector<Point> nodes;
    // nmf: column table on a regular grid (row = grid point, x fastest), linear interpolation.
    std::vector<std::vector<double>> grid_axes;
    Matrix table;
    std::vector<int> near_tie_columns;  // nmf columns whose runner-up peak is within 1% of the max

    [[nodiscard]] int size() const { return static_cast<int>(nodes.size()); }
    [[nodiscard]] int dim() const { return domain.dim(); }

    /// φ(x); x is clamped to the domain.
    [[nodiscard]] Vector eval(const Point& x) const {
        const int d = dim();
        if (x.size() != d) throw DomainError("basis eval: dimension mismatch");
        std::vector<std::vector<double>> ax(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k) {
            const double xk = std::clamp(x(k), domain.lower(k), domain.upper(k));
            axis_values(k, xk, ax[static_cast<std::size_t>(k)]);
        }
        if (kind == BasisKind::nmf) return table.transpose() * tensor(ax);
        return tensor(ax);
    }

    /// φ_A = ∫_A φ(x) dx. Hat and tabulated bases integrate exactly; Bernstein bases use
    /// Gauss-Legendre of the given order per axis.
    [[nodiscard]] Vector integrate(const Region& A, int quad_order = 32) const {
        const int d = dim();
        if (A.dim() != d) throw ParameterError("region dimension mismatch");
        if (!(A.volume() > 0)) throw ParameterError("region " + std::to_string(A.id) + " has zero volume");
        for (int k = 0; k < d; ++k) {
            const double slack = 1e-12 * std::max(1.0, domain.width(k));
            if (A.lower[k] < domain.lower(k) - slack || A.upper[k] > domain.upper(k) + slack)
                throw DomainError("region " + std::to_string(A.id) + " extends outside the domain");
        }
        std::vector<std::vector<double>> ax(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k) {
            const double a = std::max(A.lower[k], domain.lower(k));
            const double b = std::min(A.upper[k], domain.upper(k));
            axis_integrals(k, a, b, quad_order, ax[static_cast<std::size_t>(k)]);
        }
        if (kind == BasisKind::nmf) return table.transpose() * tensor(ax);
        return tensor(ax);
    }

private:
    [[nodiscard]] std::vector<double> axis_nodes(int k) const {
        return detail::linspace(domain.lower(k), domain.upper(k), per_axis);
    }

    void axis_values(int k, double x, std::vector<double>& out) const {
        switch (kind) {
            case BasisKind::hat: {
                const auto t = axis_nodes(k);
                detail::grid_hat_values(t, x, out);
                return;
            }
            case BasisKind::bernstein: {
                const int n = per_axis - 1;
                const double u = (x - domain.lower(k)) / domain.width(k);
                out.assign(static_cast<std::size_t>(per_axis), 0.0);
                for (int j = 0; j <= n; ++j)
                    out[static_cast<std::size_t>(j)] = detail::binomial(n, j) * std::pow(u, j) * std::pow(1 - u, n - j);
                return;
            }
            case BasisKind::nmf:
                detail::grid_hat_values(grid_axes[static_cast<std::size_t>(k)], x, out);
                return;
        }
    }

    void axis_integrals(int k, double a, double b, int quad_order, std::vector<double>& out) const {
        switch (kind) {
            case BasisKind::hat:
            case BasisKind::nmf: {
                const auto t = kind == BasisKind::hat ? axis_nodes(k) : grid_axes[static_cast<std::size_t>(k)];
                const double s = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
                out.resize(t.size());
                for (std::size_t j = 0; j < t.size(); ++j) out[j] = detail::hat_integral(t[j], s, a, b);
                return;
            }
            case BasisKind::bernstein: {
                const auto q = gauss_legendre(quad_order);
                out.assign(static_cast<std::size_t>(per_axis), 0.0);
                std::vector<double> v;
                for (std::size_t i = 0; i < q.nodes.size(); ++i) {
                    const double x = 0.5 * (a + b) + 0.5 * (b - a) * q.nodes[i];
                    axis_values(k, x, v);
                    for (std::size_t j = 0; j < v.size(); ++j) out[j] += 0.5 * (b - a) * q.weights[i] * v[j];
                }
                return;
            }
        }
    }

    static Vector tensor(const std::vector<std::vector<double>>& ax) {
        std::size_t n = 1;
        for (const auto& a : ax) n *= a.size();
        Vector out(static_cast<Eigen::Index>(n));
        for (std::size_t idx = 0; idx < n; ++idx) {
            std::size_t rem = idx;
            double v = 1.0;
            for (const auto& a : ax) {
                v *= a[rem % a.size()];
                rem /= a.size();
            }
            out(static_cast<Eigen::Index>(idx)) = v;
        }
        return out;
    }
};

namespace detail {

inline std::vector<Point> tensor_nodes(const Domain& domain, const std::vector<std::vector<double>>& axes) {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size();
    std::vector<Point> pts;
    pts.reserve(n);
    for (std::size_t idx = 0; idx < n; ++idx) {
        std::size_t rem = idx;
        Point p(domain.dim());
        for (int k = 0; k < domain.dim(); ++k) {
            const auto& a = axes[static_cast<std::size_t>(k)];
            p(k) = a[rem % a.size()];
            rem /= a.size();
        }
        pts.push_back(p);
    }
    return pts;
}

}  // namespace detail

/// Equispaced hats with endpoint nodes and half-width equal to the node spacing; V = I and
/// Σ_j φ_j ≡ 1 on the domain.
inline RawBasis build_hat_basis(const Domain& domain, int m_per_axis) {
    if (m_per_axis < 2) throw ParameterError("hat basis: m_per_axis must be >= 2");
    RawBasis b;
    b.kind = BasisKind::hat;
    b.domain = domain;
    b.per_axis = m_per_axis;
    std::vector<std::vector<double>> axes;
    for (int k = 0; k < domain.dim(); ++k) axes.push_back(detail::linspace(domain.lower(k), domain.upper(k), m_per_axis));
    b.nodes = detail::tensor_nodes(domain, axes);
    return b;
}

/// Bernstein polynomials of the given degree, nodes at their maxima u = j/n.
inline RawBasis build_bernstein_basis(const Domain& domain, int degree) {
    if (degree < 1) throw ParameterError("bernstein basis: degree must be >= 1");
    RawBasis b;
    b.kind = BasisKind::bernstein;
    b.domain = domain;
    b.per_axis = degree + 1;
    std::vector<std::vector<double>> axes;
    for (int k = 0; k < domain.dim(); ++k) axes.push_back(detail::linspace(domain.lower(k), domain.upper(k), degree + 1));
    b.nodes = detail::tensor_nodes(domain, axes);
    return b;
}

/// Regions with their raw and transformed integrals, one column per region.
struct RegionIntegrals {
    std::vector<Region> regions;
    Matrix phi;   // m × |regions|
    Matrix psi;   // Γᵀφ_A

    [[nodiscard]] std::size_t size() const { return regions.size(); }
};

/// Raw basis together with the covariance-matching transform and the lower bound l.
class BasisModel {
public:
    BasisModel() = default;
    BasisModel(RawBasis raw, KernelSpec kernel, Matrix K, Matrix V, Matrix Gamma, double l)
        : raw_(std::move(raw)), kernel_(std::move(kernel)), K_(std::move(K)), V_(std::move(V)),
          Gamma_(std::move(Gamma)), l_(l) {}

    [[nodiscard]] const RawBasis& raw() const { return raw_; }
    [[nodiscard]] const KernelSpec& kernel() const { return kernel_; }
    [[nodiscard]] const Domain& domain() const { return raw_.domain; }
    [[nodiscard]] int size() const { return raw_.size(); }
    [[nodiscard]] const Matrix& K() const { return K_; }
    [[nodiscard]] const Matrix& V() const { return V_; }
    [[nodiscard]] const Matrix& Gamma() const { return Gamma_; }
    [[nodiscard]] double lower_bound() const { return l_; }

    /// Φ(x) = Γᵀφ(x).
    [[nodiscard]] Vector features(const Point& x) const { return Gamma_.transpose() * raw_.eval(x); }

    /// Smallest intensity any feasible θ can produce at x: l·Σ_j φ_j(x).
    [[nodiscard]] double intensity_floor(const Point& x) const { return l_ * raw_.eval(x).sum(); }

    [[nodiscard]] Matrix feature_matrix(const std::vector<Point>& xs) const {
        Matrix F(static_cast<Eigen::Index>(xs.size()), size());
        for (std::size_t i = 0; i < xs.size(); ++i) F.row(static_cast<Eigen::Index>(i)) = features(xs[i]).transpose();
        return F;
    }

    [[nodiscard]] bool feasible(const Vector& theta, double tol = 1e-8) const {
        return ((Gamma_ * theta).array() >= l_ - tol).all();
    }

private:
    RawBasis raw_;
    KernelSpec kernel_;
    Matrix K_;
    Matrix V_;
    Matrix Gamma_;
    double l_ = 0.0;
};

/// Γ = V⁻¹·psd_sqrt(K). Throws BasisDegeneracyError when V is numerically singular.
inline BasisModel gamma_transform(const RawBasis& raw, const KernelSpec& kernel, double l = 0.0) {
    if (!(l >= 0)) throw ParameterError("lower bound l must be nonnegative");
    if (!(kernel.domain == raw.domain)) throw ParameterError("kernel and basis domains differ");
    const int m = raw.size();
    Matrix V(m, m);
    for (int i = 0; i < m; ++i) V.row(i) = raw.eval(raw.nodes[static_cast<std::size_t>(i)]).transpose();
    const Matrix K = kernel_matrix(kernel, raw.nodes);
    const Matrix S = psd_sqrt(K);
    Matrix Gamma;
    if (V.isIdentity(0.0)) {
        Gamma = S;
    } else {
        Eigen::JacobiSVD<Matrix> svd(V, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vector sv = svd.singularValues();
        const double cond = sv(m - 1) > 0 ? sv(0) / sv(m - 1) : std::numeric_limits<double>::infinity();
        if (!(cond <= 1e12)) {
            // The right singular vector of the smallest singular value names the culprits.
            const Vector v = svd.matrixV().col(m - 1).cwiseAbs();
            std::string names;
            for (int j = 0; j < m; ++j)
                if (v(j) >= 0.5 * v.maxCoeff()) names += (names.empty() ? "" : ", ") + std::to_string(j);
            throw BasisDegeneracyError("change-of-basis matrix V is near-singular (condition " + std::to_string(cond) +
                                       "); offending nodes: " + names);
        }
        Gamma = V.partialPivLu().solve(S);
    }
    return BasisModel(raw, kernel, K, V, Gamma, l);
}

inline RegionIntegrals region_integrals(const BasisModel& model, const std::vector<Region>& regions,
                                        int quad_order = 32) {
    RegionIntegrals out;
    out.regions = regions;
    out.phi.resize(model.size(), static_cast<Eigen::Index>(regions.size()));
    for (std::size_t k = 0; k < regions.size(); ++k)
        out.phi.col(static_cast<Eigen::Index>(k)) = model.raw().integrate(regions[k], quad_order);
    out.psi = model.Gamma().transpose() * out.phi;
    return out;
}

/// λ(x) = θᵀΦ(x).
inline double eval_intensity(const BasisModel& model, const Vector& theta, const Point& x) {
    return (model.Gamma() * theta).dot(model.raw().eval(x));
}

/// Nodes per axis at which the kernel matrix on a regular grid first becomes numerically
/// rank-deficient: the smallest power of two (≥ 2) with λ_min ≤ ε·λ_max.
inline int suggest_basis_size(const KernelSpec& kernel, const Domain& domain, double eps, int cap = 4096) {
    if (!(eps > 0)) throw ParameterError("suggest_basis_size: cutoff must be positive");
    for (int per_axis = 2;; per_axis *= 2) {
        const double total = std::pow(static_cast<double>(per_axis), domain.dim());
        if (total > cap)
            throw CapacityError("suggest_basis_size: basis size would exceed cap " + std::to_string(cap));
        std::vector<std::vector<double>> axes;
        for (int k = 0; k < domain.dim(); ++k) axes.push_back(detail::linspace(domain.lower(k), domain.upper(k), per_axis));
        const Matrix K = kernel_matrix(kernel, detail::tensor_nodes(domain, axes));
        Eigen::SelfAdjointEigenSolver<Matrix> es(K, Eigen::EigenvaluesOnly);
        const Vector ev = es.eigenvalues();
        if (ev(0) <= eps * ev(ev.size() - 1)) return per_axis;
    }
}

/// Regular grid of points covering the domain, x fastest; cell centres when `centres` is set.
inline std::vector<Point> regular_grid(const Domain& domain, int per_axis, bool centres = false) {
    std::vector<std::vector<double>> axes;
    for (int k = 0; k < domain.dim(); ++k) {
        if (centres) {
            std::vector<double> a(static_cast<std::size_t>(per_axis));
            const double h = domain.width(k) / per_axis;
            for (int i = 0; i < per_axis; ++i) a[static_cast<std::size_t>(i)] = domain.lower(k) + (i + 0.5) * h;
            axes.push_back(a);
        } else {
            axes.push_back(detail::linspace(domain.lower(k), domain.upper(k), per_axis));
        }
    }
    return detail::tensor_nodes(domain, axes);
}

/// max_ij |Φ(t_i)ᵀΦ(t_j) − K′_ij| with K′ the eigenvalue-clipped kernel matrix.
inline double covariance_matching_residual(const BasisModel& model) {
    const Matrix Phi = model.feature_matrix(model.raw().nodes);
    const Matrix Kc = clip_psd(model.K(), default_jitter(model.K()));
    return (Phi * Phi.transpose() - Kc).cwiseAbs().maxCoeff();
}

/// Raw basis functions sampled on a regular grid: `node_index,x[,y],value`.
inline void write_basis_csv(const RawBasis& raw, const std::string& path, int per_axis, const std::string& preamble = "") {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    if (!preamble.empty()) out << preamble << "\n";
    out << "node_index,x" << (raw.dim() == 2 ? ",y" : "") << ",value\n";
    const auto grid = regular_grid(raw.domain, per_axis);
    std::vector<Vector> vals;
    vals.reserve(grid.size());
    for (const auto& p : grid) vals.push_back(raw.eval(p));
    for (int j = 0; j < raw.size(); ++j) {
        for (std::size_t g = 0; g < grid.size(); ++g) {
            out << j;
            for (int k = 0; k < raw.dim(); ++k) out << "," << csv::fmt(grid[g](k));
            out << "," << csv::fmt(vals[g](j)) << "\n";
        }
    }
}

}  // namespace coxsense
