#pragma once

// Covariance kernels on a box domain.
//
// Convention: the squared-exponential kernel is k(x,y) = exp(-|x-y|^2 / gamma^2), with no
// factor 2 in the denominator. A lengthscale of 0.1 here corresponds to 0.1/sqrt(2) under
// the exp(-|x-y|^2 / (2 l^2)) convention used by many GP texts.

#include "coxsense/core.hpp"
#include "coxsense/csv.hpp"

#include <array>
#include <functional>
#include <memory>

namespace coxsense {

using ScalarField = std::function<double(const Point&)>;

/// Values on a regular grid with nearest-neighbour lookup. Row-major, x fastest.
class TabulatedGrid {
public:
    TabulatedGrid() = default;
    TabulatedGrid(std::vector<std::vector<double>> axes, std::vector<double> values)
        : axes_(std::move(axes)), values_(std::move(values)) {
        std::size_t n = 1;
        for (const auto& a : axes_) {
            if (a.empty()) throw ParameterError("tabulated grid: empty axis");
            if (!std::is_sorted(a.begin(), a.end())) throw ParameterError("tabulated grid: axis not sorted");
            n *= a.size();
        }
        if (axes_.empty() || n != values_.size())
            throw ParameterError("tabulated grid: value count does not match grid shape");
    }

    /// Loads `x,value` (1-d) or `x,y,value` (2-d) rows; every grid point must be present.
    static TabulatedGrid from_csv(const std::string& path) {
        const auto t = csv::read(path);
        const int cx = t.column("x"), cy = t.column("y"), cv = t.column("value");
        if (cx < 0 || cv < 0) throw ParseError(path + ": header must contain x[,y],value");
        const int dim = cy >= 0 ? 2 : 1;
        std::vector<std::array<double, 3>> pts;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const std::string where = path + ":" + std::to_string(t.line_numbers[r]);
            pts.push_back({csv::to_double(t.rows[r][cx], where), dim == 2 ? csv::to_double(t.rows[r][cy], where) : 0.0,
                           csv::to_double(t.rows[r][cv], where)});
        }
        std::vector<std::vector<double>> axes(dim);
        for (int d = 0; d < dim; ++d) {
            for (const auto& p : pts) axes[d].push_back(p[d]);
            std::sort(axes[d].begin(), axes[d].end());
            axes[d].erase(std::unique(axes[d].begin(), axes[d].end()), axes[d].end());
        }
        std::vector<double> values(dim == 2 ? axes[0].size() * axes[1].size() : axes[0].size(),
                                   std::numeric_limits<double>::quiet_NaN());
        for (const auto& p : pts) {
            const auto ix = static_cast<std::size_t>(std::lower_bound(axes[0].begin(), axes[0].end(), p[0]) - axes[0].begin());
            std::size_t idx = ix;
            if (dim == 2) {
                const auto iy = static_cast<std::size_t>(std::lower_bound(axes[1].begin(), axes[1].end(), p[1]) - axes[1].begin());
                idx = ix + axes[0].size() * iy;
            }
            values[idx] = p[2];
        }
        for (double v : values)
            if (std::isnan(v)) throw ParseError(path + ": grid is incomplete (missing x,y combinations)");
        return TabulatedGrid(std::move(axes), std::move(values));
    }

    [[nodiscard]] int dim() const { return static_cast<int>(axes_.size()); }

    [[nodiscard]] double operator()(const Point& x) const {
        std::size_t idx = 0, stride = 1;
        for (int d = 0; d < dim(); ++d) {
            idx += nearest(axes_[d], x(d)) * stride;
            stride *= axes_[d].size();
        }
        return values_[idx];
    }

private:
    static std::size_t nearest(const std::vector<double>& a, double v) {
        auto it = std::lower_bound(a.begin(), a.end(), v);
        if (it == a.begin()) return 0;
        if (it == a.end()) return a.size() - 1;
        const auto hi = static_cast<std::size_t>(it - a.begin());
        return (v - a[hi - 1] <= a[hi] - v) ? hi - 1 : hi;
    }

    std::vector<std::vector<double>> axes_;
    std::vector<double> values_;
};

enum class KernelFamily { squared_exponential, laplace, gibbs, product };

inline std::string to_string(KernelFamily f) {
    switch (f) {
        case KernelFamily::squared_exponential: return "se";
        case KernelFamily::laplace: return "laplace";
        case KernelFamily::gibbs: return "gibbs";
        case KernelFamily::product: return "product";
    }
    return "?";
}

/// Immutable description of a covariance function on a box domain.
struct KernelSpec {
    KernelFamily family = KernelFamily::squared_exponential;
    Domain domain;
    double lengthscale = 1.0;
    double variance = 1.0;
    ScalarField lengthscale_field;              // gibbs
    std::vector<ScalarField> features;          // product: feature maps, default = coordinates
    std::vector<double> feature_lengthscales;   // product: per-factor lengthscales
    ScalarField indicator;                      // optional w(x) in [0, 1]
};

inline KernelSpec se_kernel(const Domain& domain, double lengthscale, double variance = 1.0) {
    if (!(lengthscale > 0)) throw ParameterError("kernel: lengthscale must be positive");
    if (!(variance > 0)) throw ParameterError("kernel: variance must be positive");
    KernelSpec k;
    k.family = KernelFamily::squared_exponential;
    k.domain = domain;
    k.lengthscale = lengthscale;
    k.variance = variance;
    return k;
}

inline KernelSpec laplace_kernel(const Domain& domain, double lengthscale, double variance = 1.0) {
    KernelSpec k = se_kernel(domain, lengthscale, variance);
    k.family = KernelFamily::laplace;
    return k;
}

inline KernelSpec gibbs_kernel(const Domain& domain, ScalarField lengthscale_field, double variance = 1.0) {
    if (!lengthscale_field) throw ParameterError("gibbs kernel: lengthscale field required");
    KernelSpec k = se_kernel(domain, 1.0, variance);
    k.family = KernelFamily::gibbs;
    k.lengthscale_field = std::move(lengthscale_field);
    return k;
}

/// Product over factors f of exp(-(g_f(x) - g_f(y))^2 / gamma_f^2). With no feature maps the
/// factors are the coordinate axes.
inline KernelSpec product_kernel(const Domain& domain, std::vector<double> lengthscales,
                                 std::vector<ScalarField> features = {}, double variance = 1.0) {
    KernelSpec k = se_kernel(domain, 1.0, variance);
    k.family = KernelFamily::product;
    if (features.empty()) {
        if (static_cast<int>(lengthscales.size()) != domain.dim())
            throw ParameterError("product kernel: one lengthscale per axis required");
        for (int d = 0; d < domain.dim(); ++d) features.push_back([d](const Point& x) { return x(d); });
    }
    if (lengthscales.size() != features.size())
        throw ParameterError("product kernel: one lengthscale per feature required");
    for (double g : lengthscales)
        if (!(g > 0)) throw ParameterError("product kernel: lengthscales must be positive");
    k.features = std::move(features);
    k.feature_lengthscales = std::move(lengthscales);
    return k;
}

inline KernelSpec with_indicator(KernelSpec k, ScalarField w) {
    k.indicator = std::move(w);
    return k;
}

namespace detail {

inline double indicator_value(const KernelSpec& spec, const Point& x) {
    if (!spec.indicator) return 1.0;
    const double w = spec.indicator(x);
    if (!(w >= 0.0 && w <= 1.0)) throw ParameterError("kernel indicator must lie in [0, 1]");
    return w;
}

inline double gibbs_lengthscale(const KernelSpec& spec, const Point& x) {
    const double g = spec.lengthscale_field(x);
    if (!(g > 0)) throw ParameterError("gibbs kernel: lengthscale field must be positive");
    return g;
}

inline double base_kernel(const KernelSpec& spec, const Point& x, const Point& y) {
    switch (spec.family) {
        case KernelFamily::squared_exponential: {
            const double g2 = spec.lengthscale * spec.lengthscale;
            return std::exp(-(x - y).squaredNorm() / g2);
        }
        case KernelFamily::laplace:
            return std::exp(-(x - y).norm() / spec.lengthscale);
        case KernelFamily::gibbs: {
            const double gx = gibbs_lengthscale(spec, x);
            const double gy = gibbs_lengthscale(spec, y);
            const double s = gx * gx + gy * gy;
            const double pref = std::pow(2.0 * (gx * gy) / s, 0.5 * static_cast<double>(x.size()));
            return pref * std::exp(-(x - y).squaredNorm() / s);
        }
        case KernelFamily::product: {
            double v = 1.0;
            for (std::size_t f = 0; f < spec.features.size(); ++f) {
                const double d = spec.features[f](x) - spec.features[f](y);
                const double g = spec.feature_lengthscales[f];
                v *= std::exp(-(d * d) / (g * g));
            }
            return v;
        }
    }
    return 0.0;
}

}  // namespace detail

/// k(x, y). Throws DomainError when either point lies outside the kernel's domain.
inline double eval_kernel(const KernelSpec& spec, const Point& x, const Point& y) {
    spec.domain.require(x);
    spec.domain.require(y);
    const double w = detail::indicator_value(spec, x) * detail::indicator_value(spec, y);
    return spec.variance * w * detail::base_kernel(spec, x, y);
}

inline void require_distinct(const std::vector<Point>& nodes) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t j = i + 1; j < nodes.size(); ++j)
            if ((nodes[i] - nodes[j]).squaredNorm() == 0.0)
                throw DegenerateNodesError("duplicate nodes at indices " + std::to_string(i) + " and " +
                                           std::to_string(j));
}

/// K_ij = k(t_i, t_j) over distinct nodes.
inline Matrix kernel_matrix(const KernelSpec& spec, const std::vector<Point>& nodes) {
    require_distinct(nodes);
    const auto m = static_cast<Eigen::Index>(nodes.size());
    for (const auto& t : nodes) spec.domain.require(t, "node");
    std::vector<double> w(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) w[i] = detail::indicator_value(spec, nodes[i]);
    Matrix K(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i; j < m; ++j) {
            const double v = spec.variance * (w[i] * w[j]) * detail::base_kernel(spec, nodes[i], nodes[j]);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

}  // namespace coxsense
