#pragma once

// Inhomogeneous Poisson process on a box region, sampled on a discretization grid.

#include "coxsense/basis.hpp"

#include <functional>

namespace coxsense {

using Intensity = std::function<double(const Point&)>;

struct PointProcessDraw {
    int count = 0;
    std::vector<Point> locations;
};

/// Default cells per axis: 512 in 1-d, 128 otherwise.
inline int default_resolution(int dim) { return dim == 1 ? 512 : 128; }

namespace detail {

// Node values of λ on a (res+1)^d grid over the region, x fastest.
struct RegionGrid {
    int res = 0;
    int dim = 0;
    std::vector<double> lower, h;
    std::vector<double> values;
    std::vector<double> cell_mass;   // trapezoid (corner-average) mass per cell, before duration

    RegionGrid(const Intensity& lambda, const Region& A, int resolution) : res(resolution), dim(A.dim()) {
        if (res < 1) throw ParameterError("point process: resolution must be >= 1");
        if (!(A.volume() > 0)) throw ParameterError("point process: region has zero volume");
        if (dim > 2) throw ParameterError("point process: only 1-d and 2-d regions are supported");
        lower = A.lower;
        for (int k = 0; k < dim; ++k) h.push_back((A.upper[static_cast<std::size_t>(k)] - A.lower[static_cast<std::size_t>(k)]) / res);
        const int n1 = res + 1;
        const int nodes = dim == 1 ? n1 : n1 * n1;
        values.resize(static_cast<std::size_t>(nodes));
        Point x(dim);
        for (int idx = 0; idx < nodes; ++idx) {
            const int ix = idx % n1, iy = idx / n1;
            x(0) = ix == res ? A.upper[0] : lower[0] + ix * h[0];
            if (dim == 2) x(1) = iy == res ? A.upper[1] : lower[1] + iy * h[1];
            const double v = lambda(x);
            if (!(v >= 0) || !std::isfinite(v))
                throw ModelError("point process: intensity is negative or non-finite at a grid point");
            values[static_cast<std::size_t>(idx)] = v;
        }
        if (dim == 1) {
            cell_mass.resize(static_cast<std::size_t>(res));
            for (int i = 0; i < res; ++i)
                cell_mass[static_cast<std::size_t>(i)] = 0.5 * (values[static_cast<std::size_t>(i)] + values[static_cast<std::size_t>(i + 1)]) * h[0];
        } else {
            cell_mass.resize(static_cast<std::size_t>(res * res));
            for (int j = 0; j < res; ++j)
                for (int i = 0; i < res; ++i) {
                    auto at = [&](int a, int b) { return values[static_cast<std::size_t>(a + n1 * b)]; };
                    cell_mass[static_cast<std::size_t>(i + res * j)] =
                        0.25 * (at(i, j) + at(i + 1, j) + at(i, j + 1) + at(i + 1, j + 1)) * h[0] * h[1];
                }
        }
    }

    [[nodiscard]] double total() const {
        double s = 0.0;
        for (double c : cell_mass) s += c;
        return s;
    }
};

}  // namespace detail

/// Discretized intensity on one region; reusable across draws.
class RegionSampler {
public:
    RegionSampler(const Intensity& lambda, const Region& A, int resolution = 0)
        : region_(A), grid_(lambda, A, resolution > 0 ? resolution : default_resolution(A.dim())),
          cells_(grid_.cell_mass.begin(), grid_.cell_mass.end()) {}

    /// ∫_A λ by the trapezoid rule on the discretization grid.
    [[nodiscard]] double integral() const { return grid_.total(); }

    /// N ~ Poisson(Δ·∫_A λ); locations i.i.d. with density ∝ λ on A. In 1-d a cell is chosen
    /// by mass and the point placed by inverting the linear density within it; in 2-d the
    /// point is uniform within the chosen cell.
    PointProcessDraw draw(double duration, Rng& rng) {
        if (!(duration >= 0)) throw ParameterError("duration must be nonnegative");
        const double Lambda = duration * integral();
        PointProcessDraw out;
        if (!(Lambda > 0)) return out;
        std::poisson_distribution<int> pois(Lambda);
        out.count = pois(rng);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        out.locations.reserve(static_cast<std::size_t>(out.count));
        const auto& A = region_;
        const auto& g = grid_;
        for (int n = 0; n < out.count; ++n) {
            const int c = cells_(rng);
            Point x(g.dim);
            if (g.dim == 1) {
                const double a = g.values[static_cast<std::size_t>(c)], b = g.values[static_cast<std::size_t>(c + 1)];
                const double u = unif(rng);
                const double den = a + std::sqrt(a * a + (b * b - a * a) * u);
                const double t = den > 0 ? (a + b) * u / den : u;
                x(0) = std::min(A.lower[0] + (c + std::clamp(t, 0.0, 1.0)) * g.h[0], A.upper[0]);
            } else {
                const int ix = c % g.res, iy = c / g.res;
                x(0) = std::min(A.lower[0] + (ix + unif(rng)) * g.h[0], A.upper[0]);
                x(1) = std::min(A.lower[1] + (iy + unif(rng)) * g.h[1], A.upper[1]);
            }
            out.locations.push_back(x);
        }
        return out;
    }

private:
    Region region_;
    detail::RegionGrid grid_;
    std::discrete_distribution<int> cells_;
};

/// Δ·∫_A λ by the trapezoid rule on the discretization grid.
inline double expected_count(const Intensity& lambda, const Region& A, double duration, int resolution = 0) {
    if (!(duration >= 0)) throw ParameterError("duration must be nonnegative");
    return duration * RegionSampler(lambda, A, resolution).integral();
}

inline PointProcessDraw simulate_point_process(const Intensity& lambda, const Region& A, double duration, Rng& rng,
                                               int resolution = 0) {
    RegionSampler s(lambda, A, resolution);
    return s.draw(duration, rng);
}

/// λ(x) = θᵀΦ(x) as an intensity function.
inline Intensity model_intensity(std::shared_ptr<const BasisModel> model, Vector theta) {
    Vector c = model->Gamma() * theta;
    return [model = std::move(model), c = std::move(c)](const Point& x) {
        const double v = c.dot(model->raw().eval(x));
        return v < 0 && v > -1e-9 ? 0.0 : v;
    };
}

}  // namespace coxsense
