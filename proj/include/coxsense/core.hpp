#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace coxsense {

using Point = Eigen::VectorXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error hierarchy. Every failure raised by the library derives from Error.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };
class DegenerateNodesError : public Error { using Error::Error; };
class BasisDegeneracyError : public Error { using Error::Error; };
class SamplingFailureError : public Error { using Error::Error; };
class CapacityError : public Error { using Error::Error; };
class ConvergenceError : public Error { using Error::Error; };
class NumericalError : public Error { using Error::Error; };
class DivergenceError : public Error { using Error::Error; };
class ModelError : public Error { using Error::Error; };
class InvariantViolation : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };

/// Compact scientific rendering for diagnostics.
inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

inline Point make_point(std::initializer_list<double> xs) {
    Point p(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) p(i++) = x;
    return p;
}

/// Axis-aligned compact box in R^d.
class Domain {
public:
    Domain() = default;
    Domain(std::vector<double> lower, std::vector<double> upper)
        : lower_(std::move(lower)), upper_(std::move(upper)) {
        if (lower_.empty() || lower_.size() != upper_.size())
            throw ParameterError("domain: lower/upper must be non-empty and of equal dimension");
        for (std::size_t i = 0; i < lower_.size(); ++i) {
            if (!(lower_[i] < upper_[i]))
                throw ParameterError("domain: lower[" + std::to_string(i) + "] must be < upper[" +
                                     std::to_string(i) + "]");
        }
    }

    static Domain interval(double lo, double hi) { return Domain({lo}, {hi}); }
    static Domain box(double lo, double hi, int dim) {
        return Domain(std::vector<double>(dim, lo), std::vector<double>(dim, hi));
    }

    [[nodiscard]] int dim() const { return static_cast<int>(lower_.size()); }
    [[nodiscard]] double lower(int i) const { return lower_[i]; }
    [[nodiscard]] double upper(int i) const { return upper_[i]; }
    [[nodiscard]] double width(int i) const { return upper_[i] - lower_[i]; }
    [[nodiscard]] const std::vector<double>& lower() const { return lower_; }
    [[nodiscard]] const std::vector<double>& upper() const { return upper_; }

    [[nodiscard]] double volume() const {
        double v = 1.0;
        for (int i = 0; i < dim(); ++i) v *= width(i);
        return v;
    }

    [[nodiscard]] bool contains(const Point& x, double tol = 1e-12) const {
        if (x.size() != dim()) return false;
        for (int i = 0; i < dim(); ++i) {
            const double slack = tol * std::max(1.0, width(i));
            if (x(i) < lower_[i] - slack || x(i) > upper_[i] + slack) return false;
        }
        return true;
    }

    void require(const Point& x, std::string_view what = "point") const {
        if (!contains(x)) {
            std::string s(what);
            s += " outside domain: (";
            for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? ", " : "") + std::to_string(x(i));
            s += ")";
            throw DomainError(s);
        }
    }

    friend bool operator==(const Domain&, const Domain&) = default;

private:
    std::vector<double> lower_;
    std::vector<double> upper_;
};

/// Axis-aligned sensing region; a node of the hierarchical action set.
struct Region {
    int id = 0;
    std::vector<double> lower;
    std::vector<double> upper;
    int depth = 0;
    std::optional<int> parent;

    [[nodiscard]] int dim() const { return static_cast<int>(lower.size()); }
    [[nodiscard]] double volume() const {
        double v = 1.0;
        for (std::size_t i = 0; i < lower.size(); ++i) v *= upper[i] - lower[i];
        return v;
    }
    [[nodiscard]] bool contains(const Point& x) const {
        for (std::size_t i = 0; i < lower.size(); ++i) {
            if (x(static_cast<Eigen::Index>(i)) < lower[i] || x(static_cast<Eigen::Index>(i)) > upper[i]) return false;
        }
        return true;
    }
    [[nodiscard]] Domain as_domain() const { return Domain(lower, upper); }

    static Region whole(const Domain& d, int id = 0) { return Region{id, d.lower(), d.upper(), 0, std::nullopt}; }
};

// 64-bit FNV-1a; stable across platforms, used for seed streams and config hashes.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

/// Named sub-stream of a root seed: the same (root, name, indices) always yields the same engine.
inline Rng rng_stream(std::uint64_t root, std::string_view name, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = splitmix64(root ^ fnv1a(name));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b * 0x9e3779b97f4a7c15ULL));
    return Rng(h);
}

inline Vector standard_normal(Eigen::Index n, Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = nd(rng);
    return w;
}

/// Index of the maximum; values within rel_tol of the maximum count as ties and the
/// smallest index wins.
inline std::size_t argmax_ties(const std::vector<double>& v, double rel_tol = 1e-12) {
    if (v.empty()) throw ParameterError("argmax over empty set");
    double best = -std::numeric_limits<double>::infinity();
    for (double x : v) best = std::max(best, x);
    const double thr = best - rel_tol * std::max(1.0, std::abs(best));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] >= thr) return i;
    }
    return 0;
}

inline std::size_t argmin_ties(const std::vector<double>& v, double rel_tol = 1e-12) {
    std::vector<double> neg(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) neg[i] = -v[i];
    return argmax_ties(neg, rel_tol);
}

}  // namespace coxsense
