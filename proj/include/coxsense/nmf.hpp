#pragma once

// Minimal-description positive basis: nonnegative factorization F ≈ LY of truncated-GP
// sample paths. Columns of L, normalized in the grid-weighted 2-norm, become the basis.

#include "coxsense/basis.hpp"

#include <nlohmann/json.hpp>

namespace coxsense {

struct NmfOptions {
    int n_grid = 0;            // grid points per axis; 0 selects 256 (1-d) or 64 (2-d)
    int n_samples = 0;         // 0 selects 20·m
    int iterations = 500;
    long retry_budget = 100000;  // rejected draws allowed per accepted path
    std::uint64_t seed = 1;
};

struct NmfFactorization {
    Matrix L;                          // n × m, columns of unit weighted norm
    Matrix Y;                          // m × s
    std::vector<double> objective;     // ‖F − LY‖²_F after each iteration
    bool used_fallback = false;        // multiplicative updates replaced HALS
    int reseeded = 0;                  // collapsed columns reinitialized
};

struct NmfReport {
    NmfFactorization factorization;
    double relative_error = 0.0;       // ‖F − LY‖_F / ‖F‖_F
    double acceptance_rate = 0.0;
    long draws = 0;
};

/// Zero-mean GP paths on `grid` conditioned on f ≥ 0, by rejection. A draw with max f ≤ 0
/// is accepted as −f, which has the same law.
inline Matrix sample_truncated_gp_paths(const KernelSpec& kernel, const std::vector<Point>& grid, int s,
                                        Rng& rng, long retry_budget, long* draws_out = nullptr) {
    const Matrix S = psd_sqrt(kernel_matrix(kernel, grid));
    const auto n = static_cast<Eigen::Index>(grid.size());
    Matrix F(n, s);
    int accepted = 0;
    long draws = 0, since_accept = 0;
    const Eigen::Index batch = 256;
    while (accepted < s) {
        Matrix W(n, batch);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (Eigen::Index j = 0; j < batch; ++j)
            for (Eigen::Index i = 0; i < n; ++i) W(i, j) = nd(rng);
        const Matrix P = S * W;
        for (Eigen::Index j = 0; j < batch && accepted < s; ++j) {
            ++draws;
            ++since_accept;
            const double lo = P.col(j).minCoeff(), hi = P.col(j).maxCoeff();
            if (lo >= 0) F.col(accepted++) = P.col(j);
            else if (hi <= 0) F.col(accepted++) = -P.col(j);
            else {
                if (since_accept > retry_budget)
                    throw SamplingFailureError("truncated GP rejection sampling exceeded " + std::to_string(retry_budget) +
                                               " draws for one path; use a smoother kernel (larger lengthscale) "
                                               "or a larger lower bound l");
                continue;
            }
            since_accept = 0;
        }
    }
    if (draws_out) *draws_out = draws;
    return F;
}

namespace detail {

inline double weighted_norm(const Vector& v, double w) { return std::sqrt(w * v.squaredNorm()); }

inline double nmf_objective(const Matrix& F, const Matrix& L, const Matrix& Y) { return (F - L * Y).squaredNorm(); }

inline void normalize_columns(Matrix& L, Matrix& Y, double w) {
    for (Eigen::Index j = 0; j < L.cols(); ++j) {
        const double c = weighted_norm(L.col(j), w);
        if (c > 0) {
            L.col(j) /= c;
            Y.row(j) *= c;
        }
    }
}

}  // namespace detail

/// min ‖F − LY‖²_F over L, Y ≥ 0 by hierarchical alternating least squares. Column norms
/// ‖L e_j‖² = w·Σ_i L_ij² are fixed to 1 with compensating scaling of Y.
inline NmfFactorization nmf_factorize(const Matrix& F, int m, double grid_weight, int iterations, std::uint64_t seed) {
    const Eigen::Index n = F.rows(), s = F.cols();
    if (m < 1 || m > n) throw ParameterError("nmf: need 1 <= m <= number of grid points");
    if (s < m) throw ParameterError("nmf: need at least m sample paths");
    if ((F.array() < 0).any()) throw ParameterError("nmf: data matrix must be nonnegative");
    Rng rng = rng_stream(seed, "nmf-init");

    // Initialize L from distinct sample paths plus a small positive floor.
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(s));
    for (Eigen::Index j = 0; j < s; ++j) idx[static_cast<std::size_t>(j)] = j;
    std::shuffle(idx.begin(), idx.end(), rng);
    NmfFactorization out;
    out.L.resize(n, m);
    const double floor = 1e-3 * std::max(F.maxCoeff(), 1e-300);
    for (int j = 0; j < m; ++j) out.L.col(j) = F.col(idx[static_cast<std::size_t>(j)]).array() + floor;
    out.Y = Matrix::Zero(m, s);
    detail::normalize_columns(out.L, out.Y, grid_weight);

    auto hals_y = [&](Matrix& L, Matrix& Y) {
        const Matrix LtF = L.transpose() * F;
        const Matrix LtL = L.transpose() * L;
        for (int j = 0; j < m; ++j) {
            if (LtL(j, j) <= 0) { Y.row(j).setZero(); continue; }
            Eigen::RowVectorXd row = (LtF.row(j) - LtL.row(j) * Y + LtL(j, j) * Y.row(j)) / LtL(j, j);
            Y.row(j) = row.cwiseMax(0.0);
        }
    };
    auto hals_l = [&](Matrix& L, Matrix& Y) {
        const Matrix FYt = F * Y.transpose();
        const Matrix YYt = Y * Y.transpose();
        for (int j = 0; j < m; ++j) {
            if (YYt(j, j) <= 0) continue;
            Vector col = (FYt.col(j) - L * YYt.col(j) + YYt(j, j) * L.col(j)) / YYt(j, j);
            L.col(j) = col.cwiseMax(0.0);
        }
    };
    auto reseed = [&](Matrix& L, Matrix& Y) {
        for (int j = 0; j < m; ++j) {
            if (L.col(j).maxCoeff() > 0) continue;
            const Matrix R = (F - L * Y).cwiseMax(0.0);
            Eigen::Index best = 0;
            R.colwise().squaredNorm().maxCoeff(&best);
            L.col(j) = R.col(best);
            if (L.col(j).maxCoeff() <= 0) {
                Eigen::Index at = 0;
                F.rowwise().sum().maxCoeff(&at);
                L(at, j) = 1.0;
            }
            L.col(j) /= detail::weighted_norm(L.col(j), grid_weight);
            Y.row(j).setZero();
            ++out.reseeded;
        }
    };

    hals_y(out.L, out.Y);
    double prev = detail::nmf_objective(F, out.L, out.Y);
    for (int it = 0; it < iterations; ++it) {
        Matrix L = out.L, Y = out.Y;
        hals_l(L, Y);
        reseed(L, Y);
        detail::normalize_columns(L, Y, grid_weight);
        hals_y(L, Y);
        double obj = detail::nmf_objective(F, L, Y);
        if (!std::isfinite(obj) || !L.allFinite() || !Y.allFinite()) {
            // Multiplicative updates from the last good iterate.
            out.used_fallback = true;
            L = out.L;
            Y = out.Y;
            const double eps = 1e-300;
            Y = Y.cwiseProduct((L.transpose() * F).cwiseQuotient((L.transpose() * L * Y).array().max(eps).matrix()));
            L = L.cwiseProduct((F * Y.transpose()).cwiseQuotient((L * Y * Y.transpose()).array().max(eps).matrix()));
            detail::normalize_columns(L, Y, grid_weight);
            obj = detail::nmf_objective(F, L, Y);
            if (!std::isfinite(obj)) throw NumericalError("nmf: non-finite objective at iteration " + std::to_string(it));
        }
        out.L = std::move(L);
        out.Y = std::move(Y);
        out.objective.push_back(obj);
        if (prev - obj <= 1e-15 * prev && it > 10) {
            // Converged; pad the history so callers see one entry per iteration.
            while (static_cast<int>(out.objective.size()) < iterations) out.objective.push_back(obj);
            break;
        }
        prev = obj;
    }
    return out;
}

namespace detail {

// True when column `col` (values on a regular grid) has a second local peak within 1% of its maximum.
inline bool has_near_tie(const Vector& col, const std::vector<std::size_t>& shape, Eigen::Index argmax) {
    const double top = col(argmax);
    if (top <= 0) return false;
    const auto n = static_cast<std::size_t>(col.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(i) == argmax) continue;
        const double v = col(static_cast<Eigen::Index>(i));
        if (v < 0.99 * top) continue;
        // Local maximum over axis neighbours, and not part of the argmax plateau.
        bool peak = true, adjacent = false;
        std::size_t stride = 1, rem = i;
        for (std::size_t k = 0; k < shape.size(); ++k) {
            const std::size_t c = rem % shape[k];
            rem /= shape[k];
            if (c > 0) {
                peak = peak && v >= col(static_cast<Eigen::Index>(i - stride));
                adjacent = adjacent || static_cast<Eigen::Index>(i - stride) == argmax;
            }
            if (c + 1 < shape[k]) {
                peak = peak && v >= col(static_cast<Eigen::Index>(i + stride));
                adjacent = adjacent || static_cast<Eigen::Index>(i + stride) == argmax;
            }
            stride *= shape[k];
        }
        if (peak && !adjacent) return true;
    }
    return false;
}

}  // namespace detail

/// Builds an m-function basis from s truncated-GP paths on a regular grid.
inline RawBasis build_nmf_basis(const KernelSpec& kernel, const Domain& domain, int m, const NmfOptions& opt = {},
                                NmfReport* report = nullptr) {
    if (!(kernel.domain == domain)) throw ParameterError("nmf basis: kernel and basis domains differ");
    const int d = domain.dim();
    const int n_axis = opt.n_grid > 0 ? opt.n_grid : (d == 1 ? 256 : 64);
    const int s = opt.n_samples > 0 ? opt.n_samples : 20 * m;
    if (n_axis < 2) throw ParameterError("nmf basis: grid needs at least 2 points per axis");
    const auto grid = regular_grid(domain, n_axis);
    if (m > static_cast<int>(grid.size())) throw ParameterError("nmf basis: m exceeds the number of grid points");
    if (s < m) throw ParameterError("nmf basis: need at least m samples");

    Rng rng = rng_stream(opt.seed, "nmf-paths");
    long draws = 0;
    const Matrix F = sample_truncated_gp_paths(kernel, grid, s, rng, opt.retry_budget, &draws);
    double w = 1.0;
    for (int k = 0; k < d; ++k) w *= domain.width(k) / (n_axis - 1);
    NmfFactorization fac = nmf_factorize(F, m, w, opt.iterations, opt.seed);

    // Order columns by the grid index of their peak.
    std::vector<Eigen::Index> peak(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) fac.L.col(j).maxCoeff(&peak[static_cast<std::size_t>(j)]);
    std::vector<int> order(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) order[static_cast<std::size_t>(j)] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return peak[static_cast<std::size_t>(a)] < peak[static_cast<std::size_t>(b)]; });
    Matrix L(fac.L.rows(), m), Y(m, fac.Y.cols());
    for (int j = 0; j < m; ++j) {
        L.col(j) = fac.L.col(order[static_cast<std::size_t>(j)]);
        Y.row(j) = fac.Y.row(order[static_cast<std::size_t>(j)]);
    }
    fac.L = std::move(L);
    fac.Y = std::move(Y);

    RawBasis b;
    b.kind = BasisKind::nmf;
    b.domain = domain;
    b.per_axis = n_axis;
    for (int k = 0; k < d; ++k) b.grid_axes.push_back(detail::linspace(domain.lower(k), domain.upper(k), n_axis));
    b.table = fac.L;
    const std::vector<std::size_t> shape(static_cast<std::size_t>(d), static_cast<std::size_t>(n_axis));
    for (int j = 0; j < m; ++j) {
        Eigen::Index at = 0;
        fac.L.col(j).maxCoeff(&at);
        b.nodes.push_back(grid[static_cast<std::size_t>(at)]);
        if (detail::has_near_tie(fac.L.col(j), shape, at)) b.near_tie_columns.push_back(j);
    }
    if (report) {
        report->relative_error = std::sqrt(detail::nmf_objective(F, fac.L, fac.Y)) / F.norm();
        report->acceptance_rate = static_cast<double>(s) / static_cast<double>(std::max<long>(draws, 1));
        report->draws = draws;
        report->factorization = std::move(fac);
    }
    return b;
}

/// Persists a tabulated basis as `<prefix>.csv` (grid values, one column per function) and
/// `<prefix>.json` (metadata).
inline void save_tabulated_basis(const RawBasis& b, const std::string& prefix, const nlohmann::json& extra = {},
                                 const std::string& preamble = "") {
    if (b.kind != BasisKind::nmf) throw ParameterError("save_tabulated_basis: basis is not tabulated");
    std::ofstream out(prefix + ".csv");
    if (!out) throw Error("cannot write " + prefix + ".csv");
    if (!preamble.empty()) out << preamble << "\n";
    out << "x" << (b.dim() == 2 ? ",y" : "");
    for (int j = 0; j < b.size(); ++j) out << ",phi_" << j;
    out << "\n";
    const auto grid = detail::tensor_nodes(b.domain, b.grid_axes);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (int k = 0; k < b.dim(); ++k) out << (k ? "," : "") << csv::fmt(grid[g](k));
        for (int j = 0; j < b.size(); ++j) out << "," << csv::fmt(b.table(static_cast<Eigen::Index>(g), j));
        out << "\n";
    }
    nlohmann::json meta = extra;
    meta["kind"] = "nmf";
    meta["m"] = b.size();
    meta["grid_per_axis"] = b.per_axis;
    meta["domain"] = {{"lower", b.domain.lower()}, {"upper", b.domain.upper()}};
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& t : b.nodes) nodes.push_back(std::vector<double>(t.data(), t.data() + t.size()));
    meta["nodes"] = nodes;
    meta["near_tie_columns"] = b.near_tie_columns;
    std::ofstream js(prefix + ".json");
    js << meta.dump(2) << "\n";
}

inline RawBasis load_tabulated_basis(const std::string& prefix) {
    std::ifstream js(prefix + ".json");
    if (!js) throw ParseError("cannot open " + prefix + ".json");
    nlohmann::json meta;
    try {
        js >> meta;
    } catch (const std::exception& e) {
        throw ParseError(prefix + ".json: " + e.what());
    }
    RawBasis b;
    b.kind = BasisKind::nmf;
    b.domain = Domain(meta.at("domain").at("lower").get<std::vector<double>>(),
                      meta.at("domain").at("upper").get<std::vector<double>>());
    b.per_axis = meta.at("grid_per_axis").get<int>();
    const int m = meta.at("m").get<int>();
    for (int k = 0; k < b.dim(); ++k)
        b.grid_axes.push_back(detail::linspace(b.domain.lower(k), b.domain.upper(k), b.per_axis));
    for (const auto& t : meta.at("nodes")) {
        const auto v = t.get<std::vector<double>>();
        b.nodes.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    b.near_tie_columns = meta.value("near_tie_columns", std::vector<int>{});
    const auto t = csv::read(prefix + ".csv");
    const auto n = static_cast<Eigen::Index>(std::pow(b.per_axis, b.dim()));
    if (static_cast<Eigen::Index>(t.rows.size()) != n) throw ParseError(prefix + ".csv: wrong number of grid rows");
    b.table.resize(n, m);
    for (Eigen::Index g = 0; g < n; ++g)
        for (int j = 0; j < m; ++j) {
            const int c = t.column("phi_" + std::to_string(j));
            if (c < 0) throw ParseError(prefix + ".csv: missing column phi_" + std::to_string(j));
            b.table(g, j) = csv::to_double(t.rows[static_cast<std::size_t>(g)][static_cast<std::size_t>(c)],
                                           prefix + ".csv:" + std::to_string(t.line_numbers[static_cast<std::size_t>(g)]));
        }
    return b;
}

}  // namespace coxsense
