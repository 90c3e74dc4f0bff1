#pragma once

// Ground-truth intensities and the per-round metrics measured against them.

#include "coxsense/sensing.hpp"

namespace coxsense {

/// 4·exp(−(x+1))·sin²(2πx) on [−1, 1].
inline double toy_intensity(const Point& x) {
    const double s = std::sin(2.0 * 3.14159265358979323846 * x(0));
    return 4.0 * std::exp(-(x(0) + 1.0)) * s * s;
}

/// Resolves `toy`, `constant:<c>` or `file:<path>` (grid CSV `x[,y],value`, nearest neighbour).
inline Intensity named_intensity(const std::string& spec, int dim) {
    if (spec == "toy") {
        if (dim != 1) throw ConfigError("truth 'toy' is one-dimensional");
        return toy_intensity;
    }
    if (spec.rfind("constant:", 0) == 0) {
        double c = 0;
        try {
            std::size_t pos = 0;
            c = std::stod(spec.substr(9), &pos);
            if (pos != spec.size() - 9) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError("truth '" + spec + "': constant is not a number");
        }
        if (!(c >= 0)) throw ConfigError("truth '" + spec + "': constant must be nonnegative");
        return [c](const Point&) { return c; };
    }
    if (spec.rfind("file:", 0) == 0) {
        auto grid = std::make_shared<TabulatedGrid>(TabulatedGrid::from_csv(spec.substr(5)));
        if (grid->dim() != dim) throw ConfigError("truth file dimension does not match the domain");
        return [grid](const Point& x) { return (*grid)(x); };
    }
    throw ConfigError("unknown truth '" + spec + "' (valid: toy, constant:<c>, file:<path>)");
}

/// λ* with everything the metrics need, evaluated on the sensing context's grids.
struct GroundTruth {
    Intensity lambda;
    std::vector<double> mu;            // Δ·∫_A λ* per region
    std::vector<double> grid_values;   // λ* on the evaluation grid
    double max_value = 0.0;
    std::size_t argmax = 0;
    std::size_t best_region = 0;       // A* = argmax μ_A / w(A)
    double best_ratio = 0.0;
    std::optional<double> tau;
    std::vector<char> level_set;       // λ* ≥ τ on the grid
};

inline GroundTruth make_ground_truth(Intensity lambda, const SensingContext& ctx, std::optional<double> tau = std::nullopt,
                                     int resolution = 0) {
    GroundTruth t;
    t.lambda = std::move(lambda);
    t.tau = tau;
    std::vector<double> ratio(ctx.n_regions());
    for (std::size_t a = 0; a < ctx.n_regions(); ++a) {
        t.mu.push_back(expected_count(t.lambda, ctx.region(a), ctx.duration, resolution));
        ratio[a] = t.mu[a] / ctx.costs[a];
    }
    t.best_region = argmax_ties(ratio);
    t.best_ratio = ratio[t.best_region];
    for (const auto& x : ctx.grid) {
        const double v = t.lambda(x);
        if (!(v >= 0)) throw ModelError("ground truth intensity is negative on the evaluation grid");
        t.grid_values.push_back(v);
    }
    t.argmax = argmax_ties(t.grid_values);
    t.max_value = t.grid_values[t.argmax];
    if (tau) {
        for (double v : t.grid_values) t.level_set.push_back(v >= *tau ? 1 : 0);
    }
    return t;
}

/// r = w(A)·μ_{A*}/w(A*) − μ_A.
inline double count_regret(const GroundTruth& truth, const SensingContext& ctx, std::size_t region) {
    return ctx.costs[region] * truth.best_ratio - truth.mu[region];
}

/// λ*_max − λ*(x̂) with x̂ the grid argmax of the MAP intensity.
inline double inference_regret(const GroundTruth& truth, const SensingContext& ctx, const Vector& theta_hat) {
    return truth.max_value - truth.grid_values[grid_argmax(ctx, theta_hat)];
}

/// F1 of the (+) class; 1 when both sets are empty.
inline double f1_score(const std::vector<char>& predicted, const std::vector<char>& actual) {
    if (predicted.size() != actual.size()) throw ParameterError("f1: label vectors differ in length");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] && actual[i]) ++tp;
        else if (predicted[i]) ++fp;
        else if (actual[i]) ++fn;
    }
    if (tp + fp + fn == 0) return 1.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

/// Level-set F1 of the MAP prediction {θ̂ᵀΦ ≥ τ} against {λ* ≥ τ} on the evaluation grid.
inline double level_set_f1(const GroundTruth& truth, const SensingContext& ctx, const Vector& theta_hat, double tau) {
    const Vector v = ctx.grid_features * theta_hat;
    std::vector<char> pred(static_cast<std::size_t>(v.size())), act(truth.grid_values.size());
    for (Eigen::Index g = 0; g < v.size(); ++g) pred[static_cast<std::size_t>(g)] = v(g) >= tau ? 1 : 0;
    for (std::size_t g = 0; g < act.size(); ++g) act[g] = truth.grid_values[g] >= tau ? 1 : 0;
    return f1_score(pred, act);
}

}  // namespace coxsense
