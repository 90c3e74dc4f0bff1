#pragma once

// Action sets, costs and acquisition rules.

#include "coxsense/point_process.hpp"
#include "coxsense/samplers.hpp"

#include <functional>

namespace coxsense {

/// Hierarchical bisection of the domain. Ids are breadth-first: depth by depth, and within a
/// depth row-major with x fastest. Leaves-only sets are numbered 0..n−1 in the same order.
struct ActionSet {
    Domain domain;
    int max_depth = 0;
    bool include_ancestors = true;
    std::vector<Region> regions;

    [[nodiscard]] std::size_t size() const { return regions.size(); }
};

inline ActionSet build_action_set(const Domain& domain, int max_depth, bool include_ancestors) {
    if (max_depth < 0) throw ParameterError("action set: depth must be >= 0");
    const int d = domain.dim();
    if (static_cast<double>(max_depth) * d > 24) throw CapacityError("action set: too many regions");
    ActionSet set{domain, max_depth, include_ancestors, {}};
    std::vector<int> level_start;   // id of the first region at each depth
    int next_id = 0;
    for (int depth = include_ancestors ? 0 : max_depth; depth <= max_depth; ++depth) {
        level_start.push_back(next_id);
        const int per_axis = 1 << depth;
        int cells = 1;
        for (int k = 0; k < d; ++k) cells *= per_axis;
        for (int idx = 0; idx < cells; ++idx) {
            Region r;
            r.id = next_id++;
            r.depth = depth;
            r.lower.resize(static_cast<std::size_t>(d));
            r.upper.resize(static_cast<std::size_t>(d));
            int rem = idx, parent_idx = 0, stride = 1;
            for (int k = 0; k < d; ++k) {
                const int c = rem % per_axis;
                rem /= per_axis;
                const double h = domain.width(k) / per_axis;
                r.lower[static_cast<std::size_t>(k)] = domain.lower(k) + c * h;
                r.upper[static_cast<std::size_t>(k)] = c + 1 == per_axis ? domain.upper(k) : domain.lower(k) + (c + 1) * h;
                parent_idx += (c / 2) * stride;
                stride *= std::max(1, per_axis / 2);
            }
            if (include_ancestors && depth > 0) r.parent = level_start[static_cast<std::size_t>(depth - 1)] + parent_idx;
            set.regions.push_back(std::move(r));
        }
    }
    return set;
}

enum class CostKind { uniform, fixed };

struct CostModel {
    CostKind kind = CostKind::uniform;
    double c1 = 1.0;
    double c2 = 0.0;
};

/// w(A) = C₁|A| (uniform) or C₁|A| + C₂ (fixed).
inline double cost(const CostModel& model, const Region& A) {
    const double w = model.c1 * A.volume() + (model.kind == CostKind::fixed ? model.c2 : 0.0);
    return w;
}

enum class Algorithm { thompson, top2_max, top2_levelset, ucb_laplace, v_optimal, epsilon_greedy, random };

inline const std::vector<std::pair<std::string, Algorithm>>& algorithm_names() {
    static const std::vector<std::pair<std::string, Algorithm>> names = {
        {"thompson", Algorithm::thompson},         {"top2-max", Algorithm::top2_max},
        {"top2-levelset", Algorithm::top2_levelset}, {"ucb-laplace", Algorithm::ucb_laplace},
        {"v-optimal", Algorithm::v_optimal},       {"epsilon-greedy", Algorithm::epsilon_greedy},
        {"random", Algorithm::random}};
    return names;
}

inline std::string to_string(Algorithm a) {
    for (const auto& [n, v] : algorithm_names())
        if (v == a) return n;
    return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
    std::string valid;
    for (const auto& [n, v] : algorithm_names()) {
        if (n == s) return v;
        valid += (valid.empty() ? "" : ", ") + n;
    }
    throw ConfigError("unknown algorithm '" + s + "' (valid: " + valid + ")");
}

enum class VOptObjective { levelset, maximum };

struct AlgorithmParams {
    double beta = 3.0;                    // Laplace ellipsoid radius
    double epsilon0 = 1.0;                // ε-greedy
    int n_resamples = 10;                 // V-optimal
    int resample_cap = 50;                // Top2
    bool thompson_ignore_cost = false;
    VOptObjective vopt_objective = VOptObjective::levelset;
    bool vopt_roi_from_ucb = false;       // levelset region of interest {ucb ≥ τ} instead of {lcb ≥ τ}
};

/// Everything an acquisition rule needs that does not change during a run.
struct SensingContext {
    std::shared_ptr<const BasisModel> basis;
    ActionSet actions;
    CostModel cost_model;
    double duration = 1.0;
    std::vector<double> costs;             // w(A) per region
    RegionIntegrals integrals;             // ψ_A per region
    std::vector<Point> grid;               // evaluation grid (cell centres)
    double cell_volume = 0.0;
    Matrix grid_features;                  // rows Φ(x_g)ᵀ
    std::vector<int> cheapest_containing;  // per grid point: lowest-cost region containing it
    std::vector<std::vector<int>> members; // per region: grid points inside

    [[nodiscard]] std::size_t n_regions() const { return actions.size(); }
    [[nodiscard]] const Region& region(std::size_t i) const { return actions.regions[i]; }
    [[nodiscard]] Vector psi(std::size_t i) const { return integrals.psi.col(static_cast<Eigen::Index>(i)); }
};

inline SensingContext make_sensing_context(std::shared_ptr<const BasisModel> basis, ActionSet actions,
                                           CostModel cost_model, double duration, int grid_per_axis = 0) {
    if (!(duration > 0)) throw ParameterError("duration must be positive");
    if (cost_model.c1 < 0 || cost_model.c2 < 0) throw ParameterError("cost constants must be nonnegative");
    SensingContext ctx;
    ctx.basis = std::move(basis);
    ctx.actions = std::move(actions);
    ctx.cost_model = cost_model;
    ctx.duration = duration;
    for (const auto& r : ctx.actions.regions) {
        const double w = cost(cost_model, r);
        if (!(w > 0)) throw ParameterError("cost of region " + std::to_string(r.id) + " is not positive");
        ctx.costs.push_back(w);
    }
    ctx.integrals = region_integrals(*ctx.basis, ctx.actions.regions);
    const Domain& D = ctx.basis->domain();
    const int per_axis = grid_per_axis > 0 ? grid_per_axis : default_resolution(D.dim());
    ctx.grid = regular_grid(D, per_axis, true);
    ctx.cell_volume = D.volume() / static_cast<double>(ctx.grid.size());
    ctx.grid_features = ctx.basis->feature_matrix(ctx.grid);
    ctx.members.resize(ctx.n_regions());
    ctx.cheapest_containing.assign(ctx.grid.size(), -1);
    for (std::size_t g = 0; g < ctx.grid.size(); ++g) {
        for (std::size_t a = 0; a < ctx.n_regions(); ++a) {
            if (!ctx.actions.regions[a].contains(ctx.grid[g])) continue;
            ctx.members[a].push_back(static_cast<int>(g));
            const int cur = ctx.cheapest_containing[g];
            if (cur < 0 || ctx.costs[a] < ctx.costs[static_cast<std::size_t>(cur)]) ctx.cheapest_containing[g] = static_cast<int>(a);
        }
        if (ctx.cheapest_containing[g] < 0) throw InvariantViolation("action set does not cover the evaluation grid");
    }
    return ctx;
}

/// Outcome of one acquisition.
struct Decision {
    std::size_t region = 0;                 // index into the action set
    std::vector<std::string> flags;
    bool task_complete = false;
};

/// Source of posterior samples: each call runs a fresh chain.
using SampleSource = std::function<Vector()>;

/// Per-region sensing counts, needed by fallbacks that prefer unexplored regions.
inline std::vector<int> sensing_counts(const SensingContext& ctx, const ObservationLog& log) {
    std::vector<int> n(ctx.n_regions(), 0);
    for (const auto& o : log.entries())
        for (std::size_t a = 0; a < ctx.n_regions(); ++a)
            if (ctx.region(a).id == o.region.id) ++n[a];
    return n;
}

inline std::size_t argmax_ratio(const SensingContext& ctx, const Vector& theta, bool ignore_cost = false) {
    const Vector counts = ctx.duration * (ctx.integrals.psi.transpose() * theta);
    std::vector<double> score(ctx.n_regions());
    for (std::size_t a = 0; a < score.size(); ++a)
        score[a] = counts(static_cast<Eigen::Index>(a)) / (ignore_cost ? 1.0 : ctx.costs[a]);
    return argmax_ties(score);
}

/// argmax_A Δψ_Aᵀθ̃ / w(A).
inline Decision act_cox_thompson(const SensingContext& ctx, const Vector& theta_sample, bool ignore_cost = false) {
    return {argmax_ratio(ctx, theta_sample, ignore_cost), {}, false};
}

inline std::size_t grid_argmax(const SensingContext& ctx, const Vector& theta) {
    const Vector v = ctx.grid_features * theta;
    return argmax_ties(std::vector<double>(v.data(), v.data() + v.size()));
}

/// Top-two sampling for the maximizer: redraw until the recommended grid maxima fall in
/// different cheapest regions, then sense the region of one of them chosen by a fair coin.
inline Decision act_top2_max(const SensingContext& ctx, const SampleSource& sample, Rng& coin, int cap = 50) {
    if (ctx.n_regions() == 1) return {0, {}, false};
    const std::size_t x1 = grid_argmax(ctx, sample());
    const int leaf1 = ctx.cheapest_containing[x1];
    for (int k = 0; k < cap; ++k) {
        const std::size_t x2 = grid_argmax(ctx, sample());
        const int leaf2 = ctx.cheapest_containing[x2];
        if (leaf2 != leaf1) {
            std::bernoulli_distribution flip(0.5);
            return {static_cast<std::size_t>(flip(coin) ? leaf1 : leaf2), {}, false};
        }
    }
    return {static_cast<std::size_t>(leaf1), {"top2_converged"}, false};
}

/// Lowest-cost region never sensed; when all have been sensed, the least-sensed one.
inline std::size_t least_explored_region(const SensingContext& ctx, const ObservationLog& log) {
    const auto n = sensing_counts(ctx, log);
    std::size_t best = 0;
    for (std::size_t a = 1; a < n.size(); ++a) {
        if (n[a] < n[best] || (n[a] == n[best] && ctx.costs[a] < ctx.costs[best])) best = a;
    }
    return best;
}

/// Disagreement score per region for two samples: (1/w(A))·Σ_{x∈A} |Φ(x)ᵀ(θ₁−θ₂)|·1[S₁⊕S₂](x)·vol.
inline std::vector<double> levelset_scores(const SensingContext& ctx, const Vector& t1, const Vector& t2, double tau) {
    const Vector v1 = ctx.grid_features * t1, v2 = ctx.grid_features * t2;
    std::vector<double> w(ctx.grid.size());
    for (std::size_t g = 0; g < w.size(); ++g) {
        const auto i = static_cast<Eigen::Index>(g);
        const bool s1 = v1(i) >= tau, s2 = v2(i) >= tau;
        w[g] = s1 != s2 ? std::abs(v1(i) - v2(i)) * ctx.cell_volume : 0.0;
    }
    std::vector<double> score(ctx.n_regions(), 0.0);
    for (std::size_t a = 0; a < score.size(); ++a) {
        double s = 0.0;
        for (int g : ctx.members[a]) s += w[static_cast<std::size_t>(g)];
        score[a] = s / ctx.costs[a];
    }
    return score;
}

/// Top-two sampling for the level set {λ ≥ τ}.
inline Decision act_top2_levelset(const SensingContext& ctx, const SampleSource& sample, const ObservationLog& log,
                                  double tau, int cap = 50) {
    if (!(tau > 0)) throw ParameterError("top2-levelset: threshold τ must be positive");
    if (ctx.n_regions() == 1) return {0, {}, false};
    const Vector t1 = sample();
    const Vector s1 = ctx.grid_features * t1;
    for (int k = 0; k < cap; ++k) {
        const Vector t2 = sample();
        const Vector s2 = ctx.grid_features * t2;
        bool differ = false;
        for (Eigen::Index g = 0; g < s1.size() && !differ; ++g) differ = (s1(g) >= tau) != (s2(g) >= tau);
        if (differ) return {argmax_ties(levelset_scores(ctx, t1, t2, tau)), {}, false};
    }
    return {least_explored_region(ctx, log), {"levelset_fallback"}, false};
}

/// argmax_A ucb(Δψ_A)/w(A) over the Laplace ellipsoid ∩ polytope.
inline Decision act_ucb_laplace(const SensingContext& ctx, const PosteriorModel& post, double beta) {
    const LaplaceBounds bounds(post, CredibleParams{beta});
    std::vector<double> score(ctx.n_regions());
    for (std::size_t a = 0; a < score.size(); ++a) score[a] = ctx.duration * bounds(ctx.psi(a)).ucb / ctx.costs[a];
    return {argmax_ties(score), {}, false};
}

/// Grid indices in the region of interest.
inline std::vector<int> region_of_interest(const SensingContext& ctx, const PosteriorModel& post, const AlgorithmParams& p,
                                           std::optional<double> tau) {
    const auto b = pointwise_bounds(post, ctx.grid, CredibleParams{p.beta});
    std::vector<int> roi;
    if (p.vopt_objective == VOptObjective::levelset) {
        if (!tau) throw ParameterError("v-optimal levelset objective needs a threshold τ");
        for (std::size_t g = 0; g < b.size(); ++g)
            if ((p.vopt_roi_from_ucb ? b[g].ucb : b[g].lcb) >= *tau) roi.push_back(static_cast<int>(g));
    } else {
        double best_lcb = -std::numeric_limits<double>::infinity();
        for (const auto& x : b) best_lcb = std::max(best_lcb, x.lcb);
        for (std::size_t g = 0; g < b.size(); ++g)
            if (b[g].ucb >= best_lcb) roi.push_back(static_cast<int>(g));
    }
    return roi;
}

/// (1/w(A))·Tr(M_R·(Σ_L + Σ_i Φ(x_i)Φ(x_i)ᵀ/(Φ(x_i)ᵀθ̂)²)⁻¹) for one simulated set of events.
inline double v_optimal_term(const Matrix& M_R, const Matrix& precision, const Matrix& event_features,
                             const Vector& theta_hat, const Vector& floors) {
    Matrix P = precision;
    for (Eigen::Index i = 0; i < event_features.rows(); ++i) {
        const Vector f = event_features.row(i).transpose();
        const double lam = std::max(f.dot(theta_hat), floors(i));
        P.noalias() += (f * f.transpose()) / (lam * lam);
    }
    const Eigen::LLT<Matrix> llt(P);
    if (llt.info() != Eigen::Success) throw NumericalError("v-optimal: updated precision is not positive definite");
    return llt.solve(M_R).trace();
}

/// Bayesian V-optimal design with the optimistic rate θ̂_A = argmax ψ_Aᵀθ over the Laplace
/// ellipsoid ∩ polytope.
inline Decision act_v_optimal(const SensingContext& ctx, const PosteriorModel& post, const AlgorithmParams& p,
                              std::optional<double> tau, Rng& rng) {
    const auto roi = region_of_interest(ctx, post, p, tau);
    if (roi.empty()) return {0, {"roi_empty"}, true};
    const int m = post.dim();
    Matrix M_R = Matrix::Zero(m, m);
    for (int g : roi) {
        const Vector f = ctx.grid_features.row(g).transpose();
        M_R.noalias() += ctx.cell_volume * f * f.transpose();
    }
    const LaplaceBounds bounds(post, CredibleParams{p.beta});
    const Vector& theta_hat = post.map();
    std::vector<double> score(ctx.n_regions());
    for (std::size_t a = 0; a < score.size(); ++a) {
        const Vector theta_a = bounds(ctx.psi(a)).argmax;
        RegionSampler sim(model_intensity(ctx.basis, theta_a), ctx.region(a));
        double acc = 0.0;
        for (int r = 0; r < p.n_resamples; ++r) {
            const auto draw = sim.draw(ctx.duration, rng);
            const Matrix F = ctx.basis->feature_matrix(draw.locations);
            Vector floors(F.rows());
            for (Eigen::Index i = 0; i < F.rows(); ++i)
                floors(i) = std::max(1e-12, ctx.basis->intensity_floor(draw.locations[static_cast<std::size_t>(i)]));
            acc += v_optimal_term(M_R, post.precision(), F, theta_hat, floors);
        }
        score[a] = acc / std::max(1, p.n_resamples) / ctx.costs[a];
    }
    return {argmin_ties(score), {}, false};
}

/// ε_t = min(1, ε₀/√t).
inline double exploration_probability(double epsilon0, int round) {
    return std::min(1.0, epsilon0 / std::sqrt(static_cast<double>(std::max(round, 1))));
}

inline Decision act_epsilon_greedy(const SensingContext& ctx, const Vector& theta_hat, double epsilon0, int round, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < exploration_probability(epsilon0, round)) {
        std::uniform_int_distribution<std::size_t> pick(0, ctx.n_regions() - 1);
        return {pick(rng), {"explore"}, false};
    }
    return {argmax_ratio(ctx, theta_hat), {}, false};
}

inline Decision act_random(const SensingContext& ctx, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, ctx.n_regions() - 1);
    return {pick(rng), {}, false};
}

}  // namespace coxsense
