#pragma once

// Langevin samplers for exp(−U) restricted to the constraint polytope.

#include "coxsense/posterior.hpp"

namespace coxsense {

struct MyulaConfig {
    int steps = 1000;
    double burn_in = 0.5;
    std::optional<double> step_size;   // default 1/(L+1)
    int power_iterations = 50;
    std::uint64_t seed = 0;
    bool keep_chain = true;            // otherwise only the final iterate is returned
};

struct MirrorConfig {
    int steps = 1000;
    double burn_in = 0.5;
    double step_size = 1e-3;
    double upper = 0.0;                // box cap u on the raw coefficients; must exceed l
    std::uint64_t seed = 0;
    bool keep_chain = true;
};

struct Chain {
    std::vector<Vector> samples;       // post-burn-in iterates
    double step_size = 0.0;
    double lipschitz = 0.0;
};

inline void validate(const MyulaConfig& c) {
    if (c.steps < 1) throw ParameterError("myula: steps must be >= 1");
    if (!(c.burn_in >= 0 && c.burn_in < 1)) throw ParameterError("myula: burn-in fraction must lie in [0, 1)");
    if (c.step_size && !(*c.step_size > 0 && *c.step_size <= 1)) throw ParameterError("myula: step size must lie in (0, 1]");
    if (c.power_iterations < 1) throw ParameterError("myula: power iterations must be >= 1");
}

inline void validate(const MirrorConfig& c) {
    if (c.steps < 1) throw ParameterError("mirrored: steps must be >= 1");
    if (!(c.burn_in >= 0 && c.burn_in < 1)) throw ParameterError("mirrored: burn-in fraction must lie in [0, 1)");
    if (!(c.step_size > 0)) throw ParameterError("mirrored: step size must be positive");
}

/// θ ← (1−η)θ − η∇U(θ) + η·pr(θ) + √(2η)·w, starting at θ0. Iterates after the burn-in are
/// passed to `visit(step, θ)`.
template <class Grad, class Project, class Visit>
void myula_chain(Grad&& grad, Project&& project, Vector theta, double eta, int steps, double burn_in, Rng& rng,
                 Visit&& visit) {
    const double noise = std::sqrt(2.0 * eta);
    const int first = static_cast<int>(std::floor(burn_in * steps));
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector w(theta.size());
    for (int k = 0; k < steps; ++k) {
        const Vector g = grad(theta);
        const Vector p = project(theta);
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = nd(rng);
        theta = (1.0 - eta) * theta - eta * g + eta * p + noise * w;
        if (!theta.allFinite()) throw DivergenceError("myula: non-finite iterate at step " + std::to_string(k + 1));
        if (k >= first) visit(k + 1, theta);
    }
}

/// Largest Hessian eigenvalue at θ by power iteration.
inline double hessian_lipschitz(const PosteriorModel& model, const Vector& theta, int iterations) {
    const Matrix H = model.energy_hess(theta);
    return power_iteration(H, iterations);
}

/// MYULA chain started at the MAP with step size 1/(L+1).
inline Chain myula_sample(PosteriorModel& model, const MyulaConfig& cfg, Rng& rng) {
    validate(cfg);
    const Vector& start = model.map();
    Chain out;
    out.lipschitz = hessian_lipschitz(model, start, cfg.power_iterations);
    out.step_size = cfg.step_size ? *cfg.step_size : 1.0 / (out.lipschitz + 1.0);
    if (!(out.step_size > 0 && out.step_size <= 1)) throw ParameterError("myula: step size must lie in (0, 1]");
    Vector last = start;
    myula_chain([&](const Vector& t) { return model.energy_grad(t); }, [&](const Vector& t) { return model.project(t); },
                start, out.step_size, cfg.steps, cfg.burn_in, rng, [&](int, const Vector& t) {
                    if (cfg.keep_chain) out.samples.push_back(t);
                    else last = t;
                });
    if (!cfg.keep_chain) out.samples.push_back(last);
    return out;
}

inline Chain myula_sample(PosteriorModel& model, const MyulaConfig& cfg) {
    Rng rng = rng_stream(cfg.seed, "myula");
    return myula_sample(model, cfg, rng);
}

/// Affine box map θ = D·z + v with z ∈ (−1, 1)ᵐ, D = ½diag(Γ⁻¹(u−l)1), v = ½Γ⁻¹(u+l)1.
struct MirrorMap {
    Vector D;
    Vector v;

    MirrorMap(const Matrix& Gamma, double l, double u) {
        if (!(u > l)) throw ParameterError("mirrored: upper cap u must exceed the lower bound l");
        const Vector g1 = Gamma.partialPivLu().solve(Vector::Ones(Gamma.rows()));
        D = 0.5 * (u - l) * g1;
        v = 0.5 * (u + l) * g1;
        if ((D.array().abs() < 1e-300).any()) throw ParameterError("mirrored: degenerate box map (Γ⁻¹1 has a zero entry)");
    }

    [[nodiscard]] Vector primal(const Vector& y) const {
        Vector z = y.array().tanh().matrix();
        const double edge = std::nextafter(1.0, 0.0);
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = std::clamp(z(i), -edge, edge);
        return D.cwiseProduct(z) + v;
    }

    [[nodiscard]] Vector dual(const Vector& theta) const {
        Vector z = (theta - v).cwiseQuotient(D);
        const double edge = 1.0 - 1e-9;
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = std::clamp(z(i), -edge, edge);
        return z.array().atanh().matrix();
    }
};

namespace detail {

inline double log_cosh(double y) {
    const double a = std::abs(y);
    return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

}  // namespace detail

/// W(y) = U(D·tanh(y) + v) + Σ 2·log cosh(y_i).
inline double mirrored_potential(const PosteriorModel& model, const MirrorMap& map, const Vector& y) {
    double w = model.energy(map.primal(y));
    for (Eigen::Index i = 0; i < y.size(); ++i) w += 2.0 * detail::log_cosh(y(i));
    return w;
}

/// ∇W(y) = sech²(y) ⊙ D ⊙ ∇U(θ) + 2·tanh(y).
inline Vector mirrored_grad(const PosteriorModel& model, const MirrorMap& map, const Vector& y) {
    const Vector th = y.array().tanh().matrix();
    const Vector sech2 = (1.0 - th.array().square()).matrix();
    const Vector g = model.energy_grad(map.primal(y));
    return sech2.cwiseProduct(map.D.cwiseProduct(g)) + 2.0 * th;
}

/// Unadjusted Langevin on the dual potential W; returns primal iterates, all strictly
/// inside the box.
inline Chain mirrored_sample(PosteriorModel& model, const MirrorConfig& cfg, Rng& rng) {
    validate(cfg);
    const MirrorMap map(model.basis().Gamma(), model.lower_bound(), cfg.upper);
    Vector y = map.dual(model.map());
    const double eta = cfg.step_size;
    const double noise = std::sqrt(2.0 * eta);
    const int first = static_cast<int>(std::floor(cfg.burn_in * cfg.steps));
    std::normal_distribution<double> nd(0.0, 1.0);
    Chain out;
    out.step_size = eta;
    Vector w(y.size());
    for (int k = 0; k < cfg.steps; ++k) {
        const Vector g = mirrored_grad(model, map, y);
        if (!g.allFinite()) throw DivergenceError("mirrored: non-finite gradient at step " + std::to_string(k + 1));
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = nd(rng);
        y += -eta * g + noise * w;
        if (k >= first && (cfg.keep_chain || k + 1 == cfg.steps)) out.samples.push_back(map.primal(y));
    }
    return out;
}

inline Chain mirrored_sample(PosteriorModel& model, const MirrorConfig& cfg) {
    Rng rng = rng_stream(cfg.seed, "mirrored");
    return mirrored_sample(model, cfg, rng);
}

enum class SamplerKind { myula, mirrored };

inline SamplerKind sampler_kind_from_string(const std::string& s) {
    if (s == "myula") return SamplerKind::myula;
    if (s == "mirrored") return SamplerKind::mirrored;
    throw ParameterError("unknown sampler '" + s + "' (valid: myula, mirrored)");
}

inline std::string to_string(SamplerKind k) { return k == SamplerKind::myula ? "myula" : "mirrored"; }

struct SamplerConfig {
    SamplerKind kind = SamplerKind::myula;
    MyulaConfig myula;
    MirrorConfig mirror;
};

/// Runs one chain from the MAP and returns its final iterate projected onto the polytope.
inline Vector draw_posterior_sample(PosteriorModel& model, const SamplerConfig& cfg, Rng& rng) {
    Chain c;
    if (cfg.kind == SamplerKind::myula) {
        MyulaConfig m = cfg.myula;
        m.keep_chain = false;
        c = myula_sample(model, m, rng);
    } else {
        MirrorConfig m = cfg.mirror;
        m.keep_chain = false;
        c = mirrored_sample(model, m, rng);
    }
    return model.project(c.samples.back());
}

/// `step,theta_1..theta_m`; step counts from the first post-burn-in iterate.
inline void write_chain_csv(const Chain& chain, const std::string& path, const std::string& preamble = "") {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    if (!preamble.empty()) out << preamble << "\n";
    const Eigen::Index m = chain.samples.empty() ? 0 : chain.samples.front().size();
    out << "step";
    for (Eigen::Index j = 0; j < m; ++j) out << ",theta_" << (j + 1);
    out << "\n";
    for (std::size_t k = 0; k < chain.samples.size(); ++k) {
        out << (k + 1);
        for (Eigen::Index j = 0; j < m; ++j) out << "," << csv::fmt(chain.samples[k](j));
        out << "\n";
    }
}

}  // namespace coxsense
