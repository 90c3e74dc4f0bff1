#pragma once

// Observation log, the energy U(θ) = −log posterior, its constrained minimizer and the
// Laplace ellipsoid bounds built around it.

#include "coxsense/basis.hpp"
#include "coxsense/qp.hpp"

#include <map>
#include <memory>
#include <nlohmann/json.hpp>

namespace coxsense {

struct Observation {
    int round = 0;
    Region region;
    double duration = 1.0;
    std::vector<Point> events;

    [[nodiscard]] int count() const { return static_cast<int>(events.size()); }
};

/// Append-only record of sensing outcomes.
class ObservationLog {
public:
    void append(Observation obs) {
        if (!(obs.duration > 0)) throw ParameterError("observation duration must be positive");
        for (const auto& e : obs.events) {
            if (!obs.region.contains(e))
                throw DomainError("event outside sensed region " + std::to_string(obs.region.id));
        }
        if (obs.round == 0) obs.round = static_cast<int>(entries_.size()) + 1;
        entries_.push_back(std::move(obs));
    }

    [[nodiscard]] const std::vector<Observation>& entries() const { return entries_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] bool empty() const { return entries_.empty(); }
    [[nodiscard]] std::size_t total_events() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.events.size();
        return n;
    }

    /// `round,region_id,duration,event_x[,event_y]`: a summary row per round with empty event
    /// fields, then one row per event. Region geometry goes to the JSON sidecar.
    void write(const std::string& csv_path, const std::string& json_path, int dim, const std::string& preamble = "") const {
        std::ofstream out(csv_path);
        if (!out) throw Error("cannot write " + csv_path);
        if (!preamble.empty()) out << preamble << "\n";
        out << "round,region_id,duration,event_x" << (dim == 2 ? ",event_y" : "") << "\n";
        nlohmann::json regions = nlohmann::json::array();
        for (const auto& o : entries_) {
            const std::string head = std::to_string(o.round) + "," + std::to_string(o.region.id) + "," + csv::fmt(o.duration);
            out << head << "," << (dim == 2 ? "," : "") << "\n";
            for (const auto& e : o.events) {
                out << head;
                for (int k = 0; k < dim; ++k) out << "," << csv::fmt(e(k));
                out << "\n";
            }
            nlohmann::json r = {{"round", o.round}, {"region_id", o.region.id}, {"lower", o.region.lower},
                                {"upper", o.region.upper}, {"depth", o.region.depth}};
            if (o.region.parent) r["parent"] = *o.region.parent;
            regions.push_back(r);
        }
        std::ofstream js(json_path);
        if (!js) throw Error("cannot write " + json_path);
        js << nlohmann::json{{"dim", dim}, {"regions", regions}}.dump(2) << "\n";
    }

    static ObservationLog read(const std::string& csv_path, const std::string& json_path) {
        std::ifstream js(json_path);
        if (!js) throw ParseError("cannot open " + json_path);
        nlohmann::json meta;
        try {
            js >> meta;
        } catch (const std::exception& e) {
            throw ParseError(json_path + ": " + e.what());
        }
        const int dim = meta.at("dim").get<int>();
        std::map<int, Observation> by_round;
        for (const auto& r : meta.at("regions")) {
            Observation o;
            o.round = r.at("round").get<int>();
            o.region.id = r.at("region_id").get<int>();
            o.region.lower = r.at("lower").get<std::vector<double>>();
            o.region.upper = r.at("upper").get<std::vector<double>>();
            o.region.depth = r.value("depth", 0);
            if (r.contains("parent")) o.region.parent = r.at("parent").get<int>();
            by_round[o.round] = o;
        }
        const auto t = csv::read(csv_path);
        const int cr = t.column("round"), cd = t.column("duration"), cx = t.column("event_x");
        const int cy = t.column("event_y");
        if (cr < 0 || cd < 0 || cx < 0 || (dim == 2 && cy < 0)) throw ParseError(csv_path + ": unexpected header");
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const auto& row = t.rows[i];
            const std::string where = csv_path + ":" + std::to_string(t.line_numbers[i]);
            const int round = static_cast<int>(csv::to_double(row[static_cast<std::size_t>(cr)], where));
            auto it = by_round.find(round);
            if (it == by_round.end()) throw ParseError(where + ": round missing from sidecar");
            it->second.duration = csv::to_double(row[static_cast<std::size_t>(cd)], where);
            if (row[static_cast<std::size_t>(cx)].empty()) continue;
            Point e(dim);
            e(0) = csv::to_double(row[static_cast<std::size_t>(cx)], where);
            if (dim == 2) e(1) = csv::to_double(row[static_cast<std::size_t>(cy)], where);
            it->second.events.push_back(e);
        }
        ObservationLog log;
        for (auto& [r, o] : by_round) log.append(std::move(o));
        return log;
    }

private:
    std::vector<Observation> entries_;
};

struct CredibleParams {
    double beta = 3.0;
};

struct MapResult {
    Vector theta;
    double kkt_residual = 0.0;
    int iterations = 0;
};

/// Basis + log + lower bound. Energy terms are accumulated on append so that evaluating U,
/// ∇U and ∇²U costs O(n·m) and O(n·m²) in the number of logged events n.
class PosteriorModel {
public:
    PosteriorModel() = default;
    explicit PosteriorModel(std::shared_ptr<const BasisModel> basis)
        : basis_(std::move(basis)), linear_(Vector::Zero(basis_->size())), events_(0, basis_->size()),
          projector_(basis_->Gamma(), basis_->lower_bound()) {}

    [[nodiscard]] const BasisModel& basis() const { return *basis_; }
    [[nodiscard]] std::shared_ptr<const BasisModel> basis_ptr() const { return basis_; }
    [[nodiscard]] const ObservationLog& log() const { return log_; }
    [[nodiscard]] int dim() const { return basis_->size(); }
    [[nodiscard]] double lower_bound() const { return basis_->lower_bound(); }
    [[nodiscard]] const Matrix& event_features() const { return events_; }
    [[nodiscard]] const Vector& linear_term() const { return linear_; }

    /// Appends an observation; ψ_A is computed from the basis unless supplied.
    void observe(Observation obs, const std::optional<Vector>& psi = std::nullopt) {
        const Vector p = psi ? *psi : Vector(basis_->Gamma().transpose() * basis_->raw().integrate(obs.region));
        if (p.size() != dim()) throw ParameterError("observe: ψ has wrong dimension");
        log_.append(obs);
        const auto& o = log_.entries().back();
        linear_ += o.duration * p;
        const Eigen::Index n0 = events_.rows();
        events_.conservativeResize(n0 + o.count(), Eigen::NoChange);
        floor_.conservativeResize(n0 + o.count());
        for (int i = 0; i < o.count(); ++i) {
            events_.row(n0 + i) = basis_->features(o.events[static_cast<std::size_t>(i)]).transpose();
            floor_(n0 + i) = std::max(1e-12, basis_->intensity_floor(o.events[static_cast<std::size_t>(i)]));
        }
    }

    /// U(θ); +∞ where some logged event has nonpositive intensity.
    [[nodiscard]] double energy(const Vector& theta) const {
        const Vector lam = events_ * theta;
        double u = 0.0;
        for (Eigen::Index i = 0; i < lam.size(); ++i) {
            if (!(lam(i) > 0)) return std::numeric_limits<double>::infinity();
            u -= std::log(lam(i));
        }
        return u + linear_.dot(theta) + 0.5 * theta.squaredNorm();
    }

    /// ∇U with event intensities floored at max(1e-12, l·Σφ(x_i)), the smallest value any
    /// feasible θ attains, so the gradient is exact on the feasible set and bounded outside it.
    [[nodiscard]] Vector energy_grad(const Vector& theta) const {
        const Vector lam = (events_ * theta).cwiseMax(floor_);
        return -(events_.transpose() * lam.cwiseInverse()) + linear_ + theta;
    }

    [[nodiscard]] Matrix energy_hess(const Vector& theta) const {
        const Vector lam = (events_ * theta).cwiseMax(floor_);
        const Matrix W = lam.cwiseInverse().asDiagonal() * events_;
        Matrix H = W.transpose() * W;
        H.diagonal().array() += 1.0;
        return H;
    }

    [[nodiscard]] bool feasible(const Vector& theta, double tol = 1e-8) const { return basis_->feasible(theta, tol); }

    /// Euclidean projection onto {Γθ ≥ l}. Reuses the previous active set as a warm start, so
    /// concurrent callers should each use their own copy of the model.
    Vector project(const Vector& theta, double shift = 0.0) { return projector_.project(theta, shift); }

    /// ‖θ − proj(θ − ∇U(θ))‖.
    double kkt_residual(const Vector& theta) {
        const Vector step = theta - energy_grad(theta);
        return (theta - project(step)).norm();
    }

    [[nodiscard]] bool has_map() const { return map_.has_value(); }
    [[nodiscard]] const Vector& map() const {
        if (!map_) throw InvariantViolation("posterior: MAP requested before it was computed");
        return *map_;
    }
    [[nodiscard]] const Matrix& precision() const {
        if (!precision_) throw InvariantViolation("posterior: Laplace precision requested before MAP");
        return *precision_;
    }

    /// Recomputes the MAP (warm-started from the previous one) and the Laplace precision.
    const Vector& refresh(double tol = 1e-8);

    void set_map(const Vector& theta) {
        map_ = theta;
        precision_ = energy_hess(theta);
    }

private:
    std::shared_ptr<const BasisModel> basis_;
    ObservationLog log_;
    Vector linear_;      // Σ_j Δ_j ψ_{A_j}
    Matrix events_;      // rows Φ(x_i)ᵀ
    Vector floor_;
    PolytopeProjector projector_;
    std::optional<Vector> map_;
    std::optional<Matrix> precision_;
};

namespace detail {

// Largest step in [0, 1] along d keeping Gθ − l and event intensities strictly positive
// (fraction-to-boundary 0.99).
inline double max_interior_step(const Matrix& G, double l, const Matrix& events, const Vector& theta, const Vector& d) {
    double t = 1.0;
    auto limit = [&t](const Vector& s, const Vector& ds) {
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (ds(i) < 0) t = std::min(t, -0.99 * s(i) / ds(i));
    };
    limit((G * theta).array() - l, G * d);
    if (events.rows() > 0) limit(events * theta, events * d);
    return t;
}

inline Vector projected_gradient_polish(PosteriorModel& model, Vector theta, double tol, int max_iter, int& iters) {
    double step = 1.0;
    for (int it = 0; it < max_iter; ++it, ++iters) {
        const Vector g = model.energy_grad(theta);
        if ((theta - model.project(theta - g)).norm() <= tol) break;
        const double u0 = model.energy(theta);
        step = std::min(1.0, step * 2.0);
        while (true) {
            const Vector cand = model.project(theta - step * g);
            const double u1 = model.energy(cand);
            if (u1 <= u0 + 1e-4 * g.dot(cand - theta) || step < 1e-14) {
                theta = cand;
                break;
            }
            step *= 0.5;
        }
    }
    return theta;
}

}  // namespace detail

/// argmin U(θ) subject to Γθ ≥ l·1. A log-barrier damped-Newton phase (barrier weight
/// 1, 0.1, …, 1e-6) reaches the neighbourhood of the optimum; sequential quadratic programs
/// with the exact Hessian then converge to the requested KKT residual. A finite-energy
/// warm start skips the barrier phase.
inline MapResult map_estimate(PosteriorModel& model, double tol = 1e-8, const std::optional<Vector>& warm = std::nullopt,
                              int max_iter = 200) {
    const BasisModel& basis = model.basis();
    const Matrix& G = basis.Gamma();
    const double l = basis.lower_bound();
    const int m = basis.size();
    MapResult res;

    Vector theta;
    const bool use_warm = warm && warm->size() == m && model.feasible(*warm, 1e-10) && std::isfinite(model.energy(*warm));
    if (use_warm) {
        theta = model.project(*warm);
        if (!std::isfinite(model.energy(theta))) theta = *warm;
    } else {
        // Strictly feasible start with unit slack, then the barrier path.
        theta = model.project(Vector::Zero(m), 1.0);
        for (double mu = 1.0; mu >= 1e-6 * 0.999; mu *= 0.1) {
            for (int it = 0; it < 50; ++it, ++res.iterations) {
                const Vector s = ((G * theta).array() - l).matrix();
                const Vector inv_s = s.cwiseInverse();
                const Vector g = model.energy_grad(theta) - mu * G.transpose() * inv_s;
                Matrix H = model.energy_hess(theta);
                const Matrix Gs = inv_s.asDiagonal() * G;
                H.noalias() += mu * Gs.transpose() * Gs;
                const Vector d = -H.llt().solve(g);
                const double dec = -g.dot(d);
                if (!(dec > 1e-14 * std::max(1.0, std::abs(model.energy(theta))))) break;
                auto barrier = [&](const Vector& th) {
                    const Vector sl = ((G * th).array() - l).matrix();
                    if ((sl.array() <= 0).any()) return std::numeric_limits<double>::infinity();
                    return model.energy(th) - mu * sl.array().log().sum();
                };
                const double b0 = barrier(theta);
                double t = detail::max_interior_step(G, l, model.event_features(), theta, d);
                while (t > 1e-14 && !(barrier(theta + t * d) <= b0 - 1e-4 * t * dec)) t *= 0.5;
                if (t <= 1e-14) break;
                theta += t * d;
            }
        }
    }

    // Sequential QP polish.
    std::vector<int> active;
    bool failed = false;
    for (int it = 0; it < max_iter; ++it, ++res.iterations) {
        res.kkt_residual = model.kkt_residual(theta);
        if (res.kkt_residual <= tol) break;
        const Vector g = model.energy_grad(theta);
        const Matrix H = model.energy_hess(theta);
        Vector y;
        try {
            auto qp = solve_inequality_qp(H, g - H * theta, G, Vector::Constant(m, l), active);
            active = qp.active;
            y = qp.y;
        } catch (const NumericalError&) {
            failed = true;
            break;
        }
        const Vector d = y - theta;
        const double u0 = model.energy(theta);
        const double slope = g.dot(d);
        // Below energy round-off neither the sign of the slope nor the Armijo test means
        // anything; take the full step.
        if (std::abs(slope) <= 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(u0)) &&
            std::isfinite(model.energy(y))) {
            theta = y;
            continue;
        }
        if (!(slope < 0)) {
            failed = true;
            break;
        }
        double t = 1.0;
        while (t > 1e-14 && !(model.energy(theta + t * d) <= u0 + 1e-4 * t * slope)) t *= 0.5;
        if (t <= 1e-14) {
            failed = true;
            break;
        }
        theta += t * d;
    }
    res.kkt_residual = model.kkt_residual(theta);
    if (failed || res.kkt_residual > tol) {
        int extra = 0;
        theta = detail::projected_gradient_polish(model, theta, tol, 20 * max_iter, extra);
        res.iterations += extra;
        res.kkt_residual = model.kkt_residual(theta);
    }
    if (!(res.kkt_residual <= tol))
        throw ConvergenceError("map_estimate: KKT residual " + sci(res.kkt_residual) + " above tolerance " + sci(tol));
    res.theta = theta;
    return res;
}

inline const Vector& PosteriorModel::refresh(double tol) {
    const auto r = map_estimate(*this, tol, map_);
    set_map(r.theta);
    return *map_;
}

/// Hessian of U at θ.
inline Matrix laplace_precision_at(const PosteriorModel& model, const Vector& theta) { return model.energy_hess(theta); }

/// Σ Φ(x_i)Φ(x_i)ᵀ/(Φ(x_i)ᵀθ̂)² + I at the cached MAP. Regions sensed with zero events
/// contribute nothing to it.
inline Matrix laplace_precision(const PosteriorModel& model) { return model.precision(); }

struct EllipsoidBound {
    double value = 0.0;
    Vector theta;        // optimizer
};

/// max cᵀθ over {(θ − θ̂)ᵀP(θ − θ̂) ≤ β} ∩ {Gθ ≥ l}. The closed-form ellipsoid optimizer is
/// used when it satisfies the polytope; otherwise a log-barrier interior-point method runs
/// to duality gap `gap`.
inline EllipsoidBound ellipsoid_polytope_max(const Vector& theta_hat, const Matrix& P, const Eigen::LLT<Matrix>& P_llt,
                                             const Matrix* G, double l, const Vector& c, double beta,
                                             double gap = 1e-6) {
    const Eigen::Index m = theta_hat.size();
    if (!(beta >= 0)) throw ParameterError("beta must be nonnegative");
    const Vector Pic = P_llt.solve(c);
    const double cn2 = c.dot(Pic);
    if (beta <= 1e-300 || cn2 <= 0) return {c.dot(theta_hat), theta_hat};
    const double sb = std::sqrt(beta);
    Vector closed = theta_hat + (sb / std::sqrt(cn2)) * Pic;
    if (!G || ((*G * closed).array() >= l - 1e-12).all()) return {c.dot(closed), closed};

    // Interior start between θ̂ and a strictly feasible point.
    PolytopeProjector proj(*G, l);
    const double delta = 1e-3 * std::max(1.0, l);
    const Vector theta_int = proj.project(theta_hat, delta);
    const Vector dir = theta_int - theta_hat;
    const double dPd = dir.dot(P * dir);
    double alpha = 0.5;
    if (dPd > 0) alpha = std::min(0.5, 0.5 * std::sqrt(beta / dPd));
    Vector theta = theta_hat + alpha * dir;
    auto slack = [&](const Vector& th) { return Vector(((*G * th).array() - l).matrix()); };
    if (!((slack(theta).array() > 0).all()))
        throw InvariantViolation("ellipsoid_polytope_max: could not find an interior point");

    auto f = [&](const Vector& th, double t) {
        const Vector dth = th - theta_hat;
        const double q = dth.dot(P * dth);
        const Vector s = slack(th);
        if (q >= beta || (s.array() <= 0).any()) return std::numeric_limits<double>::infinity();
        return -t * c.dot(th) - std::log(beta - q) - s.array().log().sum();
    };
    const double n_con = static_cast<double>(m + 1);
    for (double t = 1.0 / std::max(1e-12, std::sqrt(cn2 * beta)); ; t *= 10.0) {
        for (int it = 0; it < 100; ++it) {
            const Vector dth = theta - theta_hat;
            const Vector Pd = P * dth;
            const double r = beta - dth.dot(Pd);
            const Vector s = slack(theta);
            const Vector inv_s = s.cwiseInverse();
            const Vector g = -t * c + (2.0 / r) * Pd - G->transpose() * inv_s;
            const Matrix Gs = inv_s.asDiagonal() * *G;
            Matrix H = (2.0 / r) * P + (4.0 / (r * r)) * Pd * Pd.transpose();
            H.noalias() += Gs.transpose() * Gs;
            const Vector d = -H.llt().solve(g);
            const double dec = -g.dot(d);
            if (!(dec > 1e-12)) break;
            const double f0 = f(theta, t);
            double step = 1.0;
            while (step > 1e-14 && !(f(theta + step * d, t) <= f0 - 1e-4 * step * dec)) step *= 0.5;
            if (step <= 1e-14) break;
            theta += step * d;
        }
        if (n_con / t <= gap) break;
    }
    return {c.dot(theta), theta};
}

struct UcbLcb {
    double ucb = 0.0;
    double lcb = 0.0;
    Vector argmax;
    Vector argmin;
};

/// Bounds of ψᵀθ over the Laplace ellipsoid (precision Σ_L, radius β) intersected with the
/// constraint polytope.
class LaplaceBounds {
public:
    LaplaceBounds(const PosteriorModel& model, CredibleParams params, bool use_polytope = true)
        : theta_hat_(model.map()), P_(model.precision()), llt_(P_), G_(model.basis().Gamma()),
          l_(model.lower_bound()), beta_(params.beta), use_polytope_(use_polytope) {
        if (!(params.beta > 0)) throw ParameterError("beta must be positive");
        if (llt_.info() != Eigen::Success) throw NumericalError("Laplace precision is not positive definite");
    }

    [[nodiscard]] UcbLcb operator()(const Vector& psi) const {
        const Matrix* G = use_polytope_ ? &G_ : nullptr;
        auto hi = ellipsoid_polytope_max(theta_hat_, P_, llt_, G, l_, psi, beta_);
        auto lo = ellipsoid_polytope_max(theta_hat_, P_, llt_, G, l_, -psi, beta_);
        return {hi.value, -lo.value, std::move(hi.theta), std::move(lo.theta)};
    }

private:
    Vector theta_hat_;
    Matrix P_;
    Eigen::LLT<Matrix> llt_;
    Matrix G_;
    double l_;
    double beta_;
    bool use_polytope_;
};

inline UcbLcb ucb_lcb(const PosteriorModel& model, const Vector& psi, CredibleParams params = {}) {
    return LaplaceBounds(model, params)(psi);
}

inline std::vector<UcbLcb> pointwise_bounds(const PosteriorModel& model, const std::vector<Point>& grid,
                                            CredibleParams params = {}, bool use_polytope = true) {
    LaplaceBounds b(model, params, use_polytope);
    std::vector<UcbLcb> out;
    out.reserve(grid.size());
    for (const auto& x : grid) out.push_back(b(model.basis().features(x)));
    return out;
}

}  // namespace coxsense
