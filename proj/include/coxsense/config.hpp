#pragma once

// Experiment configuration: a JSON tree with a fixed schema. Unknown keys are rejected with
// their dotted path; every numeric field is range-checked before anything is computed.

#include "coxsense/harness.hpp"
#include "coxsense/nmf.hpp"

#include <filesystem>
#include <set>

namespace coxsense {

struct KernelConfig {
    std::string family = "se";            // se | laplace | gibbs | product
    double lengthscale = 0.1;
    double variance = 1.0;
    std::vector<double> lengthscales;     // product: one per axis
    std::vector<double> gibbs_range;      // gibbs: lengthscale at the lower and upper x edge
};

struct BasisConfig {
    std::string kind = "hat";             // hat | bernstein | nmf
    int m = 64;                           // total basis size; a perfect square in 2-d for hat/bernstein
    int nmf_samples = 0;
    int nmf_iterations = 500;
    int nmf_grid = 0;
    std::uint64_t nmf_seed = 1;
    std::string table;                    // optional saved nmf basis prefix
};

struct ExperimentConfig {
    std::vector<double> lower{-1.0};
    std::vector<double> upper{1.0};
    KernelConfig kernel;
    BasisConfig basis;
    double lower_bound = 0.1;
    std::optional<double> tau;
    double duration = 5.0;
    int depth = 7;
    bool ancestors = false;
    std::string cost_kind = "uniform";
    double c1 = 1.0;
    double c2 = 0.0;
    std::string truth = "toy";
    std::string algorithm = "thompson";
    AlgorithmParams params;
    std::vector<std::string> suite_algorithms;
    int repetitions = 10;
    std::optional<double> budget;         // unset = unlimited
    int rounds = 400;
    std::string sampler = "myula";
    int sampler_steps = 1000;
    double burn_in = 0.5;
    std::optional<double> step_size;
    int power_iterations = 50;
    double mirror_step_size = 1e-3;
    double mirror_upper = 5.0;
    double map_tol = 1e-6;
    std::uint64_t seed = 1;
    std::string output = "out";
};

namespace detail {

// Object reader that records which keys were consumed.
class JsonReader {
public:
    JsonReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + "must be an object");
    }

    [[nodiscard]] std::string where(const std::string& key) const {
        const std::string p = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
        return p.empty() ? "config: " : p + ": ";
    }
    [[nodiscard]] std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const nlohmann::json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <class T>
    void get(const std::string& key, T& out) {
        const auto* v = find(key);
        if (!v) return;
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v->is_number()) throw std::invalid_argument("expected a number");
            } else if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
                if (!v->is_number_integer()) throw std::invalid_argument("expected an integer");
                if constexpr (std::is_same_v<T, std::uint64_t>)
                    if (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0)
                        throw std::invalid_argument("expected a nonnegative integer");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v->is_boolean()) throw std::invalid_argument("expected true or false");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v->is_string()) throw std::invalid_argument("expected a string");
            }
            out = v->get<T>();
        } catch (const std::exception& e) {
            throw ConfigError(where(key) + e.what());
        }
    }

    void get(const std::string& key, std::optional<double>& out) {
        const auto* v = find(key);
        if (!v || v->is_null()) return;
        if (!v->is_number()) throw ConfigError(where(key) + "expected a number or null");
        out = v->get<double>();
    }

    void get(const std::string& key, std::vector<double>& out) {
        const auto* v = find(key);
        if (!v) return;
        if (!v->is_array()) throw ConfigError(where(key) + "expected an array of numbers");
        out.clear();
        for (const auto& x : *v) {
            if (!x.is_number()) throw ConfigError(where(key) + "expected an array of numbers");
            out.push_back(x.get<double>());
        }
    }

    void get(const std::string& key, std::vector<std::string>& out) {
        const auto* v = find(key);
        if (!v) return;
        if (!v->is_array()) throw ConfigError(where(key) + "expected an array of strings");
        out.clear();
        for (const auto& x : *v) {
            if (!x.is_string()) throw ConfigError(where(key) + "expected an array of strings");
            out.push_back(x.get<std::string>());
        }
    }

    JsonReader object(const std::string& key) {
        static const nlohmann::json empty = nlohmann::json::object();
        const auto* v = find(key);
        return JsonReader(v ? *v : empty, child(key));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown key '" + child(k) + "'");
    }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void check(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError(field + ": " + what);
}

inline int perfect_root(int m, int dim) {
    if (dim == 1) return m;
    const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m))));
    return r * r == m ? r : -1;
}

}  // namespace detail

/// Range and consistency checks. Throws ConfigError naming the offending field.
inline void validate(const ExperimentConfig& c) {
    using detail::check;
    const int d = static_cast<int>(c.lower.size());
    check(d == 1 || d == 2, "domain.lower", "dimension must be 1 or 2");
    check(c.upper.size() == c.lower.size(), "domain.upper", "must have the same length as domain.lower");
    for (int k = 0; k < d; ++k) check(c.upper[static_cast<std::size_t>(k)] > c.lower[static_cast<std::size_t>(k)], "domain.upper", "must exceed domain.lower");
    const auto& kc = c.kernel;
    check(kc.family == "se" || kc.family == "laplace" || kc.family == "gibbs" || kc.family == "product", "kernel.family",
          "unknown family '" + kc.family + "' (valid: se, laplace, gibbs, product)");
    check(kc.lengthscale > 0, "kernel.lengthscale", "must be positive");
    check(kc.variance > 0, "kernel.variance", "must be positive");
    if (kc.family == "product") check(static_cast<int>(kc.lengthscales.size()) == d, "kernel.lengthscales", "one positive value per axis required");
    for (double g : kc.lengthscales) check(g > 0, "kernel.lengthscales", "must be positive");
    if (kc.family == "gibbs") check(kc.gibbs_range.size() == 2 && kc.gibbs_range[0] > 0 && kc.gibbs_range[1] > 0,
                                    "kernel.gibbs_range", "two positive lengthscales required");
    const auto& b = c.basis;
    check(b.kind == "hat" || b.kind == "bernstein" || b.kind == "nmf", "basis.kind", "unknown kind '" + b.kind + "' (valid: hat, bernstein, nmf)");
    check(b.m >= 2, "basis.m", "must be at least 2");
    check(b.m <= 4096, "basis.m", "must be at most 4096");
    if (b.kind != "nmf") check(detail::perfect_root(b.m, d) >= 2, "basis.m", "must be a perfect square in 2-d");
    check(b.nmf_samples >= 0, "basis.nmf_samples", "must be nonnegative");
    check(b.nmf_iterations >= 1, "basis.nmf_iterations", "must be positive");
    check(b.nmf_grid == 0 || b.nmf_grid >= 2, "basis.nmf_grid", "must be 0 or at least 2");
    if (!b.table.empty()) {
        check(b.kind == "nmf", "basis.table", "only nmf bases can be loaded from a table");
        check(std::filesystem::exists(b.table + ".csv") && std::filesystem::exists(b.table + ".json"), "basis.table",
              "files '" + b.table + ".csv/.json' not found");
    }
    check(c.lower_bound >= 0, "lower_bound", "must be nonnegative");
    if (c.tau) check(*c.tau >= 0, "tau", "must be nonnegative");
    check(c.duration > 0, "duration", "must be positive");
    check(c.depth >= 0 && c.depth * d <= 24, "actions.depth", "must be in [0, " + std::to_string(24 / d) + "]");
    check(c.cost_kind == "uniform" || c.cost_kind == "fixed", "cost.kind", "unknown kind '" + c.cost_kind + "' (valid: uniform, fixed)");
    check(c.c1 >= 0, "cost.c1", "must be nonnegative");
    check(c.c2 >= 0, "cost.c2", "must be nonnegative");
    if (c.truth.rfind("file:", 0) == 0) {
        check(std::filesystem::exists(c.truth.substr(5)), "truth", "file '" + c.truth.substr(5) + "' not found");
    } else {
        try {
            named_intensity(c.truth, d);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("truth: ") + e.what());
        }
    }
    try {
        algorithm_from_string(c.algorithm);
        for (const auto& a : c.suite_algorithms) algorithm_from_string(a);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("algorithm.name: ") + e.what());
    }
    check(c.params.beta >= 0, "algorithm.beta", "must be nonnegative");
    check(c.params.epsilon0 >= 0, "algorithm.epsilon0", "must be nonnegative");
    check(c.params.n_resamples >= 1, "algorithm.n_resamples", "must be positive");
    check(c.params.resample_cap >= 1, "algorithm.resample_cap", "must be positive");
    auto needs_tau = [](const std::string& a) { return a == "top2-levelset"; };
    check(!needs_tau(c.algorithm) || c.tau.has_value(), "tau", "required by top2-levelset");
    for (const auto& a : c.suite_algorithms) check(!needs_tau(a) || c.tau.has_value(), "tau", "required by top2-levelset");
    check(c.repetitions >= 1, "suite.repetitions", "must be positive");
    if (c.budget) check(*c.budget >= 0, "budget", "must be nonnegative");
    check(c.rounds >= 0, "rounds", "must be nonnegative");
    check(c.sampler == "myula" || c.sampler == "mirrored", "sampler.kind", "unknown kind '" + c.sampler + "' (valid: myula, mirrored)");
    check(c.sampler_steps >= 1, "sampler.steps", "must be positive");
    check(c.burn_in >= 0 && c.burn_in < 1, "sampler.burn_in", "must be in [0, 1)");
    if (c.step_size) check(*c.step_size > 0, "sampler.step_size", "must be positive");
    check(c.power_iterations >= 1, "sampler.power_iterations", "must be positive");
    check(c.mirror_step_size > 0, "sampler.mirror_step_size", "must be positive");
    check(c.mirror_upper > c.lower_bound, "sampler.upper", "must exceed lower_bound");
    check(c.map_tol > 0, "map_tol", "must be positive");
    check(!c.output.empty(), "output", "must not be empty");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    detail::JsonReader r(j, "");
    {
        auto o = r.object("domain");
        o.get("lower", c.lower);
        o.get("upper", c.upper);
        o.finish();
    }
    {
        auto o = r.object("kernel");
        o.get("family", c.kernel.family);
        o.get("lengthscale", c.kernel.lengthscale);
        o.get("variance", c.kernel.variance);
        o.get("lengthscales", c.kernel.lengthscales);
        o.get("gibbs_range", c.kernel.gibbs_range);
        o.finish();
    }
    {
        auto o = r.object("basis");
        o.get("kind", c.basis.kind);
        o.get("m", c.basis.m);
        o.get("nmf_samples", c.basis.nmf_samples);
        o.get("nmf_iterations", c.basis.nmf_iterations);
        o.get("nmf_grid", c.basis.nmf_grid);
        o.get("nmf_seed", c.basis.nmf_seed);
        o.get("table", c.basis.table);
        o.finish();
    }
    r.get("lower_bound", c.lower_bound);
    r.get("tau", c.tau);
    r.get("duration", c.duration);
    {
        auto o = r.object("actions");
        o.get("depth", c.depth);
        o.get("ancestors", c.ancestors);
        o.finish();
    }
    {
        auto o = r.object("cost");
        o.get("kind", c.cost_kind);
        o.get("c1", c.c1);
        o.get("c2", c.c2);
        o.finish();
    }
    r.get("truth", c.truth);
    {
        auto o = r.object("algorithm");
        o.get("name", c.algorithm);
        o.get("beta", c.params.beta);
        o.get("epsilon0", c.params.epsilon0);
        o.get("n_resamples", c.params.n_resamples);
        o.get("resample_cap", c.params.resample_cap);
        o.get("ignore_cost", c.params.thompson_ignore_cost);
        std::string obj = c.params.vopt_objective == VOptObjective::levelset ? "levelset" : "maximum";
        o.get("vopt_objective", obj);
        if (obj != "levelset" && obj != "maximum")
            throw ConfigError("algorithm.vopt_objective: unknown objective '" + obj + "' (valid: levelset, maximum)");
        c.params.vopt_objective = obj == "levelset" ? VOptObjective::levelset : VOptObjective::maximum;
        o.get("vopt_roi_from_ucb", c.params.vopt_roi_from_ucb);
        o.finish();
    }
    {
        auto o = r.object("suite");
        o.get("algorithms", c.suite_algorithms);
        o.get("repetitions", c.repetitions);
        o.finish();
    }
    r.get("budget", c.budget);
    r.get("rounds", c.rounds);
    {
        auto o = r.object("sampler");
        o.get("kind", c.sampler);
        o.get("steps", c.sampler_steps);
        o.get("burn_in", c.burn_in);
        o.get("step_size", c.step_size);
        o.get("power_iterations", c.power_iterations);
        o.get("mirror_step_size", c.mirror_step_size);
        o.get("upper", c.mirror_upper);
        o.finish();
    }
    r.get("map_tol", c.map_tol);
    r.get("seed", c.seed);
    r.get("output", c.output);
    r.finish();
    return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {
        {"domain", {{"lower", c.lower}, {"upper", c.upper}}},
        {"kernel",
         {{"family", c.kernel.family},
          {"lengthscale", c.kernel.lengthscale},
          {"variance", c.kernel.variance},
          {"lengthscales", c.kernel.lengthscales},
          {"gibbs_range", c.kernel.gibbs_range}}},
        {"basis",
         {{"kind", c.basis.kind},
          {"m", c.basis.m},
          {"nmf_samples", c.basis.nmf_samples},
          {"nmf_iterations", c.basis.nmf_iterations},
          {"nmf_grid", c.basis.nmf_grid},
          {"nmf_seed", c.basis.nmf_seed},
          {"table", c.basis.table}}},
        {"lower_bound", c.lower_bound},
        {"tau", opt(c.tau)},
        {"duration", c.duration},
        {"actions", {{"depth", c.depth}, {"ancestors", c.ancestors}}},
        {"cost", {{"kind", c.cost_kind}, {"c1", c.c1}, {"c2", c.c2}}},
        {"truth", c.truth},
        {"algorithm",
         {{"name", c.algorithm},
          {"beta", c.params.beta},
          {"epsilon0", c.params.epsilon0},
          {"n_resamples", c.params.n_resamples},
          {"resample_cap", c.params.resample_cap},
          {"ignore_cost", c.params.thompson_ignore_cost},
          {"vopt_objective", c.params.vopt_objective == VOptObjective::levelset ? "levelset" : "maximum"},
          {"vopt_roi_from_ucb", c.params.vopt_roi_from_ucb}}},
        {"suite", {{"algorithms", c.suite_algorithms}, {"repetitions", c.repetitions}}},
        {"budget", opt(c.budget)},
        {"rounds", c.rounds},
        {"sampler",
         {{"kind", c.sampler},
          {"steps", c.sampler_steps},
          {"burn_in", c.burn_in},
          {"step_size", opt(c.step_size)},
          {"power_iterations", c.power_iterations},
          {"mirror_step_size", c.mirror_step_size},
          {"upper", c.mirror_upper}}},
        {"map_tol", c.map_tol},
        {"seed", c.seed},
        {"output", c.output},
    };
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_json(a) == to_json(b); }

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(j);
}

/// Hash of the canonical serialization, excluding the output directory.
inline std::string config_hash(const ExperimentConfig& c) {
    auto j = to_json(c);
    j.erase("output");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

// ---------------------------------------------------------------------------------------------
// Construction of the library objects a config describes.

inline Domain make_domain(const ExperimentConfig& c) { return Domain(c.lower, c.upper); }

inline KernelSpec make_kernel(const ExperimentConfig& c) {
    const Domain D = make_domain(c);
    const auto& k = c.kernel;
    if (k.family == "se") return se_kernel(D, k.lengthscale, k.variance);
    if (k.family == "laplace") return laplace_kernel(D, k.lengthscale, k.variance);
    if (k.family == "product") return product_kernel(D, k.lengthscales, {}, k.variance);
    const double a = k.gibbs_range.at(0), b = k.gibbs_range.at(1), x0 = D.lower(0), w = D.width(0);
    return gibbs_kernel(D, [a, b, x0, w](const Point& x) { return a + (b - a) * (x(0) - x0) / w; }, k.variance);
}

inline RawBasis make_raw_basis(const ExperimentConfig& c, NmfReport* report = nullptr) {
    const Domain D = make_domain(c);
    const int per_axis = detail::perfect_root(c.basis.m, D.dim());
    if (c.basis.kind == "hat") return build_hat_basis(D, per_axis);
    if (c.basis.kind == "bernstein") return build_bernstein_basis(D, per_axis - 1);
    if (!c.basis.table.empty()) return load_tabulated_basis(c.basis.table);
    NmfOptions o;
    o.n_grid = c.basis.nmf_grid;
    o.n_samples = c.basis.nmf_samples;
    o.iterations = c.basis.nmf_iterations;
    o.seed = c.basis.nmf_seed;
    return build_nmf_basis(make_kernel(c), D, c.basis.m, o, report);
}

inline std::shared_ptr<const BasisModel> make_basis_model(const ExperimentConfig& c, NmfReport* report = nullptr) {
    return std::make_shared<const BasisModel>(gamma_transform(make_raw_basis(c, report), make_kernel(c), c.lower_bound));
}

inline SensingContext make_context(const ExperimentConfig& c, std::shared_ptr<const BasisModel> basis) {
    CostModel cm{c.cost_kind == "fixed" ? CostKind::fixed : CostKind::uniform, c.c1, c.c2};
    return make_sensing_context(std::move(basis), build_action_set(make_domain(c), c.depth, c.ancestors), cm, c.duration);
}

inline GroundTruth make_truth(const ExperimentConfig& c, const SensingContext& ctx) {
    return make_ground_truth(named_intensity(c.truth, static_cast<int>(c.lower.size())), ctx, c.tau);
}

inline SamplerConfig make_sampler_config(const ExperimentConfig& c) {
    SamplerConfig s;
    s.kind = sampler_kind_from_string(c.sampler);
    s.myula.steps = c.sampler_steps;
    s.myula.burn_in = c.burn_in;
    s.myula.step_size = c.step_size;
    s.myula.power_iterations = c.power_iterations;
    s.mirror.steps = c.sampler_steps;
    s.mirror.burn_in = c.burn_in;
    s.mirror.step_size = c.mirror_step_size;
    s.mirror.upper = c.mirror_upper;
    return s;
}

inline RunConfig make_run_config(const ExperimentConfig& c) {
    RunConfig r;
    r.algorithm = algorithm_from_string(c.algorithm);
    r.params = c.params;
    r.budget = c.budget ? *c.budget : std::numeric_limits<double>::infinity();
    r.max_rounds = c.rounds;
    r.tau = c.tau;
    r.sampler = make_sampler_config(c);
    r.seed = c.seed;
    r.map_tol = c.map_tol;
    return r;
}

/// Suite cells: the listed algorithms (or the single configured one) over seeds seed, seed+1, ...
inline SuiteSpec make_suite_spec(const ExperimentConfig& c) {
    SuiteSpec s;
    s.base = make_run_config(c);
    if (c.suite_algorithms.empty()) s.algorithms.push_back(s.base.algorithm);
    for (const auto& a : c.suite_algorithms) s.algorithms.push_back(algorithm_from_string(a));
    for (int k = 0; k < c.repetitions; ++k) s.seeds.push_back(c.seed + static_cast<std::uint64_t>(k));
    return s;
}

}  // namespace coxsense
