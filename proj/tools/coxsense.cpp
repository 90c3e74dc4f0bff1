// coxsense: basis inspection, ground-truth fitting, single runs, suites and posterior dumps.

#include "coxsense/coxsense.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace coxsense;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs = 0;
    std::string events;
    std::string log;
    bool empty_prior = false;
    int chains = 1;
    int thin = 50;
    bool svg = false;
};

struct Session {
    ExperimentConfig cfg;
    fs::path out;
    std::string hash;

    [[nodiscard]] std::string preamble() const {
        return "# coxsense config_hash=" + hash + " seed=" + std::to_string(cfg.seed);
    }
    [[nodiscard]] std::string path(const std::string& name) const { return (out / name).string(); }

    std::ofstream open(const std::string& name) const {
        std::ofstream f(path(name));
        if (!f) throw Error("cannot write " + path(name));
        return f;
    }

    void write_json(const std::string& name, nlohmann::json j) const {
        j["config_hash"] = hash;
        j["seed"] = cfg.seed;
        open(name) << j.dump(2) << "\n";
    }

    // Timestamps live only here, so every other output is reproducible byte for byte.
    void write_meta(const std::string& command) const {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        write_json("meta.json", {{"command", command}, {"timestamp", buf}, {"config", to_json(cfg)}});
    }
};

void require_file(const std::string& path, const std::string& flag) {
    if (!fs::exists(path)) throw ConfigError(flag + ": file '" + path + "' not found");
}

// Loads, overrides and validates the config; only then is the output directory created.
Session open_session(const Options& o, const std::vector<std::string>& files = {}) {
    Session s;
    s.cfg = load_config(o.config);
    if (o.seed) s.cfg.seed = *o.seed;
    if (!o.out.empty()) s.cfg.output = o.out;
    validate(s.cfg);
    for (std::size_t i = 0; i + 1 < files.size(); i += 2) require_file(files[i], files[i + 1]);
    s.hash = config_hash(s.cfg);
    s.out = s.cfg.output;
    fs::create_directories(s.out);
    return s;
}

int plot_resolution(int dim) { return dim == 1 ? 256 : 32; }

int cmd_basis(const Options& o) {
    auto s = open_session(o);
    NmfReport report;
    const auto model = make_basis_model(s.cfg, &report);
    const RawBasis& raw = model->raw();
    write_basis_csv(raw, s.path("basis.csv"), plot_resolution(raw.dim()), s.preamble());
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& t : raw.nodes) nodes.push_back(std::vector<double>(t.data(), t.data() + t.size()));
    nlohmann::json j = {{"kind", to_string(raw.kind)},
                        {"m", raw.size()},
                        {"nodes", nodes},
                        {"covariance_residual", covariance_matching_residual(*model)},
                        {"near_tie_columns", raw.near_tie_columns}};
    if (raw.kind == BasisKind::nmf && s.cfg.basis.table.empty()) {
        j["nmf"] = {{"relative_error", report.relative_error},
                    {"acceptance_rate", report.acceptance_rate},
                    {"draws", report.draws},
                    {"used_fallback", report.factorization.used_fallback},
                    {"reseeded", report.factorization.reseeded}};
        save_tabulated_basis(raw, s.path("nmf_basis"), {{"config_hash", s.hash}}, s.preamble());
    }
    s.write_json("basis.json", j);
    s.write_meta("basis");
    std::cout << "basis: m=" << raw.size() << " covariance residual " << sci(j["covariance_residual"].get<double>()) << "\n";
    return 0;
}

int cmd_fit(const Options& o) {
    if (o.events.empty()) throw ConfigError("--events: required");
    auto s = open_session(o, {o.events, "--events"});
    const auto model = make_basis_model(s.cfg);
    const int d = model->domain().dim();
    const auto events = read_events_csv(o.events, d);
    const auto fit = fit_ground_truth(events, model, s.cfg.duration, s.cfg.map_tol);
    const auto grid = regular_grid(model->domain(), default_resolution(d), true);
    auto out = s.open("truth.csv");
    out << s.preamble() << "\n" << (d == 1 ? "x,value\n" : "x,y,value\n");
    double mean = 0.0;
    for (const auto& x : grid) {
        const double v = fit.lambda(x);
        mean += v / static_cast<double>(grid.size());
        for (int k = 0; k < d; ++k) out << csv::fmt(x(k)) << ",";
        out << csv::fmt(v) << "\n";
    }
    s.write_json("truth.json", {{"theta", std::vector<double>(fit.theta.data(), fit.theta.data() + fit.theta.size())},
                                {"duration", fit.duration},
                                {"n_events", events.points.size()},
                                {"grid_mean", mean},
                                {"config", to_json(s.cfg)}});
    s.write_meta("fit");
    std::cout << "fit: " << events.points.size() << " events, duration " << csv::fmt(fit.duration) << ", mean intensity "
              << csv::fmt(mean) << "\n";
    return 0;
}

int cmd_run(const Options& o) {
    auto s = open_session(o);
    const auto ctx = make_context(s.cfg, make_basis_model(s.cfg));
    const auto truth = make_truth(s.cfg, ctx);
    ObservationLog log;
    const auto rec = run_protocol(ctx, truth, make_run_config(s.cfg), &log);
    {
        auto out = s.open("trace.csv");
        out << s.preamble() << "\n";
        write_episode_csv(out, rec);
    }
    {
        auto out = s.open("rounds.csv");
        out << s.preamble() << "\n";
        write_round_table_csv(out, rec);
    }
    log.write(s.path("log.csv"), s.path("log.json"), ctx.basis->domain().dim(), s.preamble());
    nlohmann::json j = {{"algorithm", rec.algorithm}, {"rounds", rec.rounds.size()}, {"task_complete", rec.task_complete}};
    if (!rec.rounds.empty())
        for (const auto& [n, v] : rec.rounds.back().metrics) j["final"][n] = v;
    if (rec.failure) j["failure"] = {{"round", rec.failure_round}, {"error", *rec.failure}};
    s.write_json("run.json", j);
    s.write_meta("run");
    if (rec.failure) {
        std::cerr << "run failed at round " << rec.failure_round << ": " << *rec.failure << "\n";
        return 1;
    }
    std::cout << "run: " << rec.algorithm << " " << rec.rounds.size() << " rounds\n";
    return 0;
}

int cmd_suite(const Options& o) {
    const int jobs = resolve_jobs(o.jobs);
    auto s = open_session(o);
    const auto ctx = make_context(s.cfg, make_basis_model(s.cfg));
    const auto truth = make_truth(s.cfg, ctx);
    const auto res = run_suite(ctx, truth, make_suite_spec(s.cfg), jobs);
    {
        auto out = s.open("aggregate.csv");
        out << s.preamble() << "\n";
        write_aggregate_csv(out, res.aggregate);
    }
    {
        auto out = s.open("traces.csv");
        out << s.preamble() << "\n";
        for (std::size_t i = 0; i < res.episodes.size(); ++i) write_round_table_csv(out, res.episodes[i], i == 0);
    }
    s.write_json("summary.json", res.summary);
    if (o.svg) s.open("aggregate.svg") << aggregate_svg(res.aggregate, "cum_count_regret");
    s.write_meta("suite");
    const auto& failed = res.summary["failed_cells"];
    for (const auto& f : failed)
        std::cerr << "cell failed: " << f["algorithm"].get<std::string>() << " seed " << f["seed"] << ": "
                  << f["error"].get<std::string>() << "\n";
    std::cout << "suite: " << res.episodes.size() << " cells, " << failed.size() << " failed\n";
    return 0;
}

int cmd_sample(const Options& o) {
    if (o.log.empty() == !o.empty_prior) throw ConfigError("sample: give exactly one of --log PREFIX or --empty-prior");
    if (o.chains < 1) throw ConfigError("--chains: must be positive");
    if (o.thin < 1) throw ConfigError("--thin: must be positive");
    std::vector<std::string> files;
    if (!o.log.empty()) files = {o.log + ".csv", "--log", o.log + ".json", "--log"};
    auto s = open_session(o, files);
    const auto model = make_basis_model(s.cfg);
    PosteriorModel post(model);
    if (!o.log.empty()) {
        const auto log = ObservationLog::read(o.log + ".csv", o.log + ".json");
        for (const auto& obs : log.entries()) post.observe(obs);
    }
    post.refresh(s.cfg.map_tol);
    const auto sc = make_sampler_config(s.cfg);
    const int d = model->domain().dim();
    const auto grid = regular_grid(model->domain(), plot_resolution(d), true);
    const Matrix F = model->feature_matrix(grid);

    auto chains = s.open("chains.csv");
    auto intensity = s.open("intensity.csv");
    chains << s.preamble() << "\nchain,step";
    for (int j = 0; j < model->size(); ++j) chains << ",theta_" << (j + 1);
    chains << "\n";
    intensity << s.preamble() << "\nchain,step,x" << (d == 2 ? ",y" : "") << ",value\n";
    nlohmann::json info = nlohmann::json::array();
    for (int k = 0; k < o.chains; ++k) {
        Rng rng = rng_stream(s.cfg.seed, "sample-chain", static_cast<std::uint64_t>(k));
        Chain c;
        try {
            c = sc.kind == SamplerKind::myula ? myula_sample(post, sc.myula, rng) : mirrored_sample(post, sc.mirror, rng);
        } catch (const DivergenceError& e) {
            throw DivergenceError("chain " + std::to_string(k) + ": " + e.what());
        }
        for (std::size_t t = 0; t < c.samples.size(); ++t) {
            const Vector th = post.project(c.samples[t]);
            chains << k << "," << (t + 1);
            for (Eigen::Index j = 0; j < th.size(); ++j) chains << "," << csv::fmt(th(j));
            chains << "\n";
            if ((t + 1) % static_cast<std::size_t>(o.thin) != 0) continue;
            const Vector v = F * th;
            for (std::size_t g = 0; g < grid.size(); ++g) {
                intensity << k << "," << (t + 1);
                for (int a = 0; a < d; ++a) intensity << "," << csv::fmt(grid[g](a));
                intensity << "," << csv::fmt(v(static_cast<Eigen::Index>(g))) << "\n";
            }
        }
        info.push_back({{"chain", k}, {"samples", c.samples.size()}, {"step_size", c.step_size}, {"lipschitz", c.lipschitz}});
    }
    const Vector& map = post.map();
    s.write_json("sample.json", {{"sampler", s.cfg.sampler},
                                 {"map", std::vector<double>(map.data(), map.data() + map.size())},
                                 {"events", post.log().total_events()},
                                 {"chains", info}});
    s.write_meta("sample");
    std::cout << "sample: " << o.chains << " chain(s) written\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive sensing of Cox processes"};
    app.require_subcommand(1);
    Options o;

    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Root seed, overrides the config");
        sub->add_option("--out", o.out, "Output directory, overrides the config");
    };
    auto* basis = app.add_subcommand("basis", "Build the configured basis and report covariance matching");
    common(basis);
    auto* fit = app.add_subcommand("fit", "Fit a ground-truth intensity to an event file");
    common(fit);
    fit->add_option("--events", o.events, "CSV with header x[,y][,t]")->required();
    auto* run = app.add_subcommand("run", "Run one sensing episode");
    common(run);
    auto* suite = app.add_subcommand("suite", "Run algorithms x seeds and aggregate quantiles");
    common(suite);
    suite->add_option("--jobs", o.jobs, "Worker threads (default: COXSENSE_JOBS or 1)")->check(CLI::PositiveNumber);
    suite->add_flag("--svg", o.svg, "Also write aggregate.svg");
    auto* sample = app.add_subcommand("sample", "Dump posterior chains and intensity samples");
    common(sample);
    sample->add_option("--log", o.log, "Observation log prefix (PREFIX.csv and PREFIX.json)");
    sample->add_flag("--empty-prior", o.empty_prior, "Sample the prior (no observations)");
    sample->add_option("--chains", o.chains, "Number of chains");
    sample->add_option("--thin", o.thin, "Write grid intensities every N-th chain sample");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*basis) return cmd_basis(o);
        if (*fit) return cmd_fit(o);
        if (*run) return cmd_run(o);
        if (*suite) return cmd_suite(o);
        if (*sample) return cmd_sample(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
