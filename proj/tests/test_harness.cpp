#include "coxsense/coxsense.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

using namespace coxsense;
namespace fs = std::filesystem;

namespace {

const Domain I1 = Domain::interval(-1.0, 1.0);

std::shared_ptr<const BasisModel> hat_model(int m, double gamma, double l) {
    return std::make_shared<const BasisModel>(gamma_transform(build_hat_basis(I1, m), se_kernel(I1, gamma), l));
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("coxsense_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// n uniform events on [-1, 1]; timestamps span exactly [0, duration].
void write_constant_events(const fs::path& p, int n, double duration, bool with_time, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> ux(-1.0, 1.0), ut(0.0, duration);
    std::ofstream out(p);
    out << (with_time ? "x,t\n" : "x\n");
    for (int i = 0; i < n; ++i) {
        out << csv::fmt(ux(rng));
        if (with_time) out << "," << csv::fmt(i == 0 ? 0.0 : i == 1 ? duration : ut(rng));
        out << "\n";
    }
}

struct Exec {
    int status = -1;
    std::string out, err;
};

Exec cli(const std::string& args, const fs::path& dir) {
    const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
    const std::string cmd = std::string(COXSENSE_CLI) + " " + args + " > " + o.string() + " 2> " + e.string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(o), slurp(e)};
}

std::string config_path(const std::string& name) { return std::string(COXSENSE_CONFIGS) + "/" + name; }

nlohmann::json small_config(const fs::path& out) {
    return {{"domain", {{"lower", {-1.0}}, {"upper", {1.0}}}},
            {"kernel", {{"family", "se"}, {"lengthscale", 0.3}}},
            {"basis", {{"kind", "hat"}, {"m", 12}}},
            {"lower_bound", 0.1},
            {"actions", {{"depth", 3}}},
            {"truth", "toy"},
            {"rounds", 8},
            {"sampler", {{"steps", 100}}},
            {"seed", 4},
            {"output", out.string()}};
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
    const fs::path p = dir / "config.json";
    spit(p, j.dump(2));
    return p;
}

std::size_t data_rows(const fs::path& p) { return csv::read(p.string()).rows.size(); }

EpisodeRecord fake_episode(const std::string& alg, std::uint64_t seed, const std::vector<double>& regret) {
    EpisodeRecord e;
    e.algorithm = alg;
    e.seed = seed;
    for (std::size_t t = 0; t < regret.size(); ++t) {
        RoundRecord r;
        r.round = static_cast<int>(t + 1);
        r.cum_cost = static_cast<double>(t + 1);
        r.metrics.emplace_back("cum_count_regret", regret[t]);
        e.rounds.push_back(r);
    }
    return e;
}

}  // namespace

// ---------------------------------------------------------------- fitting

TEST(Fit, ConstantIntensityRecoveredOnAverage) {
    const auto dir = scratch("fit_constant");
    const double c = 2.0, duration = 2500.0;   // 10⁴ expected events on a width-2 domain
    write_constant_events(dir / "ev.csv", 10000, duration, true, 11);
    const auto ev = read_events_csv((dir / "ev.csv").string(), 1);
    ASSERT_EQ(ev.points.size(), 10000u);
    const auto fit = fit_ground_truth(ev, hat_model(16, 0.3, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(fit.duration, duration);
    double mean = 0.0;
    const auto grid = regular_grid(I1, 512, true);
    for (const auto& x : grid) mean += fit.lambda(x) / static_cast<double>(grid.size());
    EXPECT_NEAR(mean, c, 0.15 * c);
}

TEST(Fit, FallbackDurationWithoutTimestamps) {
    const auto dir = scratch("fit_fallback");
    write_constant_events(dir / "ev.csv", 2000, 1.0, false, 12);
    const auto ev = read_events_csv((dir / "ev.csv").string(), 1);
    EXPECT_TRUE(ev.times.empty());
    const auto fit = fit_ground_truth(ev, hat_model(8, 0.5, 0.0), 500.0);
    EXPECT_DOUBLE_EQ(fit.duration, 500.0);
    EXPECT_NEAR(fit.lambda(make_point({0.0})), 2000.0 / 1000.0, 0.15 * 2.0);
}

TEST(Fit, Errors) {
    const auto b = hat_model(8, 0.5, 0.0);
    EXPECT_THROW(fit_ground_truth({}, b, 1.0), ParameterError);
    EventData same_time{{make_point({0.1}), make_point({0.2})}, {3.0, 3.0}};
    EXPECT_THROW(fit_ground_truth(same_time, b, 1.0), ParameterError);
    EventData outside{{make_point({1.5})}, {}};
    EXPECT_THROW(fit_ground_truth(outside, b, 1.0), DomainError);
}

TEST(ReadEvents, MalformedRowNamesLine) {
    const auto dir = scratch("read_events");
    spit(dir / "bad.csv", "x,t\n0.1,0\n0.2,oops\n");
    try {
        read_events_csv((dir / "bad.csv").string(), 1);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
    }
    spit(dir / "xy.csv", "x,y\n0.1,0.2\n");
    EXPECT_THROW(read_events_csv((dir / "xy.csv").string(), 1), ParseError);
    EXPECT_THROW(read_events_csv((dir / "bad.csv").string(), 2), ParseError);
    EXPECT_EQ(read_events_csv((dir / "xy.csv").string(), 2).points.at(0)(1), 0.2);
}

// ---------------------------------------------------------------- metric series

TEST(RegretSeries, CumulativeSumOfDirectFormula) {
    const auto b = hat_model(8, 0.5, 0.1);
    const auto ctx = make_sensing_context(b, build_action_set(I1, 3, false), {}, 5.0);
    const auto truth = make_ground_truth(toy_intensity, ctx);
    const std::vector<std::size_t> trace{0, 3, 3, 7, 1};
    const auto s = count_regret(truth, ctx, trace);
    std::size_t best = 0;
    for (std::size_t a = 0; a < ctx.actions.size(); ++a)
        if (truth.mu[a] > truth.mu[best]) best = a;   // equal costs: the largest μ is A*
    double cum = 0.0;
    for (std::size_t t = 0; t < trace.size(); ++t) {
        const double r = truth.mu[best] - truth.mu[trace[t]];
        cum += r;
        EXPECT_NEAR(s.instantaneous[t], r, 1e-12);
        EXPECT_NEAR(s.cumulative[t], cum, 1e-12);
        if (t) EXPECT_GE(s.cumulative[t], s.cumulative[t - 1]);
    }
    const auto zero = count_regret(truth, ctx, std::vector<std::size_t>(4, best));
    for (double r : zero.cumulative) EXPECT_NEAR(r, 0.0, 1e-12);
}

// ---------------------------------------------------------------- aggregation

TEST(Aggregate, TypeSevenQuantilesPerRound) {
    std::vector<EpisodeRecord> eps;
    const std::vector<std::vector<double>> traces{{1, 4}, {3, 2}, {2, 9}, {10, 5}};
    for (std::size_t k = 0; k < traces.size(); ++k) eps.push_back(fake_episode("a", k, traces[k]));
    eps.push_back(fake_episode("b", 0, {7}));
    const auto rows = aggregate_episodes(eps);
    ASSERT_EQ(rows.size(), 3u);
    // Round 1 values sorted: 1 2 3 10 -> h = 3p, so q25 = 1.75, q50 = 2.5, q75 = 4.75.
    EXPECT_EQ(rows[0].algorithm, "a");
    EXPECT_DOUBLE_EQ(rows[0].q25, 1.75);
    EXPECT_DOUBLE_EQ(rows[0].q50, 2.5);
    EXPECT_DOUBLE_EQ(rows[0].q75, 4.75);
    // Round 2 values sorted: 2 4 5 9.
    EXPECT_DOUBLE_EQ(rows[1].q25, 3.5);
    EXPECT_DOUBLE_EQ(rows[1].q50, 4.5);
    EXPECT_DOUBLE_EQ(rows[1].q75, 6.0);
    EXPECT_DOUBLE_EQ(rows[1].cum_cost, 2.0);
    EXPECT_EQ(rows[2].algorithm, "b");
    EXPECT_DOUBLE_EQ(rows[2].q25, 7.0);
    EXPECT_DOUBLE_EQ(rows[2].q75, 7.0);
    std::ostringstream out;
    write_aggregate_csv(out, rows);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "algorithm,round,cum_cost,metric,q25,q50,q75");
    const auto summary = suite_summary(eps, rows);
    EXPECT_EQ(summary["algorithms"]["a"]["final_round"], 2);
    EXPECT_DOUBLE_EQ(summary["algorithms"]["a"]["median"]["cum_count_regret"].get<double>(), 4.5);
    const auto svg = aggregate_svg(rows, "cum_count_regret");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

// ---------------------------------------------------------------- suites

class SuiteTest : public ::testing::Test {
protected:
    std::shared_ptr<const BasisModel> basis = hat_model(64, 0.1, 0.1);
    SensingContext ctx = make_sensing_context(basis, build_action_set(I1, 7, false), {}, 5.0);
    GroundTruth truth = make_ground_truth(toy_intensity, ctx);
};

TEST_F(SuiteTest, SingleRepetitionQuantilesEqualTrace) {
    SuiteSpec spec;
    spec.algorithms = {Algorithm::random};
    spec.seeds = {5};
    spec.base.max_rounds = 12;
    const auto res = run_suite(ctx, truth, spec, 1);
    ASSERT_EQ(res.episodes.size(), 1u);
    const auto& e = res.episodes[0];
    for (const auto& r : res.aggregate) {
        const auto v = e.rounds[static_cast<std::size_t>(r.round - 1)].metric(r.metric);
        ASSERT_TRUE(v.has_value());
        EXPECT_EQ(r.q25, *v);
        EXPECT_EQ(r.q50, *v);
        EXPECT_EQ(r.q75, *v);
    }
}

TEST_F(SuiteTest, DeterministicAndIndependentOfWorkerCount) {
    SuiteSpec spec;
    spec.algorithms = {Algorithm::random, Algorithm::epsilon_greedy};
    spec.seeds = {1, 2, 3};
    spec.base.max_rounds = 10;
    auto text = [&](int jobs) {
        std::ostringstream s;
        write_aggregate_csv(s, run_suite(ctx, truth, spec, jobs).aggregate);
        return s.str();
    };
    const std::string a = text(1);
    EXPECT_EQ(a, text(1));
    EXPECT_EQ(a, text(3));
    const auto res = run_suite(ctx, truth, spec, 2);
    for (const auto& r : res.aggregate) {
        EXPECT_LE(r.q25, r.q50);
        EXPECT_LE(r.q50, r.q75);
    }
    EXPECT_EQ(res.episodes[0].algorithm, "random");
    EXPECT_EQ(res.episodes[3].algorithm, "epsilon-greedy");
    EXPECT_EQ(res.episodes[4].seed, 2u);
}

TEST_F(SuiteTest, RandomPolicyHasPositiveMedianRegretOnToy) {
    SuiteSpec spec;
    spec.algorithms = {Algorithm::random};
    for (std::uint64_t s = 1; s <= 10; ++s) spec.seeds.push_back(s);
    spec.base.max_rounds = 400;
    const auto res = run_suite(ctx, truth, spec, 0);
    std::vector<double> final;
    for (const auto& e : res.episodes) {
        ASSERT_EQ(e.rounds.size(), 400u);
        final.push_back(e.series("cum_count_regret").back());
    }
    EXPECT_GT(quantile7(final, 0.5), 0.0);
    EXPECT_GT(res.summary["algorithms"]["random"]["median"]["cum_count_regret"].get<double>(), 0.0);
}

TEST_F(SuiteTest, FailedCellsAreRecordedAndSuiteContinues) {
    SuiteSpec spec;
    spec.algorithms = {Algorithm::top2_levelset, Algorithm::random};
    spec.seeds = {1};
    spec.base.max_rounds = 3;
    const auto res = run_suite(ctx, truth, spec, 1);
    ASSERT_EQ(res.summary["failed_cells"].size(), 1u);
    EXPECT_EQ(res.summary["failed_cells"][0]["algorithm"], "top2-levelset");
    EXPECT_EQ(res.episodes[1].rounds.size(), 3u);
    EXPECT_THROW(run_suite(ctx, truth, SuiteSpec{}, 1), ConfigError);
}

TEST(Jobs, ExplicitEnvironmentAndDefault) {
    ::unsetenv("COXSENSE_JOBS");
    EXPECT_EQ(resolve_jobs(0), 1);
    EXPECT_EQ(resolve_jobs(3), 3);
    ::setenv("COXSENSE_JOBS", "4", 1);
    EXPECT_EQ(resolve_jobs(0), 4);
    EXPECT_EQ(resolve_jobs(2), 2);
    ::setenv("COXSENSE_JOBS", "zero", 1);
    EXPECT_THROW(resolve_jobs(0), ConfigError);
    ::unsetenv("COXSENSE_JOBS");
}

// ---------------------------------------------------------------- configuration

TEST(Config, ShippedConfigsValidateAndRoundTrip) {
    for (const char* name : {"toy_thompson.json", "toy_suite.json", "levelset_2d.json", "nmf_basis.json"}) {
        const auto c = load_config(config_path(name));
        EXPECT_NO_THROW(validate(c)) << name;
        const auto again = config_from_json(nlohmann::json::parse(to_json(c).dump()));
        EXPECT_TRUE(again == c) << name;
        EXPECT_EQ(config_hash(again), config_hash(c));
    }
    const auto toy = load_config(config_path("toy_thompson.json"));
    EXPECT_EQ(toy.basis.m, 64);
    EXPECT_EQ(toy.rounds, 400);
    EXPECT_DOUBLE_EQ(toy.kernel.lengthscale, 0.1);
    EXPECT_DOUBLE_EQ(toy.duration, 5.0);
    EXPECT_EQ(build_action_set(make_domain(toy), toy.depth, toy.ancestors).size(), 128u);
}

TEST(Config, UnknownKeysRejectedWithPath) {
    auto j = small_config("out");
    j["kernel"]["lenghtscale"] = 0.2;
    try {
        config_from_json(j);
        FAIL() << "expected a config error";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("kernel.lenghtscale"), std::string::npos) << e.what();
    }
    auto top = small_config("out");
    top["colour"] = "red";
    EXPECT_THROW(config_from_json(top), ConfigError);
    auto typed = small_config("out");
    typed["rounds"] = "many";
    EXPECT_THROW(config_from_json(typed), ConfigError);
}

TEST(Config, ValidationNamesField) {
    auto expect_field = [](ExperimentConfig c, const std::string& field) {
        try {
            validate(c);
            ADD_FAILURE() << "expected failure on " << field;
        } catch (const ConfigError& e) {
            EXPECT_EQ(std::string(e.what()).rfind(field, 0), 0u) << e.what();
        }
    };
    ExperimentConfig c;
    EXPECT_NO_THROW(validate(c));
    auto bad = c;
    bad.kernel.lengthscale = 0;
    expect_field(bad, "kernel.lengthscale");
    bad = c;
    bad.algorithm = "greedy";
    expect_field(bad, "algorithm.name");
    bad = c;
    bad.lower = {0, 0};
    bad.upper = {1, 1};
    bad.truth = "constant:1";
    bad.basis.m = 10;
    expect_field(bad, "basis.m");
    bad = c;
    bad.algorithm = "top2-levelset";
    expect_field(bad, "tau");
    bad = c;
    bad.sampler = "hmc";
    expect_field(bad, "sampler.kind");
    bad = c;
    bad.truth = "file:/nonexistent/truth.csv";
    expect_field(bad, "truth");
}

TEST(Config, HashIgnoresOutputButNotSeed) {
    ExperimentConfig a;
    auto b = a;
    b.output = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seed = 2;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, SuiteSeedsAreConsecutive) {
    ExperimentConfig c;
    c.seed = 7;
    c.repetitions = 3;
    c.suite_algorithms = {"thompson", "random"};
    const auto s = make_suite_spec(c);
    EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{7, 8, 9}));
    ASSERT_EQ(s.algorithms.size(), 2u);
    EXPECT_EQ(s.algorithms[1], Algorithm::random);
}

// ---------------------------------------------------------------- posterior sampling

TEST(Sample, ToyPosteriorMeanCloserThanPriorMean) {
    const auto b = hat_model(32, 0.1, 0.1);
    Rng rng(8);
    const auto draw = simulate_point_process(toy_intensity, Region::whole(I1), 29.0, rng);
    ASSERT_GT(draw.count, 30);
    ASSERT_LT(draw.count, 75);
    const auto grid = regular_grid(I1, 256, true);
    const Matrix F = b->feature_matrix(grid);
    Vector truth(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t g = 0; g < grid.size(); ++g) truth(static_cast<Eigen::Index>(g)) = toy_intensity(grid[g]);
    auto mean_intensity = [&](PosteriorModel& post, std::uint64_t seed) {
        post.refresh(1e-6);
        MyulaConfig mc;
        mc.steps = 4000;
        Rng r(seed);
        const auto chain = myula_sample(post, mc, r);
        Vector m = Vector::Zero(F.rows());
        for (const auto& th : chain.samples) m += F * post.project(th);
        return Vector(m / static_cast<double>(chain.samples.size()));
    };
    PosteriorModel prior(b);
    PosteriorModel post(b);
    post.observe({1, Region::whole(I1), 29.0, draw.locations});
    const double prior_err = (mean_intensity(prior, 1) - truth).norm();
    const double post_err = (mean_intensity(post, 1) - truth).norm();
    EXPECT_LT(post_err, prior_err);
}

// ---------------------------------------------------------------- command line

TEST(Cli, BasisHatAndBernstein) {
    const auto dir = scratch("cli_basis");
    auto j = small_config(dir / "hat");
    j["kernel"]["lengthscale"] = 0.1;
    j["basis"]["m"] = 8;
    auto r = cli("basis --config " + write_config(dir, j).string(), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const auto info = nlohmann::json::parse(slurp(dir / "hat" / "basis.json"));
    EXPECT_LE(info["covariance_residual"].get<double>(), 1e-6);
    const auto t = csv::read((dir / "hat" / "basis.csv").string());
    std::set<std::string> columns;
    for (const auto& row : t.rows) columns.insert(row[0]);
    EXPECT_EQ(columns.size(), 8u);

    j["basis"]["kind"] = "bernstein";
    j["output"] = (dir / "bern").string();
    r = cli("basis --config " + write_config(dir, j).string(), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const auto bt = csv::read((dir / "bern" / "basis.csv").string());
    std::map<std::string, double> sums;
    for (const auto& row : bt.rows) sums[row[1]] += std::stod(row[2]);
    ASSERT_FALSE(sums.empty());
    for (const auto& [x, s] : sums) EXPECT_NEAR(s, 1.0, 1e-12) << x;
}

TEST(Cli, NmfBasisIsDeterministic) {
    const auto dir = scratch("cli_nmf");
    auto j = load_config(config_path("nmf_basis.json"));
    auto run = [&](const std::string& sub) {
        const auto r = cli("basis --config " + config_path("nmf_basis.json") + " --out " + (dir / sub).string(), dir);
        EXPECT_EQ(r.status, 0) << r.err;
        return slurp(dir / sub / "basis.csv") + slurp(dir / sub / "basis.json") + slurp(dir / sub / "nmf_basis.csv");
    };
    EXPECT_EQ(run("a"), run("b"));
    EXPECT_EQ(j.basis.m, 8);
}

TEST(Cli, UnknownAlgorithmIsValidationErrorWithoutOutputs) {
    const auto dir = scratch("cli_bad_alg");
    auto j = small_config(dir / "out");
    j["algorithm"] = {{"name", "greedy"}};
    const auto r = cli("run --config " + write_config(dir, j).string(), dir);
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.err.find("algorithm.name"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("thompson"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("random"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Cli, ToyThompsonRunWritesFourHundredRounds) {
    const auto dir = scratch("cli_toy");
    const auto r = cli("run --config " + config_path("toy_thompson.json") + " --out " + (dir / "run").string(), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(data_rows(dir / "run" / "rounds.csv"), 400u);
    const std::string trace = slurp(dir / "run" / "trace.csv");
    EXPECT_EQ(trace.rfind("# coxsense config_hash=", 0), 0u);
    EXPECT_NE(trace.find("seed=1"), std::string::npos);
}

TEST(Cli, RunAndSuiteAreReproducible) {
    const auto dir = scratch("cli_repro");
    auto j = small_config(dir / "unused");
    j["suite"] = {{"algorithms", {"thompson", "random"}}, {"repetitions", 3}};
    const auto cfg = write_config(dir, j).string();
    for (const char* sub : {"a", "b"}) {
        const auto run = cli("run --config " + cfg + " --out " + (dir / "run" / sub).string(), dir);
        ASSERT_EQ(run.status, 0) << run.err;
        const auto suite = cli("suite --config " + cfg + " --jobs 2 --svg --out " + (dir / "suite" / sub).string(), dir);
        ASSERT_EQ(suite.status, 0) << suite.err;
    }
    for (const char* f : {"trace.csv", "rounds.csv", "log.csv", "run.json"})
        EXPECT_EQ(slurp(dir / "run" / "a" / f), slurp(dir / "run" / "b" / f)) << f;
    for (const char* f : {"aggregate.csv", "traces.csv", "summary.json"})
        EXPECT_EQ(slurp(dir / "suite" / "a" / f), slurp(dir / "suite" / "b" / f)) << f;
    const auto agg = csv::read((dir / "suite" / "a" / "aggregate.csv").string());
    std::set<std::string> algs;
    for (const auto& row : agg.rows) algs.insert(row[0]);
    EXPECT_EQ(algs, (std::set<std::string>{"random", "thompson"}));
    EXPECT_TRUE(fs::exists(dir / "suite" / "a" / "aggregate.svg"));
    EXPECT_EQ(nlohmann::json::parse(slurp(dir / "suite" / "a" / "summary.json"))["cells"], 6);
}

TEST(Cli, FitConstantEventsAndRejectMalformedRows) {
    const auto dir = scratch("cli_fit");
    write_constant_events(dir / "ev.csv", 10000, 2500.0, true, 13);
    auto j = small_config(dir / "fit");
    j["basis"]["m"] = 16;
    j["lower_bound"] = 0.0;
    const auto cfg = write_config(dir, j).string();
    auto r = cli("fit --config " + cfg + " --events " + (dir / "ev.csv").string(), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const auto info = nlohmann::json::parse(slurp(dir / "fit" / "truth.json"));
    EXPECT_NEAR(info["grid_mean"].get<double>(), 2.0, 0.3);
    const std::string first = slurp(dir / "fit" / "truth.csv");
    r = cli("fit --config " + cfg + " --events " + (dir / "ev.csv").string(), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(slurp(dir / "fit" / "truth.csv"), first);

    spit(dir / "bad.csv", "x,t\n0.1,0\n0.3,1\nzz,2\n");
    r = cli("fit --config " + cfg + " --events " + (dir / "bad.csv").string(), dir);
    EXPECT_NE(r.status, 0);
    EXPECT_NE(r.err.find(":4"), std::string::npos) << r.err;
    spit(dir / "empty.csv", "x,t\n");
    r = cli("fit --config " + cfg + " --events " + (dir / "empty.csv").string(), dir);
    EXPECT_NE(r.status, 0);
    EXPECT_NE(r.err.find("empty"), std::string::npos) << r.err;
    r = cli("fit --config " + cfg + " --events " + (dir / "missing.csv").string(), dir);
    EXPECT_EQ(r.status, 2);
}

TEST(Cli, EmptyPriorSamplesAreFeasibleAndReproducible) {
    const auto dir = scratch("cli_sample");
    auto j = small_config(dir / "unused");
    const auto cfg = write_config(dir, j).string();
    for (const char* sub : {"a", "b"}) {
        const auto r = cli("sample --config " + cfg + " --empty-prior --chains 2 --thin 10 --out " + (dir / sub).string(), dir);
        ASSERT_EQ(r.status, 0) << r.err;
    }
    const auto t = csv::read((dir / "a" / "intensity.csv").string());
    ASSERT_GT(t.rows.size(), 0u);
    const int v = t.column("value");
    for (const auto& row : t.rows) ASSERT_GE(std::stod(row[static_cast<std::size_t>(v)]), 0.1 - 1e-6);
    EXPECT_EQ(slurp(dir / "a" / "chains.csv"), slurp(dir / "b" / "chains.csv"));
    EXPECT_EQ(slurp(dir / "a" / "intensity.csv"), slurp(dir / "b" / "intensity.csv"));
    const auto r = cli("sample --config " + cfg + " --out " + (dir / "c").string(), dir);
    EXPECT_EQ(r.status, 2);
}

TEST(Cli, SampleFromRunLog) {
    const auto dir = scratch("cli_sample_log");
    auto j = small_config(dir / "run");
    const auto cfg = write_config(dir, j).string();
    auto r = cli("run --config " + cfg, dir);
    ASSERT_EQ(r.status, 0) << r.err;
    r = cli("sample --config " + cfg + " --log " + (dir / "run" / "log").string() + " --out " + (dir / "s").string(), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const auto info = nlohmann::json::parse(slurp(dir / "s" / "sample.json"));
    EXPECT_EQ(info["chains"][0]["samples"], 50);
    EXPECT_EQ(info["seed"], 4);
}
