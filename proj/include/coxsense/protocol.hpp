#pragma once

// The sense–update–act loop.

#include "coxsense/ground_truth.hpp"

#include <chrono>
#include <sstream>

namespace coxsense {

struct RunConfig {
    Algorithm algorithm = Algorithm::thompson;
    AlgorithmParams params;
    double budget = std::numeric_limits<double>::infinity();
    int max_rounds = 100;
    std::optional<double> tau;
    SamplerConfig sampler;
    std::uint64_t seed = 0;
    double map_tol = 1e-6;
};

struct RoundRecord {
    int round = 0;
    int region_id = 0;
    double cost = 0.0;
    double cum_cost = 0.0;
    int n_events = 0;
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<std::string> flags;

    [[nodiscard]] std::optional<double> metric(const std::string& name) const {
        for (const auto& [n, v] : metrics)
            if (n == name) return v;
        return std::nullopt;
    }
};

struct EpisodeRecord {
    std::string algorithm;
    std::uint64_t seed = 0;
    std::vector<RoundRecord> rounds;
    std::optional<std::string> failure;
    int failure_round = 0;
    bool task_complete = false;
    double seconds = 0.0;

    /// Metric values per round, in round order.
    [[nodiscard]] std::vector<double> series(const std::string& name) const {
        std::vector<double> out;
        for (const auto& r : rounds)
            if (auto v = r.metric(name)) out.push_back(*v);
        return out;
    }
};

/// Runs one episode. Selection uses the posterior of the previous round; the MAP is refreshed
/// (warm-started) after every observation. Stops when the spent budget reaches C, after T
/// rounds, when an acquisition reports the task complete, or on the first error, which is
/// recorded in the episode. The observation log is copied to `log_out` when given.
inline EpisodeRecord run_protocol(const SensingContext& ctx, const GroundTruth& truth, const RunConfig& cfg,
                                  ObservationLog* log_out = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    EpisodeRecord rec;
    rec.algorithm = to_string(cfg.algorithm);
    rec.seed = cfg.seed;
    PosteriorModel post(ctx.basis);
    std::vector<std::optional<RegionSampler>> truth_samplers(ctx.n_regions());
    double spent = 0.0, cum_regret = 0.0;
    int round = 0;
    try {
        post.refresh(cfg.map_tol);
        while (spent < cfg.budget && round < cfg.max_rounds) {
            ++round;
            int draw_index = 0;
            const SampleSource sample = [&]() {
                Rng rng = rng_stream(cfg.seed, "sampler", static_cast<std::uint64_t>(round),
                                     static_cast<std::uint64_t>(draw_index++));
                return draw_posterior_sample(post, cfg.sampler, rng);
            };
            Rng alg_rng = rng_stream(cfg.seed, "algorithm", static_cast<std::uint64_t>(round));
            Decision dec;
            switch (cfg.algorithm) {
                case Algorithm::thompson:
                    dec = act_cox_thompson(ctx, sample(), cfg.params.thompson_ignore_cost);
                    break;
                case Algorithm::top2_max:
                    dec = act_top2_max(ctx, sample, alg_rng, cfg.params.resample_cap);
                    break;
                case Algorithm::top2_levelset:
                    if (!cfg.tau) throw ConfigError("top2-levelset needs a threshold τ");
                    dec = act_top2_levelset(ctx, sample, post.log(), *cfg.tau, cfg.params.resample_cap);
                    break;
                case Algorithm::ucb_laplace:
                    dec = act_ucb_laplace(ctx, post, cfg.params.beta);
                    break;
                case Algorithm::v_optimal:
                    dec = act_v_optimal(ctx, post, cfg.params, cfg.tau, alg_rng);
                    break;
                case Algorithm::epsilon_greedy:
                    dec = act_epsilon_greedy(ctx, post.map(), cfg.params.epsilon0, round, alg_rng);
                    break;
                case Algorithm::random:
                    dec = act_random(ctx, alg_rng);
                    break;
            }
            if (dec.task_complete) {
                rec.task_complete = true;
                --round;
                break;
            }
            const Region& A = ctx.region(dec.region);
            auto& sim = truth_samplers[dec.region];
            if (!sim) sim.emplace(truth.lambda, A);
            Rng sense_rng = rng_stream(cfg.seed, "sensing", static_cast<std::uint64_t>(round));
            auto draw = sim->draw(ctx.duration, sense_rng);
            post.observe({round, A, ctx.duration, draw.locations}, ctx.psi(dec.region));
            post.refresh(cfg.map_tol);

            RoundRecord r;
            r.round = round;
            r.region_id = A.id;
            r.cost = ctx.costs[dec.region];
            spent += r.cost;
            r.cum_cost = spent;
            r.n_events = draw.count;
            r.flags = dec.flags;
            const double regret = count_regret(truth, ctx, dec.region);
            cum_regret += regret;
            r.metrics.emplace_back("count_regret", regret);
            r.metrics.emplace_back("cum_count_regret", cum_regret);
            r.metrics.emplace_back("realized_regret", r.cost * truth.best_ratio - draw.count);
            r.metrics.emplace_back("inference_regret", inference_regret(truth, ctx, post.map()));
            if (cfg.tau) r.metrics.emplace_back("f1", level_set_f1(truth, ctx, post.map(), *cfg.tau));
            rec.rounds.push_back(std::move(r));
        }
    } catch (const Error& e) {
        rec.failure = e.what();
        rec.failure_round = round;
    }
    if (log_out) *log_out = post.log();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

/// Long format: `round,algorithm,region_id,cost,cum_cost,n_events,metric_name,metric_value`.
/// Flags appear as metrics named `flag:<name>` with value 1; a failure as `failure` with the
/// failing round as value.
inline void write_episode_csv(std::ostream& out, const EpisodeRecord& rec, bool header = true) {
    if (header) out << "round,algorithm,region_id,cost,cum_cost,n_events,metric_name,metric_value\n";
    for (const auto& r : rec.rounds) {
        std::ostringstream head;
        head << r.round << "," << rec.algorithm << "," << r.region_id << "," << csv::fmt(r.cost) << ","
             << csv::fmt(r.cum_cost) << "," << r.n_events << ",";
        for (const auto& [n, v] : r.metrics) out << head.str() << n << "," << csv::fmt(v) << "\n";
        for (const auto& f : r.flags) out << head.str() << "flag:" << f << ",1\n";
    }
    if (rec.failure) out << rec.failure_round << "," << rec.algorithm << ",,,,,failure," << rec.failure_round << "\n";
}

/// One row per round: `round,algorithm,seed,region_id,cost,cum_cost,n_events,<metrics...>,flags`.
/// Flags are joined with ';'.
inline void write_round_table_csv(std::ostream& out, const EpisodeRecord& rec, bool header = true) {
    std::vector<std::string> names;
    if (!rec.rounds.empty())
        for (const auto& [n, v] : rec.rounds.front().metrics) names.push_back(n);
    if (header) {
        out << "round,algorithm,seed,region_id,cost,cum_cost,n_events";
        for (const auto& n : names) out << "," << n;
        out << ",flags\n";
    }
    for (const auto& r : rec.rounds) {
        out << r.round << "," << rec.algorithm << "," << rec.seed << "," << r.region_id << "," << csv::fmt(r.cost) << ","
            << csv::fmt(r.cum_cost) << "," << r.n_events;
        for (const auto& [n, v] : r.metrics) out << "," << csv::fmt(v);
        out << ",";
        for (std::size_t f = 0; f < r.flags.size(); ++f) out << (f ? ";" : "") << r.flags[f];
        out << "\n";
    }
}

}  // namespace coxsense
