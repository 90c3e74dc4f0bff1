#pragma once

// Fit-and-test ground truths, metric series and multi-seed suites.

#include "coxsense/linalg.hpp"
#include "coxsense/protocol.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <thread>

namespace coxsense {

// ---------------------------------------------------------------------------------------------
// Fitting

/// Event locations with optional timestamps.
struct EventData {
    std::vector<Point> points;
    std::vector<double> times;   // empty when the file has no `t` column
};

/// Reads `x[,y][,t]` rows. Malformed rows raise ParseError with the line number.
inline EventData read_events_csv(const std::string& path, int dim) {
    const auto t = csv::read(path);
    const int cx = t.column("x"), cy = t.column("y"), ct = t.column("t");
    if (cx < 0 || (dim == 2 && cy < 0)) throw ParseError(path + ": header must contain x" + (dim == 2 ? ",y" : ""));
    if (dim == 1 && cy >= 0) throw ParseError(path + ": 2-d events given for a 1-d domain");
    EventData ev;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string where = path + ":" + std::to_string(t.line_numbers[r]);
        Point p(dim);
        p(0) = csv::to_double(row[static_cast<std::size_t>(cx)], where);
        if (dim == 2) p(1) = csv::to_double(row[static_cast<std::size_t>(cy)], where);
        ev.points.push_back(p);
        if (ct >= 0) ev.times.push_back(csv::to_double(row[static_cast<std::size_t>(ct)], where));
    }
    return ev;
}

struct FittedTruth {
    Vector theta;
    double duration = 0.0;
    Intensity lambda;
};

/// MAP fit of the whole record, treated as one exposure of the entire domain. The duration
/// is the time span of the record when timestamps exist, otherwise `fallback_duration`.
inline FittedTruth fit_ground_truth(const EventData& events, std::shared_ptr<const BasisModel> basis,
                                    double fallback_duration, double tol = 1e-6) {
    if (events.points.empty()) throw ParameterError("fit: event file is empty");
    const Domain& D = basis->domain();
    for (const auto& p : events.points)
        if (!D.contains(p)) throw DomainError("fit: event outside the domain");
    double duration = fallback_duration;
    if (!events.times.empty()) {
        const auto [lo, hi] = std::minmax_element(events.times.begin(), events.times.end());
        duration = *hi - *lo;
    }
    if (!(duration > 0)) throw ParameterError("fit: dataset duration is zero");
    PosteriorModel post(basis);
    post.observe({1, Region::whole(D), duration, events.points});
    post.refresh(tol);
    FittedTruth f;
    f.theta = post.map();
    f.duration = duration;
    f.lambda = model_intensity(basis, f.theta);
    return f;
}

// ---------------------------------------------------------------------------------------------
// Metric series

struct RegretSeries {
    std::vector<double> instantaneous;
    std::vector<double> cumulative;
};

/// Count regret of a sequence of sensed regions (indices into the action set).
inline RegretSeries count_regret(const GroundTruth& truth, const SensingContext& ctx, const std::vector<std::size_t>& trace) {
    RegretSeries s;
    double cum = 0.0;
    for (std::size_t a : trace) {
        const double r = count_regret(truth, ctx, a);
        cum += r;
        s.instantaneous.push_back(r);
        s.cumulative.push_back(cum);
    }
    return s;
}

// ---------------------------------------------------------------------------------------------
// Suites

struct SuiteSpec {
    std::vector<Algorithm> algorithms;
    std::vector<std::uint64_t> seeds;
    RunConfig base;   // algorithm and seed are overwritten per cell
};

struct AggregateRow {
    std::string algorithm;
    int round = 0;
    double cum_cost = 0.0;   // median over repetitions reaching the round
    std::string metric;
    double q25 = 0.0, q50 = 0.0, q75 = 0.0;
};

struct SuiteResult {
    std::vector<EpisodeRecord> episodes;   // algorithm-major, then seed
    std::vector<AggregateRow> aggregate;
    nlohmann::json summary;
};

/// Worker count: explicit value if positive, else COXSENSE_JOBS, else 1.
inline int resolve_jobs(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("COXSENSE_JOBS")) {
        try {
            const int j = std::stoi(env);
            if (j > 0) return j;
        } catch (const std::exception&) {
        }
        throw ConfigError("COXSENSE_JOBS must be a positive integer");
    }
    return 1;
}

/// Per-round 25/50/75% quantiles of every metric across the repetitions of each algorithm.
inline std::vector<AggregateRow> aggregate_episodes(const std::vector<EpisodeRecord>& episodes) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const EpisodeRecord*>> by_alg;
    for (const auto& e : episodes) {
        if (!by_alg.count(e.algorithm)) order.push_back(e.algorithm);
        by_alg[e.algorithm].push_back(&e);
    }
    std::vector<AggregateRow> rows;
    for (const auto& alg : order) {
        const auto& eps = by_alg[alg];
        std::size_t T = 0;
        std::vector<std::string> names;
        for (const auto* e : eps) {
            T = std::max(T, e->rounds.size());
            if (names.empty() && !e->rounds.empty())
                for (const auto& [n, v] : e->rounds.front().metrics) names.push_back(n);
        }
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> cost;
            for (const auto* e : eps)
                if (t < e->rounds.size()) cost.push_back(e->rounds[t].cum_cost);
            const double cc = quantile7(cost, 0.5);
            for (const auto& n : names) {
                std::vector<double> v;
                for (const auto* e : eps)
                    if (t < e->rounds.size())
                        if (auto x = e->rounds[t].metric(n)) v.push_back(*x);
                if (v.empty()) continue;
                rows.push_back({alg, static_cast<int>(t + 1), cc, n, quantile7(v, 0.25), quantile7(v, 0.5), quantile7(v, 0.75)});
            }
        }
    }
    return rows;
}

/// Final-round medians per algorithm plus the failed cells.
inline nlohmann::json suite_summary(const std::vector<EpisodeRecord>& episodes, const std::vector<AggregateRow>& rows) {
    nlohmann::json algs = nlohmann::json::object();
    std::map<std::string, int> last_round;
    for (const auto& r : rows) last_round[r.algorithm] = std::max(last_round[r.algorithm], r.round);
    for (const auto& r : rows) {
        if (r.round != last_round[r.algorithm]) continue;
        algs[r.algorithm]["final_round"] = r.round;
        algs[r.algorithm]["median"][r.metric] = r.q50;
    }
    nlohmann::json failed = nlohmann::json::array();
    for (const auto& e : episodes) {
        if (!algs.contains(e.algorithm)) algs[e.algorithm] = {{"final_round", 0}, {"median", nlohmann::json::object()}};
        if (e.failure)
            failed.push_back({{"algorithm", e.algorithm}, {"seed", e.seed}, {"round", e.failure_round}, {"error", *e.failure}});
    }
    return {{"algorithms", algs}, {"failed_cells", failed}, {"cells", episodes.size()}};
}

/// Runs every (algorithm, seed) cell, in parallel over `jobs` threads. Cells share only
/// read-only state; results are ordered by cell, so output is independent of scheduling.
inline SuiteResult run_suite(const SensingContext& ctx, const GroundTruth& truth, const SuiteSpec& spec, int jobs = 0) {
    if (spec.algorithms.empty() || spec.seeds.empty()) throw ConfigError("suite: needs at least one algorithm and seed");
    const std::size_t n = spec.algorithms.size() * spec.seeds.size();
    SuiteResult res;
    res.episodes.resize(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < n; i = next++) {
            RunConfig cfg = spec.base;
            cfg.algorithm = spec.algorithms[i / spec.seeds.size()];
            cfg.seed = spec.seeds[i % spec.seeds.size()];
            res.episodes[i] = run_protocol(ctx, truth, cfg);
        }
    };
    const int j = std::min<int>(resolve_jobs(jobs), static_cast<int>(n));
    if (j <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < j; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    res.aggregate = aggregate_episodes(res.episodes);
    res.summary = suite_summary(res.episodes, res.aggregate);
    return res;
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
    out << "algorithm,round,cum_cost,metric,q25,q50,q75\n";
    for (const auto& r : rows)
        out << r.algorithm << "," << r.round << "," << csv::fmt(r.cum_cost) << "," << r.metric << "," << csv::fmt(r.q25)
            << "," << csv::fmt(r.q50) << "," << csv::fmt(r.q75) << "\n";
}

/// Quantile bands of one metric against rounds, one colour per algorithm.
inline std::string aggregate_svg(const std::vector<AggregateRow>& rows, const std::string& metric) {
    const double W = 640, H = 400, pad = 50;
    std::map<std::string, std::vector<const AggregateRow*>> by_alg;
    std::vector<std::string> order;
    double tmax = 1, ymin = 0, ymax = 1e-12;
    for (const auto& r : rows) {
        if (r.metric != metric) continue;
        if (!by_alg.count(r.algorithm)) order.push_back(r.algorithm);
        by_alg[r.algorithm].push_back(&r);
        tmax = std::max(tmax, static_cast<double>(r.round));
        ymin = std::min(ymin, r.q25);
        ymax = std::max(ymax, r.q75);
    }
    auto X = [&](double t) { return pad + (W - 2 * pad) * t / tmax; };
    auto Y = [&](double v) { return H - pad - (H - 2 * pad) * (v - ymin) / (ymax - ymin); };
    static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">round</text>\n";
    s << "<text x=\"10\" y=\"" << pad - 15 << "\">" << metric << " (max " << csv::fmt(ymax) << ")</text>\n";
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& pts = by_alg[order[k]];
        const char* c = colours[k % 7];
        s << "<polygon fill=\"" << c << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
        for (const auto* p : pts) s << X(p->round) << "," << Y(p->q75) << " ";
        for (auto it = pts.rbegin(); it != pts.rend(); ++it) s << X((*it)->round) << "," << Y((*it)->q25) << " ";
        s << "\"/>\n<polyline fill=\"none\" stroke=\"" << c << "\" points=\"";
        for (const auto* p : pts) s << X(p->round) << "," << Y(p->q50) << " ";
        s << "\"/>\n<text x=\"" << W - pad - 110 << "\" y=\"" << pad + 16 * k << "\" fill=\"" << c << "\">" << order[k] << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace coxsense
