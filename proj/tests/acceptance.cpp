// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <thread>

#include "fedsel/clp.hpp"
#include "fedsel/config.hpp"
#include "fedsel/cost.hpp"
#include "fedsel/engine.hpp"
#include "fedsel/model.hpp"
#include "fedsel/partition.hpp"
#include "fedsel/report.hpp"
#include "fedsel/rng.hpp"
#include "fedsel/selection.hpp"
#include "fedsel/sweep.hpp"
#include "oracles.hpp"

using namespace fedsel;
using nlohmann::json;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- 1

void formula_oracles() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(20240601);
    double worst = 0;
    std::size_t count_mismatch = 0;
    constexpr int instances = 200;

    for (int i = 0; i < instances; ++i) {
        std::vector<double> losses(1 + rng.below(50));
        for (auto& l : losses) l = rng.uniform(0, 5);
        const double cost = rng.uniform(14.96, 947);
        worst = std::max(worst, oracle::rel(utility(losses, losses.size()), oracle::utility(losses)));
        worst = std::max(worst, oracle::rel(utility_per_cost(losses, losses.size(), cost), oracle::utility(losses) / cost));
    }

    for (int i = 0; i < instances; ++i) {
        const std::size_t dim = 1 + rng.below(30), clients = 1 + rng.below(8);
        ModelParams base;
        base.layout = {{"v", {dim}}};
        base.values.resize(dim);
        for (auto& v : base.values) v = rng.uniform(-1, 1);
        std::vector<LocalTrainResult> results;
        std::vector<std::vector<double>> deltas;
        std::vector<double> counts;
        for (std::size_t c = 0; c < clients; ++c) {
            LocalTrainResult r;
            r.client_id = static_cast<int>(c);
            r.num_samples = 1 + rng.below(100);
            r.delta.resize(dim);
            for (auto& v : r.delta) v = rng.uniform(-1, 1);
            r.per_sample_losses.assign(r.num_samples, 0.0);
            deltas.push_back(r.delta);
            counts.push_back(static_cast<double>(r.num_samples));
            results.push_back(std::move(r));
        }
        const auto got = fed_avg(base, results).values;
        const auto want = oracle::fed_avg(base.values, deltas, counts);
        worst = std::max(worst, oracle::relative_error(got, want));
    }

    for (int i = 0; i < instances; ++i) {
        CostModel model;
        const std::size_t n = 1 + rng.below(60);
        for (std::size_t c = 0; c < n; ++c) model.per_client_cost.push_back(rng.uniform(14.96, 947));
        model.per_client_region.assign(n, "r");
        model.energy_per_round_kwh = rng.uniform(1e-4, 1e-2);
        std::vector<int> ids;
        std::vector<double> costs;
        for (std::size_t c = 0; c < n; ++c)
            if (rng.below(2)) {
                ids.push_back(static_cast<int>(c));
                costs.push_back(model.per_client_cost[c]);
            }
        const double want = oracle::emissions(costs, model.energy_per_round_kwh);
        const double got = round_emissions(ids, model);
        worst = std::max(worst, ids.empty() ? std::fabs(got) : oracle::rel(got, want));
    }

    for (int i = 0; i < instances; ++i) {
        std::vector<double> curve(1 + rng.below(40));
        double a = rng.uniform01();
        const double step = rng.uniform(0, 0.03);
        for (auto& v : curve) v = (a += rng.uniform(-step, step));
        const std::size_t w = 1 + rng.below(8);
        const double t = rng.uniform(0.001, 0.02);
        double mu = 0;
        const bool want = oracle::clp_ended(curve, w, t, &mu);
        if (std::fabs(mu - t) > 1e-12 && clp_ended(curve, w, t) != want) ++count_mismatch;
    }

    for (int i = 0; i < instances; ++i) {
        const auto strategy = static_cast<ScalingStrategy>(rng.below(3));
        auto cfg = ClpConfig::defaults_for(strategy);
        const std::size_t n = 10 + rng.below(1000);
        const auto b = resolve_bounds(cfg, n);
        const std::size_t end = 1 + rng.below(50);
        std::size_t prev = 0;
        long long oprev = 0;
        const auto os = strategy == ScalingStrategy::steady_step   ? oracle::Strategy::steady
                        : strategy == ScalingStrategy::rapid_taper ? oracle::Strategy::rapid
                                                                   : oracle::Strategy::modest;
        for (std::size_t r = 1; r <= 100; ++r) {
            prev = participant_count(cfg, r, r <= end, prev, n);
            oprev = oracle::count(os, cfg.alpha, cfg.beta, cfg.initial_fraction, static_cast<long long>(b.k_min),
                                  static_cast<long long>(b.k_max), r, r <= end, oprev, static_cast<long long>(n));
            if (static_cast<long long>(prev) != oprev) ++count_mismatch;
        }
    }

    const double elapsed = seconds_since(t0);
    verdict(1, worst <= 1e-9 && count_mismatch == 0 && elapsed < 10.0,
            fmt("%.0f instances per formula, max rel err %.2e, %.0f exact mismatches, %.2fs", instances, worst,
                static_cast<double>(count_mismatch), elapsed));
}

// ---------------------------------------------------------------- 2

void gradient_check() {
    Rng rng(77);
    double worst = 0;
    int instances = 0;
    for (auto kind : {ModelKind::softmax_regression, ModelKind::mlp_one_hidden}) {
        for (int i = 0; i < 25; ++i, ++instances) {
            const std::size_t d = 2 + rng.below(6), l = 2 + rng.below(5), h = 1 + rng.below(8);
            auto p = init_params(kind, kind == ModelKind::mlp_one_hidden ? h : 0, d, l, rng.next());
            for (auto& v : p.values) v = rng.uniform(-1, 1);
            std::vector<double> x(d);
            for (auto& v : x) v = rng.uniform(-2, 2);
            const int y = static_cast<int>(rng.below(l));
            std::vector<double> analytic;
            sample_loss(p, x, y, &analytic);
            const auto numeric = oracle::numeric_gradient(
                [&](const std::vector<double>& values) {
                    ModelParams q = p;
                    q.values = values;
                    return sample_loss(q, x, y);
                },
                p.values);
            worst = std::max(worst, oracle::relative_error(analytic, numeric));
        }
    }
    verdict(2, worst < 1e-5, fmt("%.0f instances over both model kinds, max rel err %.2e", instances, worst));
}

// ---------------------------------------------------------------- 3

void partition_endpoints() {
    const auto ds = generate_synthetic(10000, 10, 5, 1.0, 3);
    std::size_t single = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        for (const auto& s : partition_non_iid(ds, {10, 1.0, seed})) {
            const auto h = class_histogram(s, ds);
            single += std::count_if(h.begin(), h.end(), [](auto c) { return c > 0; }) == 1;
            ++total;
        }
    std::vector<std::size_t> global(10, 0);
    for (int y : ds.labels) ++global[static_cast<std::size_t>(y)];
    double tv = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto shards = partition_non_iid(ds, {10, 0.0, seed});
        for (const auto& s : shards) tv += oracle::tv_distance(class_histogram(s, ds), global);
    }
    tv /= 200.0;
    verdict(3, single == total && tv < 0.05,
            fmt("knob=1 single-class shards %.0f/%.0f, knob=0 mean TV %.4f", static_cast<double>(single),
                static_cast<double>(total), tv));
}

// ---------------------------------------------------------------- 4

void clp_trajectories() {
    std::vector<double> curve;
    for (int r = 1; r <= 200; ++r) curve.push_back(0.8 * (1.0 - std::exp(-r / 20.0)));

    std::size_t reference = 0;
    for (std::size_t r = 1; r <= curve.size() && reference == 0; ++r)
        if (oracle::clp_ended(std::span(curve).first(r), 5, 0.005)) reference = r;

    bool ok = reference > 0;
    std::size_t detected = 0;
    std::string detail;
    const std::size_t n = 1000;  // K1 = 100 = K_min, K_max = 1000

    for (auto strategy : {ScalingStrategy::steady_step, ScalingStrategy::rapid_taper, ScalingStrategy::modest_shift}) {
        auto cfg = ClpConfig::defaults_for(strategy);
        cfg.window = 5;
        cfg.threshold = 0.005;
        ClpController ctl(cfg, n);
        std::size_t mismatches = 0;
        long long peak = 0;
        for (std::size_t r = 1; r <= 200; ++r) {
            const auto k = static_cast<long long>(ctl.next_count());
            long long want = 0;
            const auto rs = static_cast<long long>(r);
            const auto rstar = static_cast<long long>(reference);
            switch (strategy) {
                case ScalingStrategy::steady_step:
                    peak = 100 + 10 * (rstar - 1);
                    if (rs <= rstar) want = 100 + 10 * (rs - 1);
                    else {
                        // ceil(peak / 2^j), floored at K_min
                        const auto j = rs - rstar;
                        want = j >= 62 ? 1 : (peak + (1LL << j) - 1) >> j;
                        want = std::max(want, 100LL);
                    }
                    break;
                case ScalingStrategy::rapid_taper:
                    peak = std::min<long long>(1000, 100LL << std::min<long long>(rstar - 1, 20));
                    if (rs <= rstar) want = std::min<long long>(1000, 100LL << std::min<long long>(rs - 1, 20));
                    else want = std::max(100LL, peak - 10 * (rs - rstar));
                    break;
                case ScalingStrategy::modest_shift:
                    peak = std::min<long long>(1000, 100 + 15 * (rstar - 1));
                    if (rs <= rstar) want = std::min<long long>(1000, 100 + 15 * (rs - 1));
                    else want = std::max(100LL, peak - 15 * (rs - rstar));
                    break;
            }
            if (k != want) ++mismatches;
            if (ctl.observe(curve[r - 1])) detected = r;
        }
        ok = ok && mismatches == 0 && detected == reference;
        detail += std::string(to_string(strategy)) + " mismatches " + std::to_string(mismatches) + "; ";
    }
    verdict(4, ok, "r* reference " + std::to_string(reference) + ", detected " + std::to_string(detected) + "; " + detail);
}

// ---------------------------------------------------------------- 5-8

constexpr double bench_knob = 0.9;
const std::vector<std::uint64_t> bench_seeds = {1, 2, 3, 4, 5};

json benchmark_doc() {
    return read_json_file(std::string(FEDSEL_SOURCE_DIR) + "/configs/benchmark.json");
}

std::size_t jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

void directional(const json& base) {
    const auto t0 = std::chrono::steady_clock::now();
    SweepSpec spec;
    spec.base = base;
    spec.policies = {Policy::random, Policy::utility, Policy::utility_cost, Policy::clp_utility_cost};
    spec.knobs = {bench_knob};
    spec.seeds = bench_seeds;
    spec.stop_at_target = true;
    spec.output_dir = std::filesystem::temp_directory_path() / "fedsel_acceptance";
    const auto rows = run_sweep(spec, jobs(), false);

    auto collect = [&](Policy p, bool cost) {
        std::vector<double> v;
        for (const auto& r : rows) {
            if (r.policy != p) continue;
            if (cost) v.push_back(r.cost_to_target.value_or(inf));
            else v.push_back(r.rounds_to_target ? static_cast<double>(*r.rounds_to_target) : inf);
        }
        return v;
    };
    const double rnd_cost = median(collect(Policy::random, true));
    const double rnd_rounds = median(collect(Policy::random, false));
    const double uc_cost = median(collect(Policy::utility_cost, true));
    const double uc_rounds = median(collect(Policy::utility_cost, false));
    const double u_rounds = median(collect(Policy::utility, false));
    const double clp_cost = median(collect(Policy::clp_utility_cost, true));
    const double clp_rounds = median(collect(Policy::clp_utility_cost, false));
    const double elapsed = seconds_since(t0);

    std::vector<double> targets;
    for (const auto& r : rows)
        if (r.policy == Policy::random && r.target_accuracy) targets.push_back(*r.target_accuracy);
    std::printf("  benchmark: median random convergence accuracy %.4f over %zu seeds\n", median(targets),
                bench_seeds.size());

    const double saving = 1.0 - uc_cost / rnd_cost;
    verdict(5, saving >= 0.40 && elapsed < 600,
            fmt("utility_cost carbon to target %.1f vs random %.1f (%.1f%% lower, need >= 40%%), %.0fs", uc_cost,
                rnd_cost, 100 * saving, elapsed));

    const double fewer = 1.0 - u_rounds / rnd_rounds;
    verdict(6, u_rounds < rnd_rounds && fewer >= 0.20,
            fmt("utility rounds to target %.0f vs random %.0f (%.1f%% fewer, need >= 20%%)", u_rounds, rnd_rounds,
                100 * fewer));

    const double clp_fewer = 1.0 - clp_rounds / uc_rounds;
    const double clp_carbon = clp_cost / uc_cost - 1.0;
    verdict(7, clp_fewer >= 0.10 && std::fabs(clp_carbon) <= 0.15,
            fmt("clp_utility_cost rounds %.0f vs utility_cost %.0f (%.1f%% fewer, need >= 10%%), carbon %+.1f%% "
                "(need within 15%%)",
                clp_rounds, uc_rounds, 100 * clp_fewer, 100 * clp_carbon));
}

void cost_degradation(const json& base) {
    SweepSpec spec;
    spec.base = base;
    spec.policies = {Policy::random};
    spec.knobs = {bench_knob};
    spec.seeds = bench_seeds;
    std::vector<double> rnd, cst;
    bool binding = true;
    for (auto seed : bench_seeds) {
        for (auto policy : {Policy::random, Policy::cost}) {
            const auto config = config_from_json(cell_document(spec, policy, bench_knob, seed));
            const auto result = run_experiment(config);
            (policy == Policy::random ? rnd : cst).push_back(result.rounds.back().accuracy);
            if (policy == Policy::cost) {
                std::map<int, std::size_t> times;
                std::size_t most = 0;
                for (const auto& rec : result.rounds)
                    for (int id : rec.participants) most = std::max(most, ++times[id]);
                binding = binding && result.selection_cap && most == *result.selection_cap;
            }
        }
    }
    const double r = median(rnd), c = median(cst);
    verdict(8, binding && c < r,
            fmt("final accuracy cost %.4f vs random %.4f", c, r) +
                (binding ? " (cap reached in every cost run)" : " (cap not reached in some cost run)"));
}

// ---------------------------------------------------------------- 9

void determinism(const json& base) {
    SweepSpec spec;
    spec.base = base;
    bool identical = true;
    std::size_t compared = 0;
    for (auto policy : {Policy::random, Policy::utility_cost, Policy::clp_utility_cost}) {
        auto config = config_from_json(cell_document(spec, policy, bench_knob, 1));
        config.max_rounds = std::min<std::size_t>(config.max_rounds, 60);
        const auto env = build_environment(config);
        std::string first;
        for (std::size_t j : {1, 4, 1, 3}) {
            config.jobs = j;
            const auto log = run_log_jsonl(run_experiment(config, env), config);
            if (first.empty()) first = log;
            identical = identical && log == first;
            ++compared;
        }
        // a fresh environment from the same config must match as well
        config.jobs = 2;
        identical = identical && run_log_jsonl(run_experiment(config), config) == first;
        ++compared;
    }
    verdict(9, identical, fmt("%.0f executions over 3 policies and thread counts {1,2,3,4}: ", compared) +
                              (identical ? "byte-identical run logs" : "logs differ"));
}

// ---------------------------------------------------------------- 10

void fixture_stats() {
    const auto loaded = load_traces(default_trace_dir());
    const auto s = summarize(loaded.traces);
    const bool ok = s.regions == 123 && std::fabs(s.min_average - 14.96) <= 0.5 &&
                    std::fabs(s.max_average - 947.0) <= 0.5 && std::fabs(s.mean_average - 369.74) <= 0.5;
    verdict(10, ok, fmt("%.0f regions, min %.4f, max %.4f, mean %.4f", static_cast<double>(s.regions), s.min_average,
                        s.max_average, s.mean_average));
}

}  // namespace

int main() {
    try {
        formula_oracles();
        gradient_check();
        partition_endpoints();
        clp_trajectories();
        const auto base = benchmark_doc();
        directional(base);
        cost_degradation(base);
        determinism(base);
        fixture_stats();
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 2;
    }
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
