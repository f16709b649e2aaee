#include "fedsel/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "fedsel/error.hpp"
#include "fedsel/rng.hpp"

namespace fedsel {

std::string_view to_string(StopReason reason) {
    switch (reason) {
        case StopReason::converged: return "converged";
        case StopReason::target_reached: return "target_reached";
        case StopReason::max_rounds: return "max_rounds";
        case StopReason::pool_exhausted: return "pool_exhausted";
    }
    return "unknown";
}

std::string default_trace_dir() { return std::string(FEDSEL_DATA_DIR) + "/carbon"; }

void ExperimentConfig::validate() const {
    if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
    if (dataset.source == DatasetConfig::Source::csv && dataset.csv_path.empty())
        throw ConfigError("dataset.csv_path is required when dataset.source is csv");
    if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0))
        throw ConfigError("dataset.test_fraction must lie in (0, 1)");
    PartitionSpec{partition.num_clients, partition.knob, partition.seed, partition.allow_empty}.validate();
    model.validate();
    selection.validate();
    if (selection.policy == Policy::clp_utility_cost) clp.validate();
    if (!(cost.energy_per_round_kwh > 0.0)) throw ConfigError("cost.energy_per_round_kwh must be > 0");
    if (stopping.kind == StoppingRule::Kind::convergence && stopping.patience < 1)
        throw ConfigError("stopping.patience must be >= 1");
    if (stopping.kind == StoppingRule::Kind::threshold &&
        !(stopping.target_accuracy >= 0.0 && stopping.target_accuracy <= 1.0))
        throw ConfigError("stopping.target_accuracy must lie in [0, 1]");
    for (double t : report_targets)
        if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("report_targets entries must lie in [0, 1]");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

Environment build_environment(const ExperimentConfig& config) {
    config.validate();
    Environment env;

    LabeledDataset full;
    const auto& ds = config.dataset;
    if (ds.source == DatasetConfig::Source::synthetic) {
        full = generate_synthetic(ds.num_samples, ds.num_classes, ds.feature_dim, ds.class_separation,
                                  derive_seed(ds.seed, 0, 0, SeedPurpose::dataset));
    } else {
        auto loaded = load_csv_dataset(ds.csv_path, ds.csv_header);
        full = std::move(loaded.dataset);
        env.csv_report = loaded.report;
        if (loaded.report.remapped) env.warnings.push_back("dataset labels were remapped to 0-based contiguous values");
    }
    auto split = split_train_test(full, ds.test_fraction, derive_seed(ds.seed, 0, 0, SeedPurpose::split));
    env.train = std::move(split.train);
    env.test = std::move(split.test);

    env.partition_spec = {config.partition.num_clients, config.partition.knob,
                          derive_seed(config.partition.seed, 0, 0, SeedPurpose::partition),
                          config.partition.allow_empty};
    env.shards = partition_non_iid(env.train, env.partition_spec);

    const auto traces = load_traces(config.cost.traces.empty() ? default_trace_dir() : config.cost.traces);
    env.warnings.insert(env.warnings.end(), traces.warnings.begin(), traces.warnings.end());
    env.trace_stats = summarize(traces.traces);
    env.costs = assign_costs(config.partition.num_clients, traces.traces,
                             derive_seed(config.cost.seed, 0, 0, SeedPurpose::cost),
                             config.cost.energy_per_round_kwh);
    return env;
}

namespace {

std::vector<LocalTrainResult> train_participants(const std::vector<int>& participants, const ModelParams& global,
                                                 const Environment& env, const ExperimentConfig& config,
                                                 std::size_t round) {
    const std::size_t n = participants.size();
    std::vector<LocalTrainResult> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            const int id = participants[i];
            try {
                results[i] = local_train(global, env.shards[static_cast<std::size_t>(id)], env.train, config.model,
                                         derive_seed(config.seed, round, static_cast<std::uint64_t>(id),
                                                     SeedPurpose::train));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(config.jobs, n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const TrainingError& e) {
            throw TrainingError("round " + std::to_string(round) + ", client " + std::to_string(e.client_id()) +
                                    ": " + e.what(),
                                e.client_id(), round);
        }
    }
    return results;
}

std::optional<double> policy_score(Policy policy, const ClientStats& c) {
    switch (policy) {
        case Policy::random: return std::nullopt;
        case Policy::cost: return c.cost;
        case Policy::utility: return c.last_utility;
        case Policy::utility_cost:
        case Policy::clp_utility_cost:
            if (c.last_utility) return *c.last_utility / c.cost;
            return std::nullopt;
    }
    return std::nullopt;
}

bool converged_at(std::span<const double> curve, double min_delta, std::size_t patience) {
    const std::size_t r = curve.size();
    if (r <= patience) return false;
    const double before = *std::max_element(curve.begin(), curve.end() - static_cast<std::ptrdiff_t>(patience));
    const double recent = *std::max_element(curve.end() - static_cast<std::ptrdiff_t>(patience), curve.end());
    return recent - before < min_delta;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const Environment& env) {
    config.validate();
    const auto& sel = config.selection;
    const bool dynamic = sel.policy == Policy::clp_utility_cost;

    std::vector<ClientStats> stats;
    std::vector<std::ptrdiff_t> slot(env.shards.size(), -1);
    for (const auto& shard : env.shards) {
        if (shard.empty()) continue;  // no data, never selectable
        slot[static_cast<std::size_t>(shard.client_id)] = static_cast<std::ptrdiff_t>(stats.size());
        stats.push_back({shard.client_id, env.costs.cost(shard.client_id), std::nullopt, 0});
    }
    if (stats.empty()) throw ConfigError("no client holds any training data");

    ExperimentResult result;
    result.policy = sel.policy;
    result.pool_size = stats.size();
    result.selection_cap = selection_cap(sel.cap_fraction, config.max_rounds);
    const auto cap = result.selection_cap;
    const auto fixed_k = static_cast<std::size_t>(std::clamp<long long>(
        round_half_up(sel.k_fraction * static_cast<double>(stats.size())), 1, static_cast<long long>(stats.size())));

    // Non-CLP policies still run the detector so the log shows where the
    // critical period ended; only clp_utility_cost acts on it.
    ClpConfig detector;
    detector.window = config.clp.window;
    detector.threshold = config.clp.threshold;
    ClpController clp(dynamic ? config.clp : detector, stats.size());

    ModelParams global = init_params(config.model.kind, config.model.hidden, env.train.feature_dim,
                                     env.train.num_classes, derive_seed(config.seed, 0, 0, SeedPurpose::init));
    double cumulative = 0.0;
    std::vector<double> curve;

    for (std::size_t round = 1; round <= config.max_rounds; ++round) {
        const auto started = std::chrono::steady_clock::now();
        const bool clp_active = clp.active();
        const std::size_t k_requested = dynamic ? clp.next_count() : fixed_k;
        const std::size_t eligible = count_eligible(stats, cap);
        if (eligible == 0) {
            result.stop_reason = StopReason::pool_exhausted;
            break;
        }
        const std::size_t k = std::min(k_requested, eligible);
        const auto participants = select_clients(sel.policy, stats, k, sel.exploration_factor, cap,
                                                 derive_seed(sel.seed, round, 0, SeedPurpose::selection));

        RoundRecord record;
        record.round = round;
        record.k_requested = k_requested;
        record.participants = participants;
        record.clp_active = clp_active;
        for (int id : participants) {
            const auto& c = stats[static_cast<std::size_t>(slot[static_cast<std::size_t>(id)])];
            record.selection.push_back({id, c.last_utility, c.cost, policy_score(sel.policy, c), c.times_selected + 1});
        }

        const auto results = train_participants(participants, global, env, config, round);
        global = fed_avg(global, results);
        const auto eval = evaluate(global, env.test);
        record.accuracy = eval.accuracy;
        record.mean_loss = eval.mean_loss;
        curve.push_back(eval.accuracy);
        if (clp.observe(eval.accuracy)) result.clp_end = ClpEvent{round, *clp.mu_at_end()};

        for (const auto& r : results) {
            auto& c = stats[static_cast<std::size_t>(slot[static_cast<std::size_t>(r.client_id)])];
            c.last_utility = utility(r.per_sample_losses, r.num_samples);
            ++c.times_selected;
        }

        record.round_emissions = round_emissions(participants, env.costs);
        cumulative += record.round_emissions;
        record.cumulative_emissions = cumulative;
        record.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.rounds.push_back(std::move(record));

        const auto& stop = config.stopping;
        if (stop.kind == StoppingRule::Kind::threshold && eval.accuracy >= stop.target_accuracy) {
            result.stop_reason = StopReason::target_reached;
            break;
        }
        if (stop.kind == StoppingRule::Kind::convergence && converged_at(curve, stop.min_delta, stop.patience)) {
            result.stop_reason = StopReason::converged;
            break;
        }
        result.stop_reason = StopReason::max_rounds;
    }

    result.final_params = std::move(global);
    if (config.stopping.kind == StoppingRule::Kind::threshold) {
        result.rounds_to_target = rounds_to_accuracy(result, config.stopping.target_accuracy);
        result.cost_to_target = cost_to_accuracy(result, config.stopping.target_accuracy);
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    return run_experiment(config, build_environment(config));
}

}  // namespace fedsel
