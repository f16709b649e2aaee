#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedsel/clp.hpp"
#include "fedsel/cost.hpp"
#include "fedsel/model.hpp"
#include "fedsel/partition.hpp"
#include "fedsel/selection.hpp"

namespace fedsel {

struct DatasetConfig {
    enum class Source { synthetic, csv };
    Source source = Source::synthetic;
    std::size_t num_samples = 6000;
    std::size_t num_classes = 10;
    std::size_t feature_dim = 20;
    double class_separation = 1.0;
    std::string csv_path;
    bool csv_header = false;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct PartitionConfig {
    std::size_t num_clients = 100;
    double knob = 0.0;
    std::uint64_t seed = 0;
    bool allow_empty = false;
};

struct CostConfig {
    std::string traces;  ///< file or directory; empty selects the bundled fixture
    double energy_per_round_kwh = 0.001;
    std::uint64_t seed = 0;
};

struct StoppingRule {
    enum class Kind { convergence, threshold };
    Kind kind = Kind::convergence;
    double min_delta = 0.001;
    std::size_t patience = 20;
    double target_accuracy = 0.0;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    PartitionConfig partition;
    HyperParams model;
    SelectionConfig selection;
    ClpConfig clp;  ///< drives participation only under clp_utility_cost
    CostConfig cost;
    StoppingRule stopping;
    std::size_t max_rounds = 300;
    std::uint64_t seed = 1;
    std::size_t jobs = 1;  ///< local-training threads; never changes results
    std::vector<double> report_targets;

    void validate() const;
};

/// Directory holding the bundled 123-region carbon fixture.
std::string default_trace_dir();

/// Everything a run needs that is fixed before round 1.
struct Environment {
    LabeledDataset train;
    LabeledDataset test;
    std::vector<ClientShard> shards;
    PartitionSpec partition_spec;
    CostModel costs;
    TraceStats trace_stats;
    std::vector<std::string> warnings;
    std::optional<CsvLoadReport> csv_report;
};

Environment build_environment(const ExperimentConfig& config);

struct ParticipantLog {
    int client_id = 0;
    std::optional<double> utility;  ///< last known before this round
    double cost = 0.0;
    std::optional<double> score;    ///< ranking score under the policy, if any
    std::size_t times_selected = 0;  ///< including this round
};

struct RoundRecord {
    std::size_t round = 0;
    std::size_t k_requested = 0;
    std::vector<int> participants;
    double accuracy = 0.0;
    double mean_loss = 0.0;
    double round_emissions = 0.0;       ///< gCO2eq
    double cumulative_emissions = 0.0;  ///< gCO2eq
    bool clp_active = false;            ///< critical period in force during this round
    double wall_clock_seconds = 0.0;
    std::vector<ParticipantLog> selection;
};

enum class StopReason { converged, target_reached, max_rounds, pool_exhausted };
std::string_view to_string(StopReason reason);

struct ClpEvent {
    std::size_t round = 0;
    double mu = 0.0;
};

struct ExperimentResult {
    Policy policy = Policy::random;
    std::vector<RoundRecord> rounds;
    ModelParams final_params;
    StopReason stop_reason = StopReason::max_rounds;
    std::optional<ClpEvent> clp_end;
    std::optional<std::size_t> rounds_to_target;
    std::optional<double> cost_to_target;
    std::size_t pool_size = 0;
    std::optional<std::size_t> selection_cap;
};

/// Round loop: count, select, train in parallel, aggregate in client order,
/// evaluate on the held-out split, update the critical-period latch, client
/// statistics and emissions, then test the stopping rule.
ExperimentResult run_experiment(const ExperimentConfig& config, const Environment& env);
ExperimentResult run_experiment(const ExperimentConfig& config);

// Metrics over a finished run.

std::optional<std::size_t> rounds_to_accuracy(std::span<const double> curve, double target);
std::optional<std::size_t> rounds_to_accuracy(const ExperimentResult& result, double target);
std::optional<double> cost_to_accuracy(const ExperimentResult& result, double target);

/// First round r with max(A over (r - patience, r]) - max(A over [1, r - patience])
/// < min_delta; the last round when that never happens.
std::size_t convergence_round(std::span<const double> curve, double min_delta, std::size_t patience);
std::size_t convergence_round(const ExperimentResult& result, double min_delta, std::size_t patience);

/// Mean accuracy over the `patience` rounds ending at the convergence round.
double convergence_accuracy(std::span<const double> curve, double min_delta, std::size_t patience);

std::vector<double> accuracy_curve(const ExperimentResult& result);

}  // namespace fedsel
