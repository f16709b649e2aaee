#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace fedsel {

struct TraceSample {
    std::string timestamp;  ///< ISO-8601
    double intensity = 0.0;  ///< gCO2eq/kWh
};

struct CarbonTrace {
    std::string region_id;
    std::vector<TraceSample> samples;
    double average = 0.0;
};

struct TraceLoadResult {
    std::vector<CarbonTrace> traces;
    std::vector<std::string> warnings;  ///< skipped (empty) traces
};

/// Loads a single `timestamp,intensity` CSV or every *.csv in a directory
/// (sorted by file name). The region id is the file stem. A leading header
/// row is accepted when its intensity column is not numeric.
TraceLoadResult load_traces(const std::filesystem::path& path);

/// One CSV in the format above.
CarbonTrace parse_trace(std::istream& in, std::string region_id);

struct TraceStats {
    std::size_t regions = 0;
    double min_average = 0.0;
    double max_average = 0.0;
    double mean_average = 0.0;
};

TraceStats summarize(std::span<const CarbonTrace> traces);

/// Static per-client carbon intensity C'_i, indexed by client id.
struct CostModel {
    std::vector<double> per_client_cost;
    std::vector<std::string> per_client_region;
    double energy_per_round_kwh = 0.001;

    std::size_t num_clients() const noexcept { return per_client_cost.size(); }
    double cost(int client_id) const;
    void validate() const;
};

/// Each client draws a region uniformly with replacement.
CostModel assign_costs(std::size_t num_clients, std::span<const CarbonTrace> traces, std::uint64_t seed,
                       double energy_per_round_kwh = 0.001);

/// sum over participants of C'_i * energy_per_round, in gCO2eq.
double round_emissions(std::span<const int> participants, const CostModel& model);

nlohmann::json cost_report(const CostModel& model, const TraceStats& stats);

}  // namespace fedsel
