#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "json.hpp"

#include "fedsel/engine.hpp"

namespace fedsel {

/// One run-log line. Wall-clock time is left out so logs are reproducible;
/// it goes to timings.jsonl instead.
nlohmann::json round_record_json(const RoundRecord& record);

nlohmann::json clp_event_json(const ClpEvent& event, const ClpConfig& config);

/// Selection-log line: round, policy, K and each participant's
/// utility, cost, score and selection count.
nlohmann::json selection_log_json(const RoundRecord& record, Policy policy);

/// Run log as JSON lines: one "round" line per round, a "clp_end" line right
/// after the round where the critical period was detected as over, and a
/// closing "stop" line.
std::string run_log_jsonl(const ExperimentResult& result, const ExperimentConfig& config);

nlohmann::json summary_json(const ExperimentResult& result, const ExperimentConfig& config);

/// Writes run_log.jsonl, selection_log.jsonl, timings.jsonl, summary.json,
/// resolved_config.json, partition_report.json, cost_report.json and
/// final_model.bin into `dir`, creating it when needed.
void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const Environment& env,
                       const ExperimentResult& result);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace fedsel
