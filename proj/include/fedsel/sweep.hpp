#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedsel/selection.hpp"

namespace fedsel {

/// Cross product of policies x non-iid knobs x master seeds over a base
/// configuration document.
struct SweepSpec {
    nlohmann::json base = nlohmann::json::object();
    std::vector<Policy> policies;
    std::vector<double> knobs;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path output_dir;
    /// Fixed target; when absent each (knob, seed) uses the convergence
    /// accuracy of its random-selection cell.
    std::optional<double> target_accuracy;
    /// Non-random cells stop at the first round reaching the target (with
    /// max_rounds as backstop) instead of under the base stopping rule.
    bool stop_at_target = true;

    void validate() const;
};

/// {"base": {...} or "base_config": "path", "axes": {"policy": [...],
///  "knob": [...], "seed": [...]}, "output_dir": "...", "target_accuracy": x,
///  "stop_at_target": true}
/// Relative paths resolve against the sweep file's directory.
SweepSpec load_sweep(const std::filesystem::path& path);
SweepSpec sweep_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

struct SweepRow {
    Policy policy = Policy::random;
    double knob = 0.0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double final_accuracy = 0.0;
    std::size_t rounds = 0;
    double cumulative_emissions = 0.0;
    std::optional<double> target_accuracy;
    /// Non-random cells stop at the first round reaching the target (with
    /// max_rounds as backstop) instead of under the base stopping rule.
    bool stop_at_target = true;
    std::optional<std::size_t> rounds_to_target;
    std::optional<double> cost_to_target;
    std::optional<double> normalized_cost_pct;  ///< 100 * cost / random cost at the same (knob, seed)
};

/// Runs every cell (random baselines first) on up to `jobs` threads and
/// returns rows in axis order. Failed cells carry ok = false and the message.
/// When `write_cells` is set each cell writes its run outputs under
/// output_dir/cells/<policy>_knob<knob>_seed<seed>.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, std::size_t jobs, bool write_cells = true);

std::string comparison_csv(const std::vector<SweepRow>& rows);

/// The configuration document of one cell: base with policy, knob and master
/// seed set and every sub-seed removed so it derives from the cell seed.
nlohmann::json cell_document(const SweepSpec& spec, Policy policy, double knob, std::uint64_t seed);

}  // namespace fedsel
