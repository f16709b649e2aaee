#include "fedsel/report.hpp"

#include <fstream>

#include "fedsel/config.hpp"
#include "fedsel/error.hpp"

namespace fedsel {

using nlohmann::json;

namespace {

template <typename T>
json nullable(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

}  // namespace

json round_record_json(const RoundRecord& r) {
    return {
        {"type", "round"},
        {"round", r.round},
        {"k_requested", r.k_requested},
        {"k_granted", r.participants.size()},
        {"participants", r.participants},
        {"accuracy", r.accuracy},
        {"mean_loss", r.mean_loss},
        {"round_emissions", r.round_emissions},
        {"cumulative_emissions", r.cumulative_emissions},
        {"clp_active", r.clp_active},
    };
}

json clp_event_json(const ClpEvent& event, const ClpConfig& config) {
    return {
        {"type", "clp_end"},
        {"round", event.round},
        {"mu", event.mu},
        {"strategy", to_string(config.strategy)},
        {"alpha", config.alpha},
        {"beta", config.beta},
        {"window", config.window},
        {"threshold", config.threshold},
    };
}

json selection_log_json(const RoundRecord& r, Policy policy) {
    json participants = json::array();
    for (const auto& p : r.selection) {
        participants.push_back({
            {"client_id", p.client_id},
            {"utility", nullable(p.utility)},
            {"cost", p.cost},
            {"score", nullable(p.score)},
            {"times_selected", p.times_selected},
        });
    }
    return {
        {"round", r.round},
        {"policy", to_string(policy)},
        {"k", r.participants.size()},
        {"participants", std::move(participants)},
    };
}

std::string run_log_jsonl(const ExperimentResult& result, const ExperimentConfig& config) {
    std::string out;
    for (const auto& r : result.rounds) {
        out += round_record_json(r).dump();
        out += '\n';
        if (result.clp_end && result.clp_end->round == r.round) {
            out += clp_event_json(*result.clp_end, config.clp).dump();
            out += '\n';
        }
    }
    out += json{{"type", "stop"}, {"reason", to_string(result.stop_reason)}, {"rounds", result.rounds.size()}}.dump();
    out += '\n';
    return out;
}

json summary_json(const ExperimentResult& result, const ExperimentConfig& config) {
    const auto curve = accuracy_curve(result);
    std::vector<double> targets = config.report_targets;
    if (config.stopping.kind == StoppingRule::Kind::threshold) targets.push_back(config.stopping.target_accuracy);

    json target_rows = json::array();
    for (double t : targets) {
        target_rows.push_back({
            {"target", t},
            {"rounds_to_accuracy", nullable(rounds_to_accuracy(result, t))},
            {"cost_to_accuracy", nullable(cost_to_accuracy(result, t))},
        });
    }

    std::size_t participations = 0;
    for (const auto& r : result.rounds) participations += r.participants.size();

    json summary = {
        {"policy", to_string(result.policy)},
        {"stop_reason", to_string(result.stop_reason)},
        {"rounds", result.rounds.size()},
        {"pool_size", result.pool_size},
        {"selection_cap", nullable(result.selection_cap)},
        {"final_accuracy", curve.empty() ? json(nullptr) : json(curve.back())},
        {"final_loss", result.rounds.empty() ? json(nullptr) : json(result.rounds.back().mean_loss)},
        {"best_accuracy", curve.empty() ? json(nullptr) : json(*std::max_element(curve.begin(), curve.end()))},
        {"cumulative_emissions", result.rounds.empty() ? 0.0 : result.rounds.back().cumulative_emissions},
        {"total_participations", participations},
        {"clp_end", result.clp_end ? json{{"round", result.clp_end->round}, {"mu", result.clp_end->mu}}
                                   : json(nullptr)},
        {"targets", std::move(target_rows)},
    };
    if (!curve.empty()) {
        const auto& st = config.stopping;
        summary["convergence"] = {
            {"min_delta", st.min_delta},
            {"patience", st.patience},
            {"round", convergence_round(curve, st.min_delta, st.patience)},
            {"accuracy", convergence_accuracy(curve, st.min_delta, st.patience)},
        };
    }
    return summary;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const Environment& env,
                       const ExperimentResult& result) {
    std::filesystem::create_directories(dir);
    write_text(dir / "run_log.jsonl", run_log_jsonl(result, config));

    std::string selection, timings;
    for (const auto& r : result.rounds) {
        selection += selection_log_json(r, result.policy).dump() + '\n';
        timings += json{{"round", r.round}, {"wall_clock_seconds", r.wall_clock_seconds}}.dump() + '\n';
    }
    write_text(dir / "selection_log.jsonl", selection);
    write_text(dir / "timings.jsonl", timings);
    write_text(dir / "summary.json", summary_json(result, config).dump(2) + '\n');
    write_text(dir / "resolved_config.json", config_to_json(config).dump(2) + '\n');
    write_text(dir / "partition_report.json", partition_report(env.shards, env.train, env.partition_spec).dump(2) + '\n');
    write_text(dir / "cost_report.json", cost_report(env.costs, env.trace_stats).dump(2) + '\n');
    save_checkpoint(dir / "final_model.bin", result.final_params);
}

}  // namespace fedsel
