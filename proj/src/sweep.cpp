#include "fedsel/sweep.hpp"

#include <atomic>
#include <cstdio>
#include <map>
#include <thread>

#include "fedsel/config.hpp"
#include "fedsel/error.hpp"
#include "fedsel/report.hpp"

namespace fedsel {

using nlohmann::json;

void SweepSpec::validate() const {
    if (policies.empty()) throw ConfigError("axes.policy must not be empty");
    if (knobs.empty()) throw ConfigError("axes.knob must not be empty");
    if (seeds.empty()) throw ConfigError("axes.seed must not be empty");
    if (output_dir.empty()) throw ConfigError("output_dir is required");
    if (target_accuracy && !(*target_accuracy >= 0.0 && *target_accuracy <= 1.0))
        throw ConfigError("target_accuracy must lie in [0, 1]");
}

SweepSpec sweep_from_json(const json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("sweep specification must be an object");
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    for (const auto& [key, _] : doc.items())
        if (key != "base" && key != "base_config" && key != "axes" && key != "output_dir" && key != "target_accuracy" &&
            key != "stop_at_target")
            throw ConfigError(key + ": unknown field");

    SweepSpec spec;
    if (doc.contains("base") && doc.contains("base_config"))
        throw ConfigError("base and base_config are mutually exclusive");
    if (doc.contains("base")) spec.base = doc.at("base");
    else if (doc.contains("base_config")) spec.base = read_json_file(resolve(doc.at("base_config").get<std::string>()));
    if (!spec.base.is_object()) throw ConfigError("base: expected an object");

    if (!doc.contains("axes") || !doc.at("axes").is_object()) throw ConfigError("axes: required object is missing");
    const auto& axes = doc.at("axes");
    for (const auto& [key, _] : axes.items())
        if (key != "policy" && key != "knob" && key != "seed") throw ConfigError("axes." + key + ": unknown axis");
    auto list = [&](const char* key) -> const json& {
        if (!axes.contains(key) || !axes.at(key).is_array())
            throw ConfigError(std::string("axes.") + key + ": expected a non-empty array");
        return axes.at(key);
    };
    for (const auto& p : list("policy")) {
        if (!p.is_string()) throw ConfigError("axes.policy: expected policy names");
        spec.policies.push_back(parse_policy(p.get<std::string>()));
    }
    for (const auto& k : list("knob")) {
        if (!k.is_number()) throw ConfigError("axes.knob: expected numbers");
        spec.knobs.push_back(k.get<double>());
    }
    for (const auto& s : list("seed")) {
        if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<long long>() < 0)) throw ConfigError("axes.seed: expected non-negative integers");
        spec.seeds.push_back(s.get<std::uint64_t>());
    }
    if (doc.contains("output_dir")) spec.output_dir = resolve(doc.at("output_dir").get<std::string>());
    if (doc.contains("target_accuracy") && !doc.at("target_accuracy").is_null()) {
        if (!doc.at("target_accuracy").is_number()) throw ConfigError("target_accuracy: expected a number");
        spec.target_accuracy = doc.at("target_accuracy").get<double>();
    }
    if (doc.contains("stop_at_target")) {
        if (!doc.at("stop_at_target").is_boolean()) throw ConfigError("stop_at_target: expected true or false");
        spec.stop_at_target = doc.at("stop_at_target").get<bool>();
    }
    return spec;
}

SweepSpec load_sweep(const std::filesystem::path& path) {
    auto spec = sweep_from_json(read_json_file(path), path.parent_path());
    return spec;
}

json cell_document(const SweepSpec& spec, Policy policy, double knob, std::uint64_t seed) {
    json doc = spec.base;
    doc["seed"] = seed;
    doc["jobs"] = 1;
    doc["selection"]["policy"] = std::string(to_string(policy));
    doc["partition"]["knob"] = knob;
    for (const char* section : {"dataset", "partition", "selection", "cost"})
        if (doc.contains(section) && doc[section].is_object()) doc[section].erase("seed");
    return doc;
}

namespace {

struct CellKey {
    Policy policy;
    double knob;
    std::uint64_t seed;
};

std::string cell_name(const CellKey& key) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "_knob%.3f_seed%llu", key.knob, static_cast<unsigned long long>(key.seed));
    return std::string(to_string(key.policy)) + buf;
}

struct CellOutcome {
    bool ok = false;
    std::string error;
    std::vector<double> curve;
    std::vector<double> cumulative;
    double min_delta = 0.0;
    std::size_t patience = 1;
    std::optional<double> threshold_target;
};

CellOutcome run_cell(const SweepSpec& spec, const CellKey& key, bool write, std::optional<double> stop_target = {}) {
    CellOutcome out;
    try {
        auto doc = cell_document(spec, key.policy, key.knob, key.seed);
        if (stop_target) doc["stopping"] = {{"rule", "threshold"}, {"target_accuracy", *stop_target}};
        const auto config = config_from_json(doc);
        const auto env = build_environment(config);
        const auto result = run_experiment(config, env);
        if (write) write_run_outputs(spec.output_dir / "cells" / cell_name(key), config, env, result);
        for (const auto& r : result.rounds) {
            out.curve.push_back(r.accuracy);
            out.cumulative.push_back(r.cumulative_emissions);
        }
        out.min_delta = config.stopping.min_delta;
        out.patience = config.stopping.patience;
        if (config.stopping.kind == StoppingRule::Kind::threshold)
            out.threshold_target = config.stopping.target_accuracy;
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    };
    const auto threads = std::min(std::max<std::size_t>(jobs, 1), n);
    if (threads <= 1) {
        worker();
        return;
    }
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepSpec& spec, std::size_t jobs, bool write_cells) {
    spec.validate();

    // Phase 1: one random-selection baseline per (knob, seed).
    std::vector<CellKey> baselines;
    for (double knob : spec.knobs)
        for (auto seed : spec.seeds) baselines.push_back({Policy::random, knob, seed});
    std::vector<CellOutcome> baseline_out(baselines.size());
    const bool random_listed = std::find(spec.policies.begin(), spec.policies.end(), Policy::random) != spec.policies.end();
    parallel_for(baselines.size(), jobs,
                 [&](std::size_t i) { baseline_out[i] = run_cell(spec, baselines[i], write_cells && random_listed); });

    auto baseline_index = [&](double knob, std::uint64_t seed) {
        for (std::size_t i = 0; i < baselines.size(); ++i)
            if (baselines[i].knob == knob && baselines[i].seed == seed) return i;
        return baselines.size();
    };
    // A threshold stopping rule is its own comparison target.
    auto target_for = [&](std::size_t b) -> std::optional<double> {
        if (spec.target_accuracy) return spec.target_accuracy;
        const auto& base = baseline_out[b];
        if (!base.ok || base.curve.empty()) return std::nullopt;
        if (base.threshold_target) return base.threshold_target;
        return convergence_accuracy(base.curve, base.min_delta, base.patience);
    };

    // Phase 2: every other cell.
    std::vector<CellKey> cells;
    for (auto policy : spec.policies)
        for (double knob : spec.knobs)
            for (auto seed : spec.seeds) cells.push_back({policy, knob, seed});
    std::vector<CellOutcome> cell_out(cells.size());
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        if (cells[i].policy == Policy::random) cell_out[i] = baseline_out[baseline_index(cells[i].knob, cells[i].seed)];
        else {
            const auto target = target_for(baseline_index(cells[i].knob, cells[i].seed));
            cell_out[i] = run_cell(spec, cells[i], write_cells, spec.stop_at_target ? target : std::nullopt);
        }
    });

    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& key = cells[i];
        const auto& out = cell_out[i];
        SweepRow row;
        row.policy = key.policy;
        row.knob = key.knob;
        row.seed = key.seed;
        row.ok = out.ok;
        row.error = out.error;
        if (out.ok && !out.curve.empty()) {
            row.final_accuracy = out.curve.back();
            row.rounds = out.curve.size();
            row.cumulative_emissions = out.cumulative.back();
        }
        const auto b = baseline_index(key.knob, key.seed);
        row.target_accuracy = target_for(b);
        if (out.ok && row.target_accuracy) {
            row.rounds_to_target = rounds_to_accuracy(out.curve, *row.target_accuracy);
            if (row.rounds_to_target) row.cost_to_target = out.cumulative[*row.rounds_to_target - 1];
            const auto& base = baseline_out[b];
            const auto base_rounds = base.ok ? rounds_to_accuracy(base.curve, *row.target_accuracy) : std::nullopt;
            if (row.cost_to_target && base_rounds) {
                const double base_cost = base.cumulative[*base_rounds - 1];
                if (base_cost > 0.0) row.normalized_cost_pct = 100.0 * *row.cost_to_target / base_cost;
            }
        }
        rows.push_back(std::move(row));
    }

    if (!spec.output_dir.empty()) {
        std::filesystem::create_directories(spec.output_dir);
        write_text(spec.output_dir / "comparison.csv", comparison_csv(rows));
    }
    return rows;
}

std::string comparison_csv(const std::vector<SweepRow>& rows) {
    std::string out =
        "policy,knob,seed,status,final_accuracy,rounds,cumulative_emissions,target_accuracy,"
        "rounds_to_target,cost_to_target,normalized_cost_pct,error\n";
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    auto opt_num = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    for (const auto& r : rows) {
        std::string error = r.error;
        for (auto& ch : error)
            if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
        out += std::string(to_string(r.policy)) + ',' + num(r.knob) + ',' + std::to_string(r.seed) + ',' +
               (r.ok ? "ok" : "error") + ',' + (r.ok ? num(r.final_accuracy) : "") + ',' +
               (r.ok ? std::to_string(r.rounds) : "") + ',' + (r.ok ? num(r.cumulative_emissions) : "") + ',' +
               opt_num(r.target_accuracy) + ',' + (r.rounds_to_target ? std::to_string(*r.rounds_to_target) : "") +
               ',' + opt_num(r.cost_to_target) + ',' + opt_num(r.normalized_cost_pct) + ',' + error + '\n';
    }
    return out;
}

}  // namespace fedsel
