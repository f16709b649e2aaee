#include "fedsel/cost.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>

#include "fedsel/error.hpp"
#include "fedsel/rng.hpp"

namespace fedsel {

namespace {

std::string trim(std::string s) {
    auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::optional<double> to_double(const std::string& text) {
    double v;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

CarbonTrace parse_trace(std::istream& in, std::string region_id) {
    CarbonTrace trace;
    trace.region_id = std::move(region_id);
    std::string line;
    std::size_t line_no = 0;
    double sum = 0.0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw ParseError(trace.region_id + ": expected 'timestamp,intensity'", line_no);
        auto stamp = trim(line.substr(0, comma));
        auto value = to_double(trim(line.substr(comma + 1)));
        if (!value) {
            if (line_no == 1 && trace.samples.empty()) continue;  // header
            throw ParseError(trace.region_id + ": intensity is not a number", line_no);
        }
        if (stamp.empty()) throw ParseError(trace.region_id + ": missing timestamp", line_no);
        if (*value < 0.0) throw ParseError(trace.region_id + ": negative carbon intensity", line_no);
        trace.samples.push_back({std::move(stamp), *value});
        sum += *value;
    }
    if (!trace.samples.empty()) trace.average = sum / static_cast<double>(trace.samples.size());
    return trace;
}

TraceLoadResult load_traces(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(path)) {
        files.push_back(path);
    } else {
        throw ParseError("carbon trace path does not exist: " + path.string());
    }

    TraceLoadResult result;
    for (const auto& file : files) {
        std::ifstream in(file);
        if (!in) throw ParseError("cannot open carbon trace " + file.string());
        auto trace = parse_trace(in, file.stem().string());
        if (trace.samples.empty()) {
            result.warnings.push_back("skipping empty trace " + file.string());
            continue;
        }
        result.traces.push_back(std::move(trace));
    }
    if (result.traces.empty()) throw ParseError("no usable carbon traces under " + path.string());
    return result;
}

TraceStats summarize(std::span<const CarbonTrace> traces) {
    TraceStats s;
    s.regions = traces.size();
    if (traces.empty()) return s;
    s.min_average = s.max_average = traces.front().average;
    double sum = 0.0;
    for (const auto& t : traces) {
        s.min_average = std::min(s.min_average, t.average);
        s.max_average = std::max(s.max_average, t.average);
        sum += t.average;
    }
    s.mean_average = sum / static_cast<double>(traces.size());
    return s;
}

double CostModel::cost(int client_id) const {
    if (client_id < 0 || static_cast<std::size_t>(client_id) >= per_client_cost.size())
        throw IntegrityError("client " + std::to_string(client_id) + " has no assigned cost");
    return per_client_cost[static_cast<std::size_t>(client_id)];
}

void CostModel::validate() const {
    if (!(energy_per_round_kwh > 0.0)) throw ConfigError("cost.energy_per_round_kwh must be > 0");
    for (std::size_t i = 0; i < per_client_cost.size(); ++i)
        if (!(per_client_cost[i] > 0.0))
            throw IntegrityError("client " + std::to_string(i) + " has non-positive cost");
}

CostModel assign_costs(std::size_t num_clients, std::span<const CarbonTrace> traces, std::uint64_t seed,
                       double energy_per_round_kwh) {
    if (traces.empty()) throw ConfigError("cannot assign costs without carbon traces");
    CostModel model;
    model.energy_per_round_kwh = energy_per_round_kwh;
    Rng rng(seed);
    for (std::size_t i = 0; i < num_clients; ++i) {
        const auto& t = traces[rng.below(traces.size())];
        model.per_client_cost.push_back(t.average);
        model.per_client_region.push_back(t.region_id);
    }
    model.validate();
    return model;
}

double round_emissions(std::span<const int> participants, const CostModel& model) {
    double total = 0.0;
    for (int id : participants) total += model.cost(id) * model.energy_per_round_kwh;
    return total;
}

nlohmann::json cost_report(const CostModel& model, const TraceStats& stats) {
    nlohmann::json clients = nlohmann::json::array();
    for (std::size_t i = 0; i < model.per_client_cost.size(); ++i) {
        clients.push_back({
            {"client_id", i},
            {"region", i < model.per_client_region.size() ? model.per_client_region[i] : ""},
            {"cost", model.per_client_cost[i]},
        });
    }
    return {
        {"energy_per_round_kwh", model.energy_per_round_kwh},
        {"regions", stats.regions},
        {"min_average", stats.min_average},
        {"max_average", stats.max_average},
        {"mean_average", stats.mean_average},
        {"clients", std::move(clients)},
    };
}

}  // namespace fedsel
