#include "fedsel/config.hpp"

#include <fstream>
#include <set>

#include "fedsel/error.hpp"
#include "fedsel/rng.hpp"

namespace fedsel {

using nlohmann::json;

namespace {

// Typed access to one JSON object that remembers which keys were read, so
// leftovers can be reported as unknown.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(label() + ": expected an object");
    }

    bool has(const char* key) const { return node_.contains(key) && !node_.at(key).is_null(); }

    const json* find(const char* key) {
        used_.insert(key);
        return has(key) ? &node_.at(key) : nullptr;
    }

    double number(const char* key, double fallback) {
        const auto* v = find(key);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
        return v->get<double>();
    }

    std::size_t count(const char* key, std::size_t fallback) {
        const auto* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_integer() || v->get<long long>() < 0)
            throw ConfigError(field(key) + ": expected a non-negative integer");
        return v->get<std::size_t>();
    }

    std::optional<std::size_t> optional_count(const char* key) {
        if (!has(key)) {
            used_.insert(key);
            return std::nullopt;
        }
        return count(key, 0);
    }

    std::uint64_t seed(const char* key, std::uint64_t fallback) {
        const auto* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0))
            throw ConfigError(field(key) + ": expected a non-negative integer seed");
        return v->get<std::uint64_t>();
    }

    bool boolean(const char* key, bool fallback) {
        const auto* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
        return v->get<bool>();
    }

    std::string string(const char* key, std::string fallback) {
        const auto* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
        return v->get<std::string>();
    }

    std::string required_string(const char* key) {
        if (!has(key)) throw ConfigError(field(key) + ": required field is missing");
        return string(key, "");
    }

    Section child(const char* key) {
        used_.insert(key);
        static const json empty = json::object();
        return Section(has(key) ? node_.at(key) : empty, field(key));
    }

    /// Throws on keys that were never read.
    void finish() const {
        for (const auto& [key, _] : node_.items())
            if (!used_.count(key)) throw ConfigError(field(key.c_str()) + ": unknown field");
    }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string label() const { return path_.empty() ? "configuration" : path_; }

    const json& node_;
    std::string path_;
    std::set<std::string> used_;
};

template <typename Fn>
auto with_field(const std::string& field, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        if (what.rfind(field, 0) == 0) throw;
        throw ConfigError(field + ": " + what);
    }
}

ModelKind parse_model_kind(const std::string& name, const std::string& field) {
    if (name == "softmax_regression") return ModelKind::softmax_regression;
    if (name == "mlp_one_hidden") return ModelKind::mlp_one_hidden;
    throw ConfigError(field + ": unknown model kind '" + name + "' (expected softmax_regression or mlp_one_hidden)");
}

std::string_view model_kind_name(ModelKind kind) {
    return kind == ModelKind::mlp_one_hidden ? "mlp_one_hidden" : "softmax_regression";
}

json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
    Section root(doc, "");
    ExperimentConfig cfg;
    cfg.seed = root.seed("seed", cfg.seed);
    cfg.max_rounds = root.count("max_rounds", cfg.max_rounds);
    cfg.jobs = root.count("jobs", cfg.jobs);
    if (const auto* targets = root.find("report_targets")) {
        if (!targets->is_array()) throw ConfigError("report_targets: expected an array of numbers");
        for (const auto& t : *targets) {
            if (!t.is_number()) throw ConfigError("report_targets: expected an array of numbers");
            cfg.report_targets.push_back(t.get<double>());
        }
    }

    {
        auto s = root.child("dataset");
        auto& d = cfg.dataset;
        const auto source = s.string("source", "synthetic");
        if (source == "synthetic") d.source = DatasetConfig::Source::synthetic;
        else if (source == "csv") d.source = DatasetConfig::Source::csv;
        else throw ConfigError(s.field("source") + ": expected 'synthetic' or 'csv'");
        d.num_samples = s.count("num_samples", d.num_samples);
        d.num_classes = s.count("num_classes", d.num_classes);
        d.feature_dim = s.count("feature_dim", d.feature_dim);
        d.class_separation = s.number("class_separation", d.class_separation);
        d.csv_path = s.string("csv_path", d.csv_path);
        d.csv_header = s.boolean("csv_header", d.csv_header);
        d.test_fraction = s.number("test_fraction", d.test_fraction);
        d.seed = s.seed("seed", derive_seed(cfg.seed, 0, 0, SeedPurpose::dataset));
        s.finish();
    }
    {
        auto s = root.child("partition");
        auto& p = cfg.partition;
        p.num_clients = s.count("num_clients", p.num_clients);
        p.knob = s.number("knob", p.knob);
        p.seed = s.seed("seed", derive_seed(cfg.seed, 0, 0, SeedPurpose::partition));
        p.allow_empty = s.boolean("allow_empty", p.allow_empty);
        s.finish();
    }
    {
        auto s = root.child("model");
        auto& m = cfg.model;
        m.kind = parse_model_kind(s.string("kind", "softmax_regression"), s.field("kind"));
        m.hidden = s.count("hidden", m.kind == ModelKind::mlp_one_hidden ? 32 : 0);
        m.learning_rate = s.number("learning_rate", m.learning_rate);
        m.batch_size = s.count("batch_size", m.batch_size);
        m.local_epochs = s.count("local_epochs", m.local_epochs);
        s.finish();
    }
    {
        if (!root.has("selection")) throw ConfigError("selection.policy: required field is missing");
        auto s = root.child("selection");
        auto& sel = cfg.selection;
        sel.policy = with_field(s.field("policy"), [&] { return parse_policy(s.required_string("policy")); });
        sel.k_fraction = s.number("k_fraction", sel.k_fraction);
        sel.exploration_factor = s.number("exploration_factor", sel.exploration_factor);
        sel.cap_fraction = s.number("cap_fraction", sel.cap_fraction);
        sel.seed = s.seed("seed", derive_seed(cfg.seed, 0, 0, SeedPurpose::selection));
        s.finish();
    }
    {
        auto s = root.child("clp");
        const auto strategy =
            with_field(s.field("strategy"), [&] { return parse_strategy(s.string("strategy", "steady_step")); });
        auto& c = cfg.clp;
        c = ClpConfig::defaults_for(strategy);
        c.window = s.count("window", c.window);
        c.threshold = s.number("threshold", c.threshold);
        c.alpha = s.number("alpha", c.alpha);
        c.beta = s.number("beta", c.beta);
        c.initial_fraction = s.number("initial_fraction", c.initial_fraction);
        c.k_min = s.optional_count("k_min");
        c.k_max = s.optional_count("k_max");
        s.finish();
    }
    {
        auto s = root.child("cost");
        auto& c = cfg.cost;
        c.traces = s.string("traces", c.traces);
        c.energy_per_round_kwh = s.number("energy_per_round_kwh", c.energy_per_round_kwh);
        c.seed = s.seed("seed", derive_seed(cfg.seed, 0, 0, SeedPurpose::cost));
        s.finish();
    }
    {
        auto s = root.child("stopping");
        auto& st = cfg.stopping;
        const auto rule = s.string("rule", "convergence");
        if (rule == "convergence") st.kind = StoppingRule::Kind::convergence;
        else if (rule == "threshold") st.kind = StoppingRule::Kind::threshold;
        else throw ConfigError(s.field("rule") + ": expected 'convergence' or 'threshold'");
        st.min_delta = s.number("min_delta", st.min_delta);
        st.patience = s.count("patience", st.patience);
        st.target_accuracy = s.number("target_accuracy", st.target_accuracy);
        s.finish();
    }
    root.finish();
    cfg.validate();
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    const auto& d = cfg.dataset;
    const auto& p = cfg.partition;
    const auto& m = cfg.model;
    const auto& sel = cfg.selection;
    const auto& c = cfg.clp;
    const auto& st = cfg.stopping;
    return {
        {"seed", cfg.seed},
        {"max_rounds", cfg.max_rounds},
        {"jobs", cfg.jobs},
        {"report_targets", cfg.report_targets},
        {"dataset",
         {{"source", d.source == DatasetConfig::Source::csv ? "csv" : "synthetic"},
          {"num_samples", d.num_samples},
          {"num_classes", d.num_classes},
          {"feature_dim", d.feature_dim},
          {"class_separation", d.class_separation},
          {"csv_path", d.csv_path},
          {"csv_header", d.csv_header},
          {"test_fraction", d.test_fraction},
          {"seed", d.seed}}},
        {"partition",
         {{"num_clients", p.num_clients}, {"knob", p.knob}, {"seed", p.seed}, {"allow_empty", p.allow_empty}}},
        {"model",
         {{"kind", model_kind_name(m.kind)},
          {"hidden", m.hidden},
          {"learning_rate", m.learning_rate},
          {"batch_size", m.batch_size},
          {"local_epochs", m.local_epochs}}},
        {"selection",
         {{"policy", to_string(sel.policy)},
          {"k_fraction", sel.k_fraction},
          {"exploration_factor", sel.exploration_factor},
          {"cap_fraction", sel.cap_fraction},
          {"seed", sel.seed}}},
        {"clp",
         {{"strategy", to_string(c.strategy)},
          {"window", c.window},
          {"threshold", c.threshold},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"initial_fraction", c.initial_fraction},
          {"k_min", optional_json(c.k_min)},
          {"k_max", optional_json(c.k_max)}}},
        {"cost",
         {{"traces", cfg.cost.traces.empty() ? default_trace_dir() : cfg.cost.traces},
          {"energy_per_round_kwh", cfg.cost.energy_per_round_kwh},
          {"seed", cfg.cost.seed}}},
        {"stopping",
         {{"rule", st.kind == StoppingRule::Kind::threshold ? "threshold" : "convergence"},
          {"min_delta", st.min_delta},
          {"patience", st.patience},
          {"target_accuracy", st.target_accuracy}}},
    };
}

void apply_override(json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0)
        throw ConfigError("override '" + std::string(assignment) + "' must look like key.path=value");
    const std::string path(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));

    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
        if (!node->is_object()) throw ConfigError("override path '" + path + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[key] = std::move(value);
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
    auto doc = read_json_file(path);
    for (const auto& o : overrides) apply_override(doc, o);
    return config_from_json(doc);
}

}  // namespace fedsel
