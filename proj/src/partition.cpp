#include "fedsel/partition.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "fedsel/error.hpp"
#include "fedsel/rng.hpp"

namespace fedsel {

void LabeledDataset::validate() const {
    if (num_classes < 2) throw IntegrityError("dataset needs at least 2 classes");
    if (feature_dim == 0) throw IntegrityError("dataset feature dimension must be positive");
    if (features.size() != labels.size() * feature_dim)
        throw IntegrityError("feature matrix has " + std::to_string(features.size()) +
                             " values, expected " + std::to_string(labels.size() * feature_dim));
    std::vector<bool> seen(num_classes, false);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw IntegrityError("label " + std::to_string(y) + " outside [0, " +
                                 std::to_string(num_classes) + ")");
        seen[static_cast<std::size_t>(y)] = true;
    }
    for (std::size_t c = 0; c < num_classes; ++c)
        if (!seen[c]) throw IntegrityError("class " + std::to_string(c) + " has no samples");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.feature_dim = feature_dim;
    out.num_classes = num_classes;
    out.features.reserve(indices.size() * feature_dim);
    out.labels.reserve(indices.size());
    for (auto i : indices) {
        if (i >= size()) throw IntegrityError("sample index " + std::to_string(i) + " out of range");
        auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(labels[i]);
    }
    return out;
}

void PartitionSpec::validate() const {
    if (num_clients < 1) throw ConfigError("partition.num_clients must be >= 1");
    if (!(knob >= 0.0 && knob <= 1.0)) throw ConfigError("partition.knob must lie in [0, 1]");
}

LabeledDataset generate_synthetic(std::size_t num_samples, std::size_t num_classes,
                                  std::size_t feature_dim, double class_separation,
                                  std::uint64_t seed) {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (num_samples < num_classes) throw ConfigError("num_samples must be >= num_classes");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (!(class_separation > 0.0)) throw ConfigError("class_separation must be > 0");

    Rng rng(seed);
    std::vector<double> means(num_classes * feature_dim);
    for (auto& m : means) m = class_separation * rng.normal();

    std::vector<int> labels(num_samples);
    for (std::size_t i = 0; i < num_samples; ++i) labels[i] = static_cast<int>(i % num_classes);
    rng.shuffle(labels.begin(), labels.end());

    LabeledDataset ds;
    ds.feature_dim = feature_dim;
    ds.num_classes = num_classes;
    ds.labels = std::move(labels);
    ds.features.resize(num_samples * feature_dim);
    for (std::size_t i = 0; i < num_samples; ++i) {
        const auto c = static_cast<std::size_t>(ds.labels[i]);
        for (std::size_t j = 0; j < feature_dim; ++j)
            ds.features[i * feature_dim + j] = means[c * feature_dim + j] + rng.normal();
    }
    return ds;
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

bool parse_double(const std::string& text, double& out) {
    const auto t = trim(text);
    if (t.empty()) return false;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

bool parse_integer(const std::string& text, long long& out) {
    const auto t = trim(text);
    if (t.empty()) return false;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    return ec == std::errc() && ptr == t.data() + t.size();
}

}  // namespace

CsvLoadResult load_csv_dataset(const std::filesystem::path& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset file " + path.string());

    std::vector<double> features;
    std::vector<long long> raw_labels;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (has_header && line_no == 1) continue;
        if (trim(line).empty()) continue;
        auto cells = split_commas(line);
        if (cells.size() < 2) throw ParseError("expected at least one feature and a label", line_no);
        if (dim == 0) dim = cells.size() - 1;
        if (cells.size() - 1 != dim)
            throw ParseError("expected " + std::to_string(dim) + " features, found " +
                                 std::to_string(cells.size() - 1),
                             line_no);
        for (std::size_t j = 0; j < dim; ++j) {
            double v;
            if (!parse_double(cells[j], v))
                throw ParseError("non-numeric feature '" + trim(cells[j]) + "' in column " +
                                     std::to_string(j + 1),
                                 line_no);
            features.push_back(v);
        }
        long long y;
        if (!parse_integer(cells.back(), y))
            throw ParseError("label '" + trim(cells.back()) + "' is not an integer", line_no);
        raw_labels.push_back(y);
    }
    if (raw_labels.empty()) throw ParseError("dataset file " + path.string() + " has no rows");

    CsvLoadResult result;
    std::set<long long> distinct(raw_labels.begin(), raw_labels.end());
    int next = 0;
    for (auto v : distinct) result.report.label_mapping[v] = next++;
    for (auto [orig, mapped] : result.report.label_mapping)
        if (orig != mapped) result.report.remapped = true;
    result.report.rows = raw_labels.size();

    auto& ds = result.dataset;
    ds.feature_dim = dim;
    ds.num_classes = distinct.size();
    ds.features = std::move(features);
    ds.labels.reserve(raw_labels.size());
    for (auto y : raw_labels) ds.labels.push_back(result.report.label_mapping.at(y));
    if (ds.num_classes < 2) throw ParseError("dataset needs at least 2 distinct labels");
    ds.validate();
    return result;
}

std::vector<ClientShard> partition_non_iid(const LabeledDataset& dataset, const PartitionSpec& spec) {
    spec.validate();
    if (dataset.size() == 0) throw PartitionError("cannot partition an empty dataset");
    const std::size_t n = spec.num_clients;
    const std::size_t classes = dataset.num_classes;
    if (spec.knob == 1.0 && n < classes)
        throw ConfigError("knob = 1 needs at least one client per class (" + std::to_string(n) +
                          " clients, " + std::to_string(classes) + " classes)");

    std::vector<std::vector<std::size_t>> groups(classes);
    for (std::size_t i = 0; i < n; ++i) groups[i % classes].push_back(i);

    std::vector<ClientShard> shards(n);
    for (std::size_t i = 0; i < n; ++i) shards[i].client_id = static_cast<int>(i);

    Rng rng(spec.seed);
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        const auto& group = groups[static_cast<std::size_t>(dataset.labels[s])];
        // The coin is drawn even for empty groups so the stream does not
        // depend on which branch is taken.
        const bool direct = rng.uniform01() < spec.knob && !group.empty();
        const std::size_t client = direct ? group[rng.below(group.size())] : rng.below(n);
        shards[client].sample_indices.push_back(s);
    }

    if (!spec.allow_empty) {
        for (const auto& shard : shards)
            if (shard.empty())
                throw PartitionError("client " + std::to_string(shard.client_id) +
                                     " received no samples; use more samples or fewer clients");
    }
    return shards;
}

std::vector<std::size_t> class_histogram(const ClientShard& shard, const LabeledDataset& dataset) {
    std::vector<std::size_t> counts(dataset.num_classes, 0);
    for (auto i : shard.sample_indices) {
        if (i >= dataset.size())
            throw IntegrityError("client " + std::to_string(shard.client_id) + " references sample " +
                                 std::to_string(i) + " outside a dataset of " +
                                 std::to_string(dataset.size()));
        ++counts[static_cast<std::size_t>(dataset.labels[i])];
    }
    return counts;
}

TrainTestSplit split_train_test(const LabeledDataset& dataset, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("dataset.test_fraction must lie in (0, 1)");
    std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);

    Rng rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (auto& members : by_class) {
        if (members.size() < 2)
            throw ConfigError("every class needs at least 2 samples for a train/test split");
        rng.shuffle(members.begin(), members.end());
        auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(members.size()) + 0.5));
        n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
        test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
        train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {dataset.subset(train_idx), dataset.subset(test_idx)};
}

nlohmann::json partition_report(const std::vector<ClientShard>& shards, const LabeledDataset& dataset,
                                const PartitionSpec& spec) {
    nlohmann::json clients = nlohmann::json::array();
    for (const auto& shard : shards) {
        const auto hist = class_histogram(shard, dataset);
        const auto top = hist.empty() ? 0 : *std::max_element(hist.begin(), hist.end());
        clients.push_back({
            {"client_id", shard.client_id},
            {"size", shard.size()},
            {"class_histogram", hist},
            {"max_class_fraction", shard.empty() ? 0.0 : static_cast<double>(top) / static_cast<double>(shard.size())},
        });
    }
    return {
        {"num_clients", spec.num_clients},
        {"knob", spec.knob},
        {"seed", spec.seed},
        {"num_samples", dataset.size()},
        {"num_classes", dataset.num_classes},
        {"clients", std::move(clients)},
    };
}

}  // namespace fedsel
