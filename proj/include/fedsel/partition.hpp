#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "json.hpp"

namespace fedsel {

/// Row-major feature matrix plus 0-based integer labels.
struct LabeledDataset {
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::vector<double> features;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * feature_dim, feature_dim};
    }

    /// Throws IntegrityError unless every label is in range, every class is
    /// present and the feature matrix matches the label count.
    void validate() const;

    /// Rows `indices` in the given order, as a new dataset with the same
    /// num_classes. Does not require every class to be present.
    LabeledDataset subset(std::span<const std::size_t> indices) const;
};

struct ClientShard {
    int client_id = 0;
    std::vector<std::size_t> sample_indices;

    std::size_t size() const noexcept { return sample_indices.size(); }
    bool empty() const noexcept { return sample_indices.empty(); }
};

struct PartitionSpec {
    std::size_t num_clients = 1;
    double knob = 0.0;  ///< 0 = iid, 1 = one class per client
    std::uint64_t seed = 0;
    bool allow_empty = false;

    void validate() const;
};

/// Balanced Gaussian blobs: class c has mean `class_separation * z_c` with
/// z_c ~ N(0, I_d), and unit isotropic noise around it. Rows are shuffled.
LabeledDataset generate_synthetic(std::size_t num_samples, std::size_t num_classes,
                                  std::size_t feature_dim, double class_separation,
                                  std::uint64_t seed);

struct CsvLoadReport {
    std::size_t rows = 0;
    bool remapped = false;
    std::map<long long, int> label_mapping;  ///< original label -> 0-based label
};

struct CsvLoadResult {
    LabeledDataset dataset;
    CsvLoadReport report;
};

/// Rows are `f1,...,fd,label`. Labels that are not already 0..L-1 are
/// remapped in ascending order of their original value.
CsvLoadResult load_csv_dataset(const std::filesystem::path& path, bool has_header = false);

/// Clients are split round-robin into one group per class (client i serves
/// class i mod L). Each sample of class c goes, with probability `knob`, to a
/// uniformly random client of group c, otherwise to a uniformly random client
/// of the whole pool. A class whose group is empty (N < L) always takes the
/// uniform branch.
std::vector<ClientShard> partition_non_iid(const LabeledDataset& dataset, const PartitionSpec& spec);

std::vector<std::size_t> class_histogram(const ClientShard& shard, const LabeledDataset& dataset);

struct TrainTestSplit {
    LabeledDataset train;
    LabeledDataset test;
};

/// Stratified split: each class contributes round(test_fraction * count)
/// samples to the test side, clamped so both sides keep at least one.
TrainTestSplit split_train_test(const LabeledDataset& dataset, double test_fraction,
                                std::uint64_t seed);

/// Per-client class histograms for auditing a partition.
nlohmann::json partition_report(const std::vector<ClientShard>& shards, const LabeledDataset& dataset,
                                const PartitionSpec& spec);

}  // namespace fedsel
