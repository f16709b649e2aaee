#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedsel/partition.hpp"

namespace fedsel {

enum class ModelKind { softmax_regression, mlp_one_hidden };

struct TensorShape {
    std::string name;
    std::vector<std::size_t> dims;

    std::size_t count() const noexcept;
    bool operator==(const TensorShape&) const = default;
};

/// Flat parameter vector. `layout` names consecutive slices of `values`.
///
/// softmax_regression: output/weight [L, d], output/bias [L]
/// mlp_one_hidden:     hidden/weight [h, d], hidden/bias [h],
///                     output/weight [L, h], output/bias [L]
struct ModelParams {
    std::vector<double> values;
    std::vector<TensorShape> layout;
    std::uint64_t version = 0;

    /// Throws IntegrityError if the layout does not cover `values` exactly
    /// or any value is non-finite.
    void validate() const;
};

struct HyperParams {
    double learning_rate = 0.01;
    std::size_t batch_size = 20;
    std::size_t local_epochs = 1;
    ModelKind kind = ModelKind::softmax_regression;
    std::size_t hidden = 0;  ///< hidden width, mlp_one_hidden only

    void validate() const;
};

struct LocalTrainResult {
    int client_id = 0;
    std::vector<double> delta;              ///< trained - received
    std::vector<double> per_sample_losses;  ///< final local weights, shard order
    std::size_t num_samples = 0;
};

struct Evaluation {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

ModelParams init_params(ModelKind kind, std::size_t hidden, std::size_t feature_dim,
                        std::size_t num_classes, std::uint64_t seed);

/// Minibatch SGD on mean cross-entropy for `hyper.local_epochs` epochs,
/// reshuffling the shard each epoch, followed by one forward pass to collect
/// per-sample losses.
LocalTrainResult local_train(const ModelParams& params, const ClientShard& shard,
                             const LabeledDataset& dataset, const HyperParams& hyper,
                             std::uint64_t seed);

/// base + sum_i (n_i / sum_j n_j) * delta_i, reduced in ascending client_id
/// order regardless of the order of `results`.
ModelParams fed_avg(const ModelParams& base, std::span<const LocalTrainResult> results);

/// Argmax accuracy (ties toward the lowest class) and mean cross-entropy.
Evaluation evaluate(const ModelParams& params, const LabeledDataset& dataset);

/// Cross-entropy of one sample. When `grad` is non-null it is resized to the
/// parameter count and receives d loss / d params.
double sample_loss(const ModelParams& params, std::span<const double> x, int label,
                   std::vector<double>* grad = nullptr);

/// Class scores before the softmax.
std::vector<double> logits(const ModelParams& params, std::span<const double> x);

ModelKind infer_kind(const ModelParams& params);

/// Binary checkpoint, little-endian throughout:
///   magic "FSMODEL1" | u64 version | u32 tensor count |
///   per tensor: u32 name length, name bytes, u32 rank, u64 dims[rank] |
///   u64 value count | f64 values[count]
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fedsel
