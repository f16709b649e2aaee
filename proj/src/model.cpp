#include "fedsel/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsel/error.hpp"
#include "fedsel/rng.hpp"

namespace fedsel {

std::size_t TensorShape::count() const noexcept {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

void ModelParams::validate() const {
    std::size_t total = 0;
    for (const auto& t : layout) total += t.count();
    if (total != values.size())
        throw IntegrityError("layout covers " + std::to_string(total) + " values but the model has " +
                             std::to_string(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw IntegrityError("parameter " + std::to_string(i) + " is not finite");
}

void HyperParams::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("model.learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("model.batch_size must be >= 1");
    if (local_epochs < 1) throw ConfigError("model.local_epochs must be >= 1");
    if (kind == ModelKind::mlp_one_hidden && hidden < 1)
        throw ConfigError("model.hidden must be >= 1 for mlp_one_hidden");
}

namespace {

struct Shape {
    ModelKind kind;
    std::size_t d = 0;  // input
    std::size_t h = 0;  // hidden, 0 for softmax regression
    std::size_t classes = 0;

    std::size_t out_in() const { return kind == ModelKind::mlp_one_hidden ? h : d; }
    std::size_t out_weight_offset() const { return kind == ModelKind::mlp_one_hidden ? h * d + h : 0; }
    std::size_t out_bias_offset() const { return out_weight_offset() + classes * out_in(); }
    std::size_t total() const { return out_bias_offset() + classes; }
};

Shape shape_of(const ModelParams& p) {
    const auto& l = p.layout;
    Shape s{};
    if (l.size() == 2 && l[0].name == "output/weight" && l[1].name == "output/bias" &&
        l[0].dims.size() == 2 && l[1].dims.size() == 1 && l[0].dims[0] == l[1].dims[0]) {
        s.kind = ModelKind::softmax_regression;
        s.classes = l[0].dims[0];
        s.d = l[0].dims[1];
    } else if (l.size() == 4 && l[0].name == "hidden/weight" && l[1].name == "hidden/bias" &&
               l[2].name == "output/weight" && l[3].name == "output/bias" && l[0].dims.size() == 2 &&
               l[1].dims.size() == 1 && l[2].dims.size() == 2 && l[3].dims.size() == 1 &&
               l[0].dims[0] == l[1].dims[0] && l[2].dims[1] == l[0].dims[0] && l[2].dims[0] == l[3].dims[0]) {
        s.kind = ModelKind::mlp_one_hidden;
        s.h = l[0].dims[0];
        s.d = l[0].dims[1];
        s.classes = l[2].dims[0];
    } else {
        throw IntegrityError("unrecognised model layout");
    }
    if (s.total() != p.values.size())
        throw IntegrityError("model layout does not match its value count");
    return s;
}

struct Scratch {
    std::vector<double> hidden;
    std::vector<double> logits;
    std::vector<double> dhidden;
};

double log_sum_exp(const std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

void forward(const double* p, const Shape& s, std::span<const double> x, Scratch& sc) {
    const double* in = x.data();
    if (s.kind == ModelKind::mlp_one_hidden) {
        sc.hidden.resize(s.h);
        const double* w1 = p;
        const double* b1 = p + s.h * s.d;
        for (std::size_t k = 0; k < s.h; ++k) {
            double a = b1[k];
            for (std::size_t j = 0; j < s.d; ++j) a += w1[k * s.d + j] * x[j];
            sc.hidden[k] = std::tanh(a);
        }
        in = sc.hidden.data();
    }
    const std::size_t n_in = s.out_in();
    const double* w = p + s.out_weight_offset();
    const double* b = p + s.out_bias_offset();
    sc.logits.resize(s.classes);
    for (std::size_t c = 0; c < s.classes; ++c) {
        double z = b[c];
        for (std::size_t j = 0; j < n_in; ++j) z += w[c * n_in + j] * in[j];
        sc.logits[c] = z;
    }
}

// Loss of one sample; adds scale * gradient into `grad` when non-null.
double loss_and_accumulate(const double* p, const Shape& s, std::span<const double> x, int label,
                           double* grad, double scale, Scratch& sc) {
    forward(p, s, x, sc);
    const double lse = log_sum_exp(sc.logits);
    const double loss = lse - sc.logits[static_cast<std::size_t>(label)];
    if (grad == nullptr) return loss;

    // dL/dz = softmax(z) - onehot(label), stored in place of the logits.
    for (std::size_t c = 0; c < s.classes; ++c) sc.logits[c] = std::exp(sc.logits[c] - lse);
    sc.logits[static_cast<std::size_t>(label)] -= 1.0;

    const bool mlp = s.kind == ModelKind::mlp_one_hidden;
    const std::size_t n_in = s.out_in();
    const double* in = mlp ? sc.hidden.data() : x.data();
    const double* w = p + s.out_weight_offset();
    double* gw = grad + s.out_weight_offset();
    double* gb = grad + s.out_bias_offset();
    if (mlp) sc.dhidden.assign(s.h, 0.0);
    for (std::size_t c = 0; c < s.classes; ++c) {
        const double g = sc.logits[c];
        gb[c] += scale * g;
        for (std::size_t j = 0; j < n_in; ++j) {
            gw[c * n_in + j] += scale * g * in[j];
            if (mlp) sc.dhidden[j] += g * w[c * n_in + j];
        }
    }
    if (mlp) {
        double* gw1 = grad;
        double* gb1 = grad + s.h * s.d;
        for (std::size_t k = 0; k < s.h; ++k) {
            const double hk = sc.hidden[k];
            const double da = sc.dhidden[k] * (1.0 - hk * hk);
            gb1[k] += scale * da;
            for (std::size_t j = 0; j < s.d; ++j) gw1[k * s.d + j] += scale * da * x[j];
        }
    }
    return loss;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

}  // namespace

ModelKind infer_kind(const ModelParams& params) { return shape_of(params).kind; }

ModelParams init_params(ModelKind kind, std::size_t hidden, std::size_t feature_dim,
                        std::size_t num_classes, std::uint64_t seed) {
    if (feature_dim < 1 || num_classes < 2) throw ConfigError("model dimensions must be positive");
    if (kind == ModelKind::mlp_one_hidden && hidden < 1) throw ConfigError("hidden width must be >= 1");

    ModelParams p;
    Rng rng(seed);
    auto push_weights = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        p.layout.push_back({name, {rows, cols}});
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        for (std::size_t i = 0; i < rows * cols; ++i) p.values.push_back(rng.uniform(-bound, bound));
    };
    auto push_bias = [&](const std::string& name, std::size_t n) {
        p.layout.push_back({name, {n}});
        p.values.insert(p.values.end(), n, 0.0);
    };
    if (kind == ModelKind::mlp_one_hidden) {
        push_weights("hidden/weight", hidden, feature_dim);
        push_bias("hidden/bias", hidden);
        push_weights("output/weight", num_classes, hidden);
    } else {
        push_weights("output/weight", num_classes, feature_dim);
    }
    push_bias("output/bias", num_classes);
    return p;
}

double sample_loss(const ModelParams& params, std::span<const double> x, int label, std::vector<double>* grad) {
    const Shape s = shape_of(params);
    if (x.size() != s.d) throw IntegrityError("sample has the wrong feature dimension");
    if (label < 0 || static_cast<std::size_t>(label) >= s.classes) throw IntegrityError("label out of range");
    Scratch sc;
    if (grad == nullptr) return loss_and_accumulate(params.values.data(), s, x, label, nullptr, 0.0, sc);
    grad->assign(params.values.size(), 0.0);
    return loss_and_accumulate(params.values.data(), s, x, label, grad->data(), 1.0, sc);
}

std::vector<double> logits(const ModelParams& params, std::span<const double> x) {
    const Shape s = shape_of(params);
    if (x.size() != s.d) throw IntegrityError("sample has the wrong feature dimension");
    Scratch sc;
    forward(params.values.data(), s, x, sc);
    return sc.logits;
}

LocalTrainResult local_train(const ModelParams& params, const ClientShard& shard,
                             const LabeledDataset& dataset, const HyperParams& hyper,
                             std::uint64_t seed) {
    hyper.validate();
    const Shape s = shape_of(params);
    if (s.kind != hyper.kind || (s.kind == ModelKind::mlp_one_hidden && s.h != hyper.hidden))
        throw IntegrityError("model layout does not match the configured model kind");
    if (s.d != dataset.feature_dim || s.classes != dataset.num_classes)
        throw IntegrityError("model dimensions do not match the dataset");
    if (shard.empty()) throw TrainingError("client has no training samples", shard.client_id);
    for (auto i : shard.sample_indices)
        if (i >= dataset.size()) throw IntegrityError("shard index out of range");

    std::vector<double> w = params.values;
    std::vector<double> grad(w.size());
    std::vector<std::size_t> order = shard.sample_indices;
    Rng rng(seed);
    Scratch sc;

    for (std::size_t epoch = 0; epoch < hyper.local_epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
            const std::size_t end = std::min(order.size(), start + hyper.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t b = start; b < end; ++b) {
                const auto i = order[b];
                loss_and_accumulate(w.data(), s, dataset.row(i), dataset.labels[i], grad.data(), scale, sc);
            }
            for (std::size_t k = 0; k < w.size(); ++k) w[k] -= hyper.learning_rate * grad[k];
        }
        if (!all_finite(w))
            throw TrainingError("local training diverged in epoch " + std::to_string(epoch + 1),
                                shard.client_id);
    }

    LocalTrainResult result;
    result.client_id = shard.client_id;
    result.num_samples = shard.size();
    result.per_sample_losses.reserve(shard.size());
    for (auto i : shard.sample_indices)
        result.per_sample_losses.push_back(
            loss_and_accumulate(w.data(), s, dataset.row(i), dataset.labels[i], nullptr, 0.0, sc));
    if (!all_finite(result.per_sample_losses))
        throw TrainingError("non-finite training loss", shard.client_id);

    result.delta.resize(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) result.delta[k] = w[k] - params.values[k];
    return result;
}

ModelParams fed_avg(const ModelParams& base, std::span<const LocalTrainResult> results) {
    if (results.empty()) throw AggregationError("no client results to aggregate");
    std::vector<const LocalTrainResult*> ordered;
    ordered.reserve(results.size());
    double total = 0.0;
    for (const auto& r : results) {
        if (r.delta.size() != base.values.size())
            throw AggregationError("client " + std::to_string(r.client_id) + " sent " +
                                   std::to_string(r.delta.size()) + " values, expected " +
                                   std::to_string(base.values.size()));
        ordered.push_back(&r);
        total += static_cast<double>(r.num_samples);
    }
    if (total <= 0.0) throw AggregationError("client results carry zero samples in total");
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto* a, const auto* b) { return a->client_id < b->client_id; });

    ModelParams out = base;
    std::vector<double> weights;
    weights.reserve(ordered.size());
    for (const auto* r : ordered) weights.push_back(static_cast<double>(r->num_samples) / total);
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < ordered.size(); ++i) acc += weights[i] * ordered[i]->delta[k];
        out.values[k] = base.values[k] + acc;
    }
    ++out.version;
    if (!all_finite(out.values)) throw AggregationError("aggregated model contains non-finite values");
    return out;
}

Evaluation evaluate(const ModelParams& params, const LabeledDataset& dataset) {
    const Shape s = shape_of(params);
    if (s.d != dataset.feature_dim || s.classes != dataset.num_classes)
        throw IntegrityError("model dimensions do not match the dataset");
    if (dataset.size() == 0) return {};
    Scratch sc;
    std::size_t correct = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        forward(params.values.data(), s, dataset.row(i), sc);
        const auto best = static_cast<std::size_t>(std::max_element(sc.logits.begin(), sc.logits.end()) - sc.logits.begin());
        if (best == static_cast<std::size_t>(dataset.labels[i])) ++correct;
        loss += log_sum_exp(sc.logits) - sc.logits[static_cast<std::size_t>(dataset.labels[i])];
    }
    const auto n = static_cast<double>(dataset.size());
    return {static_cast<double>(correct) / n, loss / n};
}

}  // namespace fedsel
