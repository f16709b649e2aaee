#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>

#include "fedsel/error.hpp"
#include "fedsel/model.hpp"
#include "fedsel/rng.hpp"
#include "oracles.hpp"

using namespace fedsel;

namespace {

ModelParams random_params(ModelKind kind, std::size_t h, std::size_t d, std::size_t l, std::uint64_t seed) {
    auto p = init_params(kind, h, d, l, seed);
    Rng rng(seed ^ 0x55);
    for (auto& v : p.values) v = rng.uniform(-1.0, 1.0);  // biases too
    return p;
}

double gradient_error(ModelKind kind, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t d = 2 + rng.below(5), l = 2 + rng.below(4), h = 1 + rng.below(6);
    auto p = random_params(kind, h, d, l, seed);
    std::vector<double> x(d);
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    const int y = static_cast<int>(rng.below(l));

    std::vector<double> analytic;
    sample_loss(p, x, y, &analytic);
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& values) {
            ModelParams q = p;
            q.values = values;
            return sample_loss(q, x, y);
        },
        p.values);
    return oracle::relative_error(analytic, numeric);
}

LocalTrainResult make_result(int id, std::size_t n, std::vector<double> delta) {
    LocalTrainResult r;
    r.client_id = id;
    r.num_samples = n;
    r.delta = std::move(delta);
    r.per_sample_losses.assign(n, 0.0);
    return r;
}

ModelParams flat(std::vector<double> values) {
    ModelParams p;
    p.layout = {{"v", {values.size()}}};
    p.values = std::move(values);
    return p;
}

// Two well separated 2-D classes.
LabeledDataset separable(std::size_t n) {
    LabeledDataset ds;
    ds.feature_dim = 2;
    ds.num_classes = 2;
    Rng rng(17);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        const double sign = y == 0 ? -1.0 : 1.0;
        ds.features.push_back(sign * (2.0 + rng.uniform01()));
        ds.features.push_back(rng.uniform(-1.0, 1.0));
        ds.labels.push_back(y);
    }
    return ds;
}

ClientShard whole(const LabeledDataset& ds, int id = 0) {
    ClientShard s;
    s.client_id = id;
    s.sample_indices.resize(ds.size());
    std::iota(s.sample_indices.begin(), s.sample_indices.end(), 0);
    return s;
}

}  // namespace

TEST_CASE("parameter counts") {
    CHECK(init_params(ModelKind::softmax_regression, 0, 4, 3, 1).values.size() == 15);
    CHECK(init_params(ModelKind::mlp_one_hidden, 8, 4, 3, 1).values.size() == 67);
    const auto p = init_params(ModelKind::mlp_one_hidden, 8, 4, 3, 1);
    p.validate();
    CHECK(infer_kind(p) == ModelKind::mlp_one_hidden);
}

TEST_CASE("initialisation is seeded, fan-in scaled, biases zero") {
    const auto a = init_params(ModelKind::softmax_regression, 0, 16, 3, 5);
    CHECK(a.values == init_params(ModelKind::softmax_regression, 0, 16, 3, 5).values);
    CHECK(a.values != init_params(ModelKind::softmax_regression, 0, 16, 3, 6).values);
    for (std::size_t i = 0; i < 48; ++i) CHECK(std::fabs(a.values[i]) <= 0.25);
    for (std::size_t i = 48; i < 51; ++i) CHECK(a.values[i] == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        CHECK(gradient_error(ModelKind::softmax_regression, seed) < 1e-5);
        CHECK(gradient_error(ModelKind::mlp_one_hidden, seed) < 1e-5);
    }
}

TEST_CASE("fed_avg examples") {
    SUBCASE("equal weights") {
        std::vector<LocalTrainResult> r = {make_result(0, 5, {2, 0}), make_result(1, 5, {0, 2})};
        CHECK(fed_avg(flat({0, 0}), r).values == std::vector<double>{1, 1});
    }
    SUBCASE("single client") {
        std::vector<LocalTrainResult> r = {make_result(3, 7, {0.25, -1.5})};
        CHECK(fed_avg(flat({1, 1}), r).values == std::vector<double>{1.25, -0.5});
    }
    SUBCASE("weighted") {
        std::vector<LocalTrainResult> r = {make_result(0, 1, {4, 0}), make_result(1, 3, {0, 4})};
        const auto out = fed_avg(flat({0, 0}), r);
        const auto ref = oracle::fed_avg(std::vector<double>{0, 0}, {{4, 0}, {0, 4}}, {1, 3});
        CHECK(out.values[0] == doctest::Approx(1.0));
        CHECK(out.values[1] == doctest::Approx(3.0));
        CHECK(out.values[0] == doctest::Approx(ref[0]).epsilon(1e-12));
        CHECK(out.values[1] == doctest::Approx(ref[1]).epsilon(1e-12));
    }
    SUBCASE("version increments") {
        auto base = flat({0});
        base.version = 4;
        std::vector<LocalTrainResult> r = {make_result(0, 1, {1})};
        CHECK(fed_avg(base, r).version == 5);
    }
}

TEST_CASE("fed_avg is independent of arrival order") {
    Rng rng(3);
    std::vector<LocalTrainResult> r;
    for (int id = 0; id < 7; ++id) {
        std::vector<double> d(5);
        for (auto& v : d) v = rng.uniform(-1, 1);
        r.push_back(make_result(id, 1 + rng.below(50), d));
    }
    const auto a = fed_avg(flat({0, 0, 0, 0, 0}), r);
    std::reverse(r.begin(), r.end());
    std::swap(r[1], r[4]);
    const auto b = fed_avg(flat({0, 0, 0, 0, 0}), r);
    CHECK(std::memcmp(a.values.data(), b.values.data(), 5 * sizeof(double)) == 0);
}

TEST_CASE("fed_avg properties") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.below(6), dim = 1 + rng.below(6);
        std::vector<double> base(dim), same(dim);
        for (auto& v : base) v = rng.uniform(-3, 3);
        for (auto& v : same) v = rng.uniform(-3, 3);
        std::vector<LocalTrainResult> identical, varied, scaled;
        const auto c = static_cast<std::size_t>(1 + rng.below(20));
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t count = 1 + rng.below(100);
            identical.push_back(make_result(static_cast<int>(i), count, same));
            std::vector<double> d(dim);
            for (auto& v : d) v = rng.uniform(-3, 3);
            varied.push_back(make_result(static_cast<int>(i), count, d));
            scaled.push_back(make_result(static_cast<int>(i), count, d));
        }
        // identical deltas come through unchanged whatever the weights
        const auto id_out = fed_avg(flat(base), identical);
        for (std::size_t k = 0; k < dim; ++k) CHECK(id_out.values[k] == doctest::Approx(base[k] + same[k]).epsilon(1e-12));

        // weights only matter up to normalisation
        const auto a = fed_avg(flat(base), varied);
        for (auto& r : scaled) r.num_samples *= c;
        const auto b = fed_avg(flat(base), scaled);
        for (std::size_t k = 0; k < dim; ++k) CHECK(a.values[k] == doctest::Approx(b.values[k]).epsilon(1e-12));
    }
}

TEST_CASE("fed_avg errors") {
    std::vector<LocalTrainResult> none;
    CHECK_THROWS_AS(fed_avg(flat({0}), none), AggregationError);
    std::vector<LocalTrainResult> mismatch = {make_result(0, 1, {1, 2})};
    CHECK_THROWS_AS(fed_avg(flat({0}), mismatch), AggregationError);
    std::vector<LocalTrainResult> empty = {make_result(0, 0, {1})};
    CHECK_THROWS_AS(fed_avg(flat({0}), empty), AggregationError);
}

TEST_CASE("evaluate") {
    SUBCASE("constant prediction of class 0 on a half/half set") {
        auto p = init_params(ModelKind::softmax_regression, 0, 2, 2, 1);
        std::fill(p.values.begin(), p.values.end(), 0.0);
        p.values[4] = 1.0;  // bias of class 0
        CHECK(evaluate(p, separable(10)).accuracy == doctest::Approx(0.5));
    }
    SUBCASE("zero weights give log(L) loss and tie toward class 0") {
        for (std::size_t l : {2u, 3u, 7u}) {
            LabeledDataset ds;
            ds.feature_dim = 3;
            ds.num_classes = l;
            for (std::size_t i = 0; i < 3 * l; ++i) {
                ds.features.insert(ds.features.end(), {1.0, -2.0, 0.5});
                ds.labels.push_back(static_cast<int>(i % l));
            }
            auto p = init_params(ModelKind::softmax_regression, 0, 3, l, 2);
            std::fill(p.values.begin(), p.values.end(), 0.0);
            const auto e = evaluate(p, ds);
            CHECK(e.mean_loss == doctest::Approx(std::log(static_cast<double>(l))).epsilon(1e-12));
            CHECK(e.accuracy == doctest::Approx(1.0 / static_cast<double>(l)));
        }
    }
    SUBCASE("perfect margin") {
        auto p = init_params(ModelKind::softmax_regression, 0, 2, 2, 1);
        p.values = {-10, 0, 10, 0, 0, 0};  // class 1 iff x0 > 0
        CHECK(evaluate(p, separable(40)).accuracy == 1.0);
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(evaluate(init_params(ModelKind::softmax_regression, 0, 3, 2, 1), separable(4)), IntegrityError);
    }
}

TEST_CASE("local training") {
    const auto ds = separable(60);
    const auto shard = whole(ds, 4);
    HyperParams hyper;
    hyper.batch_size = 8;

    SUBCASE("vanishing learning rate is a no-op") {
        hyper.learning_rate = 1e-14;
        const auto p = init_params(ModelKind::softmax_regression, 0, 2, 2, 3);
        const auto r = local_train(p, shard, ds, hyper, 1);
        CHECK(r.client_id == 4);
        CHECK(r.num_samples == 60);
        for (double v : r.delta) CHECK(std::fabs(v) < 1e-12);
        double mean = 0;
        for (double l : r.per_sample_losses) mean += l / 60.0;
        CHECK(mean == doctest::Approx(evaluate(p, ds).mean_loss).epsilon(1e-9));
    }
    SUBCASE("separable shard converges") {
        hyper.learning_rate = 0.5;
        hyper.local_epochs = 200;
        const auto p = init_params(ModelKind::softmax_regression, 0, 2, 2, 3);
        const auto r = local_train(p, shard, ds, hyper, 1);
        double mean = 0;
        for (double l : r.per_sample_losses) {
            CHECK(l >= 0.0);
            mean += l / 60.0;
        }
        CHECK(mean < 0.1);
    }
    SUBCASE("mlp trains too") {
        hyper.kind = ModelKind::mlp_one_hidden;
        hyper.hidden = 6;
        hyper.learning_rate = 0.3;
        hyper.local_epochs = 100;
        const auto p = init_params(ModelKind::mlp_one_hidden, 6, 2, 2, 3);
        const auto r = local_train(p, shard, ds, hyper, 1);
        double mean = 0;
        for (double l : r.per_sample_losses) mean += l / 60.0;
        CHECK(mean < 0.1);
    }
    SUBCASE("seeded") {
        hyper.learning_rate = 0.1;
        const auto p = init_params(ModelKind::softmax_regression, 0, 2, 2, 3);
        CHECK(local_train(p, shard, ds, hyper, 9).delta == local_train(p, shard, ds, hyper, 9).delta);
        CHECK(local_train(p, shard, ds, hyper, 9).delta != local_train(p, shard, ds, hyper, 10).delta);
    }
    SUBCASE("divergence is reported with the client id") {
        hyper.learning_rate = 1e308;
        auto p = init_params(ModelKind::softmax_regression, 0, 2, 2, 3);
        try {
            local_train(p, shard, ds, hyper, 1);
            FAIL("expected divergence");
        } catch (const TrainingError& e) {
            CHECK(e.client_id() == 4);
        }
    }
    SUBCASE("layout must match the configured kind") {
        hyper.kind = ModelKind::mlp_one_hidden;
        hyper.hidden = 4;
        CHECK_THROWS_AS(local_train(init_params(ModelKind::softmax_regression, 0, 2, 2, 3), shard, ds, hyper, 1),
                        IntegrityError);
    }
    SUBCASE("empty shard") {
        CHECK_THROWS_AS(local_train(init_params(ModelKind::softmax_regression, 0, 2, 2, 3), ClientShard{1, {}}, ds,
                                    hyper, 1),
                        TrainingError);
    }
}

TEST_CASE("checkpoint round trip") {
    auto p = init_params(ModelKind::mlp_one_hidden, 5, 3, 4, 7);
    p.version = 42;
    const auto path = std::filesystem::temp_directory_path() / "fedsel_ckpt_test.bin";
    save_checkpoint(path, p);
    const auto q = load_checkpoint(path);
    CHECK(q.version == 42);
    CHECK(q.layout == p.layout);
    CHECK(std::memcmp(q.values.data(), p.values.data(), p.values.size() * sizeof(double)) == 0);
    // value count (8) + the eight-byte magic and the header fields
    CHECK(std::filesystem::file_size(path) > p.values.size() * 8);

    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);
}
