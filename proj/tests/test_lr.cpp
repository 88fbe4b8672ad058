#include <numeric>
#include <random>

#include <doctest.h>

#include "testing.hpp"
#include "triage/lr.hpp"
#include "triage/metrics.hpp"

using namespace triage;
using namespace triage::learn;

namespace {

Dataset random_dataset(std::size_t rows, std::size_t width, std::mt19937_64& rng, double density = 0.5) {
    Dataset d(width);
    std::normal_distribution<double> n(0, 1);
    std::bernoulli_distribution keep(density);
    for (std::size_t r = 0; r < rows; ++r) {
        SparseVector v;
        v.dim = width;
        for (std::uint32_t c = 0; c < width; ++c)
            if (keep(rng)) {
                v.index.push_back(c);
                v.value.push_back(n(rng));
            }
        d.add(v, static_cast<int>(r % 3 == 0));
    }
    return d;
}

SparseVector dense_row(std::vector<double> x) { return SparseVector::from_dense(x); }

}  // namespace

TEST_CASE("objective gradient matches finite differences") {
    std::mt19937_64 rng(3);
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t W = 3 + inst % 5;
        auto data = random_dataset(12, W, rng);
        LrModel m;
        m.w = testing::randn(W, rng, 0.5);
        m.bias = 0.3;
        m.C = 0.5 + inst % 3;
        m.pos_weight = 1.0 + inst % 4;
        std::vector<std::uint32_t> rows(data.rows());
        std::iota(rows.begin(), rows.end(), 0u);
        std::vector<double> gw;
        double gb = 0;
        lr_objective(m, data, rows, 40, &gw, &gb);
        auto f = [&] { return lr_objective(m, data, rows, 40, nullptr, nullptr); };
        testing::check_gradient(m.w, gw, f, rng, W);
        std::vector<double> gbv{gb};
        std::span<double> bias(&m.bias, 1);
        testing::check_gradient(bias, gbv, f, rng, 1);
    }
}

TEST_CASE("separable toy reaches training AUROC 1") {
    Dataset d(2);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (int i = 0; i < 200; ++i) {
        const int y = i % 4 == 0;
        const double s = y ? 1.0 : -1.0;
        d.add(dense_row({s * u(rng), u(rng) - 0.5}), y);
    }
    LrConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 32;
    cfg.max_epochs = 30;
    auto m = train_lr(d, nullptr, cfg);
    CHECK(eval::auroc(m.predict_proba(d), d.labels()) == 1.0);
}

TEST_CASE("logits are affine in the features") {
    std::mt19937_64 rng(7);
    auto data = random_dataset(30, 6, rng, 0.7);
    LrModel m;
    m.w = testing::randn(6, rng);
    m.bias = -0.25;
    LrModel half = m;
    for (auto& x : half.w) x *= 0.5;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        std::vector<double> doubled(data.values(r).begin(), data.values(r).end());
        for (auto& x : doubled) x *= 2.0;
        CHECK(half.logit(data.indices(r), doubled) == m.logit(data, r));
    }
}

TEST_CASE("single-class training data is rejected") {
    Dataset d(1);
    d.add(dense_row({1.0}), 0);
    d.add(dense_row({2.0}), 0);
    CHECK_THROWS_AS(train_lr(d, nullptr, LrConfig{}), Error);
}

TEST_CASE("defaults and json round trip") {
    LrConfig cfg;
    CHECK(cfg.C == 1.0);
    CHECK(cfg.pos_weight.value == 1.0);
    CHECK_FALSE(cfg.pos_weight.balanced);
    std::mt19937_64 rng(2);
    LrModel m;
    m.w = testing::randn(5, rng);
    m.bias = 0.1234567890123;
    auto back = LrModel::from_json(m.to_json());
    CHECK(back.w == m.w);
    CHECK(back.bias == m.bias);
}
