#include <algorithm>
#include <cmath>
#include <random>

#include <doctest.h>

#include "gbdt_oracle.hpp"
#include "triage/gbdt.hpp"
#include "triage/metrics.hpp"

using namespace triage;
using namespace triage::learn;
using oracle::Matrix;
using oracle::random_fixture;
using oracle::to_dataset;

namespace {

std::vector<double> probs(const GbdtModel& m, const Dataset& d) { return m.predict_proba(d); }

}  // namespace

TEST_CASE("zero iterations is the prior log-odds") {
    std::mt19937_64 rng(1);
    Matrix x;
    std::vector<int> y;
    random_fixture(60, 3, rng, x, y);
    const auto d = to_dataset(x, y);
    GbdtConfig cfg;
    cfg.iterations = 0;
    cfg.pos_weight = {false, 5.0};
    const auto m = train_gbdt(d, cfg);
    const double npos = static_cast<double>(d.positives());
    const double prior = std::log(5.0 * npos / (60.0 - npos));
    CHECK(m.trees.empty());
    for (std::size_t r = 0; r < d.rows(); ++r) CHECK(m.logit(d, r) == doctest::Approx(prior).epsilon(1e-14));
}

TEST_CASE("a perfect binary feature gives one split and AUROC 1") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    Matrix x;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
        y.push_back(i % 3 == 0);
        x.push_back({u(rng), 1.0 + y.back(), u(rng)});
    }
    const auto d = to_dataset(x, y);
    GbdtConfig cfg;
    cfg.iterations = 1;
    cfg.max_depth = 1;
    const auto m = train_gbdt(d, cfg);
    REQUIRE(m.first_tree_splits.size() == 1);
    CHECK(m.first_tree_splits[0].feature == 1);
    CHECK(m.trees[0].leaves() == 2);
    CHECK(eval::auroc(probs(m, d), d.labels()) == 1.0);
}

TEST_CASE("first-tree splits match exhaustive search (depth 2)") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 12; ++trial) {
        Matrix x;
        std::vector<int> y;
        random_fixture(50, 5, rng, x, y);
        CHECK(oracle::first_tree_mismatch(x, y, 2) == "");
    }
}

TEST_CASE("first-tree splits match exhaustive search (depth 3, leaf-wise)") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 12; ++trial) {
        Matrix x;
        std::vector<int> y;
        random_fixture(50, 5, rng, x, y);
        CHECK(oracle::first_tree_mismatch(x, y, 3) == "");
    }
}

TEST_CASE("predictions are invariant to monotone feature transforms") {
    std::mt19937_64 rng(4);
    Matrix x;
    std::vector<int> y;
    random_fixture(300, 4, rng, x, y);
    Matrix t = x;
    for (auto& row : t) {
        row[0] = std::exp(3 * row[0]);
        row[1] = std::pow(row[1], 3) + 10;
        row[3] = std::log(row[3]) + 5;
    }
    GbdtConfig cfg;
    cfg.iterations = 20;
    cfg.max_depth = 3;
    cfg.min_data_in_leaf = 5;
    const auto a = train_gbdt(to_dataset(x, y), cfg);
    const auto b = train_gbdt(to_dataset(t, y), cfg);
    CHECK(probs(a, to_dataset(x, y)) == probs(b, to_dataset(t, y)));
}

TEST_CASE("a constant feature changes nothing") {
    std::mt19937_64 rng(5);
    Matrix x;
    std::vector<int> y;
    random_fixture(200, 4, rng, x, y);
    Matrix c = x;
    for (auto& row : c) row.push_back(7.0);
    GbdtConfig cfg;
    cfg.iterations = 10;
    cfg.max_depth = 3;
    cfg.min_data_in_leaf = 5;
    const auto a = train_gbdt(to_dataset(x, y), cfg);
    const auto b = train_gbdt(to_dataset(c, y), cfg);
    REQUIRE(a.first_tree_splits.size() == b.first_tree_splits.size());
    for (std::size_t i = 0; i < a.first_tree_splits.size(); ++i) {
        CHECK(a.first_tree_splits[i].feature == b.first_tree_splits[i].feature);
        CHECK(a.first_tree_splits[i].threshold == b.first_tree_splits[i].threshold);
    }
    CHECK(probs(a, to_dataset(x, y)) == probs(b, to_dataset(c, y)));
    CHECK(b.gain_importance[4] == 0.0);
}

TEST_CASE("trees respect depth and leaf caps") {
    std::mt19937_64 rng(6);
    Matrix x;
    std::vector<int> y;
    random_fixture(400, 5, rng, x, y);
    for (int depth : {1, 2, 3, 5}) {
        GbdtConfig cfg;
        cfg.iterations = 5;
        cfg.max_depth = depth;
        cfg.min_data_in_leaf = 2;
        const auto m = train_gbdt(to_dataset(x, y), cfg);
        for (const auto& t : m.trees) {
            CHECK(t.depth() <= depth);
            CHECK(t.leaves() <= cfg.max_leaves());
        }
    }
}

TEST_CASE("implicit zeros get their own bin") {
    Dataset d(2);
    std::vector<int> y;
    for (int i = 0; i < 100; ++i) {
        SparseVector v;
        v.dim = 2;
        if (i % 2) {
            v.index.push_back(0);
            v.value.push_back(i % 4 == 1 ? -1.0 : 1.0);
        }
        v.index.push_back(1);
        v.value.push_back(0.5 + i % 5);
        d.add(v, i % 4 == 1);
    }
    const auto bins = compute_bins(d, 255);
    CHECK(bins[0].upper == std::vector<double>{-1.0, 0.0, 1.0});
    CHECK(bins[0].zero_bin == 1);
    CHECK(bins[1].zero_bin == -1);
    GbdtConfig cfg;
    cfg.iterations = 1;
    cfg.max_depth = 1;
    const auto m = train_gbdt(d, cfg);
    REQUIRE(m.first_tree_splits.size() == 1);
    CHECK(m.first_tree_splits[0].feature == 0);
    CHECK(eval::auroc(probs(m, d), d.labels()) == 1.0);
}

TEST_CASE("quantile bins are capped") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(5, 1);
    Dataset d(1);
    for (int i = 0; i < 2000; ++i) d.add(SparseVector::from_dense(std::vector<double>{n(rng)}), i % 2);
    const auto bins = compute_bins(d, 255);
    CHECK(bins[0].size() <= 255);
    CHECK(bins[0].size() >= 200);
    CHECK(std::is_sorted(bins[0].upper.begin(), bins[0].upper.end()));
}

TEST_CASE("model json round trip") {
    std::mt19937_64 rng(8);
    Matrix x;
    std::vector<int> y;
    random_fixture(150, 4, rng, x, y);
    const auto d = to_dataset(x, y);
    GbdtConfig cfg;
    cfg.iterations = 8;
    cfg.max_depth = 3;
    cfg.min_data_in_leaf = 4;
    const auto m = train_gbdt(d, cfg);
    const auto back = GbdtModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    CHECK(probs(back, d) == probs(m, d));
    CHECK(GbdtConfig::from_json(cfg.to_json()).max_leaves() == cfg.max_leaves());
}
