#include <random>

#include <doctest.h>

#include "testing.hpp"
#include "triage/metrics.hpp"
#include "triage/mlp.hpp"

using namespace triage;
using namespace triage::learn;

namespace {

void perturb(MlpParams& p, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0, 0.3);
    for (auto b : p.blocks())
        for (auto& x : b) x = n(rng);
}

}  // namespace

TEST_CASE("zero network predicts one half") {
    auto p = MlpParams::init(6, 4, 1);
    for (auto b : p.blocks())
        for (auto& x : b) x = 0.0;
    std::vector<double> x{1, -2, 3, 0, 5, 1};
    CHECK(sigmoid(mlp_forward_dense(p, x, nullptr)) == 0.5);
    std::vector<std::uint32_t> idx{0, 4};
    std::vector<double> val{3.0, -1.0};
    CHECK(sigmoid(mlp_forward(p, idx, val, nullptr)) == 0.5);
}

TEST_CASE("sparse and dense forward agree") {
    std::mt19937_64 rng(4);
    auto p = MlpParams::init(8, 5, 2);
    perturb(p, rng);
    std::vector<std::uint32_t> idx{1, 3, 6};
    std::vector<double> val{0.5, -1.5, 2.0};
    std::vector<double> dense(8, 0.0);
    for (std::size_t k = 0; k < idx.size(); ++k) dense[idx[k]] = val[k];
    CHECK(mlp_forward(p, idx, val, nullptr) == doctest::Approx(mlp_forward_dense(p, dense, nullptr)).epsilon(1e-14));
}

TEST_CASE("loss gradient through the MLP matches finite differences") {
    std::mt19937_64 rng(9);
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t in = 3 + inst % 4, hid = inst % 5 == 0 ? 0 : 2 + inst % 3;
        auto p = MlpParams::init(in, hid, static_cast<std::uint64_t>(inst));
        perturb(p, rng);
        auto x = testing::randn(in, rng);
        const int y = inst % 2;
        const double pw = 1.0 + inst % 3;
        auto f = [&] { return weighted_logloss(sigmoid(mlp_forward_dense(p, x, nullptr)), y, pw); };

        MlpCache cache;
        const double z = mlp_forward_dense(p, x, &cache);
        auto g = p.zeros_like();
        std::vector<double> dx(in, 0.0);
        mlp_backward_dense(p, x, cache, weighted_logloss_grad(sigmoid(z), y, pw), g, dx);
        auto pb = p.blocks();
        auto gb = g.blocks();
        for (std::size_t b = 0; b < pb.size(); ++b) testing::check_gradient(pb[b], gb[b], f, rng, 10);
        testing::check_gradient(x, dx, f, rng, in);

        // sparse backward on the same row
        std::vector<std::uint32_t> idx;
        std::vector<double> val;
        for (std::uint32_t c = 0; c < in; c += 2) {
            idx.push_back(c);
            val.push_back(x[c]);
        }
        auto fs = [&] { return weighted_logloss(sigmoid(mlp_forward(p, idx, val, nullptr)), y, pw); };
        MlpCache cs;
        const double zs = mlp_forward(p, idx, val, &cs);
        auto gs = p.zeros_like();
        mlp_backward(p, idx, val, cs, weighted_logloss_grad(sigmoid(zs), y, pw), gs);
        auto gsb = gs.blocks();
        for (std::size_t b = 0; b < pb.size(); ++b) testing::check_gradient(pb[b], gsb[b], fs, rng, 10);
    }
}

TEST_CASE("training separates a learnable signal") {
    std::mt19937_64 rng(5);
    Dataset d(4), v(4);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 400; ++i) {
        std::vector<double> x{n(rng), n(rng), n(rng), n(rng)};
        const int y = x[0] * x[1] > 0;
        (i < 300 ? d : v).add(SparseVector::from_dense(x), y);
    }
    MlpConfig cfg;
    cfg.hidden = 16;
    cfg.keep_prob = 1.0;
    cfg.learning_rate = 0.01;
    cfg.pos_weight = {false, 1.0};
    cfg.max_epochs = 60;
    cfg.batch_size = 32;
    auto m = train_mlp(d, &v, cfg);
    CHECK(eval::auroc(m.predict_proba(v), v.labels()) > 0.8);
    CHECK(m.params.all_finite());
    auto back = MlpModel::from_json(m.to_json());
    CHECK(back.predict_proba(v) == m.predict_proba(v));
}
