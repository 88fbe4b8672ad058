#include <random>

#include <doctest.h>

#include "testing.hpp"
#include "triage/network.hpp"

using namespace triage;
using namespace triage::learn;

namespace {

struct Fixture {
    std::vector<std::vector<std::uint32_t>> seqs;
    embed::EmbeddingTable table{1, 1};
    std::vector<std::vector<double>> fixed;
    std::vector<NetExample> batch;

    EncoderBank bank(bool cnn) const {
        EncoderBank b;
        if (cnn) {
            b.sequences = &seqs;
            b.table = &table;
        } else {
            b.fixed = &fixed;
        }
        return b;
    }
};

Fixture make_fixture(std::mt19937_64& rng, std::size_t dim, std::size_t fixed_dim, bool posneg) {
    Fixture f;
    f.table = embed::EmbeddingTable(12, dim);
    std::normal_distribution<double> n(0, 1);
    for (std::size_t r = 1; r < 12; ++r)
        for (auto& x : f.table.row(r)) x = n(rng);
    for (int e = 0; e < 10; ++e) {
        std::vector<std::uint32_t> s(7);
        for (auto& x : s) x = static_cast<std::uint32_t>(rng() % 12);
        f.seqs.push_back(s);
        f.fixed.push_back(testing::randn(fixed_dim, rng));
    }
    for (int i = 0; i < 4; ++i) {
        NetExample ex;
        ex.email = static_cast<std::uint32_t>(rng() % 10);
        const int np = i == 3 ? 0 : 1 + i;
        for (int k = 0; k < np; ++k) ex.primary.push_back(static_cast<std::uint32_t>(rng() % 10));
        if (posneg)
            for (int k = 0; k < 2 - i % 2; ++k) ex.negative.push_back(static_cast<std::uint32_t>(rng() % 10));
        ex.reply_rate = 0.1 * i;
        ex.label = i % 2;
        f.batch.push_back(ex);
    }
    return f;
}

void check_network_gradient(bool cnn, user::AggregationKind kind, user::HistoryMode mode, bool sim,
                            std::mt19937_64& rng) {
    NetworkConfig cfg;
    cfg.widths = {1, 2};
    cfg.filters = {2, 2};
    cfg.hidden = 4;
    cfg.concat_hidden = 3;
    const std::size_t dim = 3;
    FeatureLayout layout;
    layout.content = cnn ? repr::Content::cnn : repr::Content::embed;
    layout.mode = mode;
    layout.similarity = sim;
    layout.email_dim = cnn ? 4 : 5;
    auto fx = make_fixture(rng, dim, 5, mode == user::HistoryMode::posneg);
    auto m = NetworkModel::init(layout, cnn, static_cast<int>(dim), kind, 3, 1.5, cfg, rng());
    // move the attention and biases off their initial values
    for (auto b : m.blocks())
        for (auto& x : b) x += std::normal_distribution<double>(0, 0.2)(rng);
    m.pos_weight = 3.0;
    const auto bank = fx.bank(cnn);
    auto grad = m.zeros_like();
    network_loss(m, bank, fx.batch, &grad);
    auto f = [&] { return network_loss(m, bank, fx.batch, nullptr); };
    auto pb = m.blocks();
    auto gb = grad.blocks();
    REQUIRE(pb.size() == gb.size());
    for (std::size_t b = 0; b < pb.size(); ++b) {
        INFO("block " << b);
        // the composed loss is noisier in the last bits, so a wider step
        testing::check_gradient(pb[b], gb[b], f, rng, 8, 1e-4, 1e-5);
    }
}

}  // namespace

TEST_CASE("end-to-end gradient matches finite differences") {
    std::mt19937_64 rng(17);
    using K = user::AggregationKind;
    using M = user::HistoryMode;
    for (int inst = 0; inst < 5; ++inst) {
        for (K k : {K::uniform, K::learned_global, K::dot, K::concat}) {
            INFO("instance " << inst << " kind " << std::string(user::to_string(k)));
            check_network_gradient(true, k, M::posneg, true, rng);
        }
        check_network_gradient(true, K::dot, M::pos, true, rng);
        check_network_gradient(false, K::concat, M::posneg, true, rng);
        check_network_gradient(true, K::dot, M::posneg, false, rng);
    }
}

TEST_CASE("predictions survive a json round trip") {
    std::mt19937_64 rng(3);
    NetworkConfig cfg;
    cfg.widths = {1, 2};
    cfg.filters = {2, 2};
    cfg.hidden = 4;
    FeatureLayout layout;
    layout.content = repr::Content::cnn;
    layout.email_dim = 4;
    auto fx = make_fixture(rng, 3, 4, true);
    auto m = NetworkModel::init(layout, true, 3, user::AggregationKind::dot, 3, 1.0, cfg, 5);
    auto back = NetworkModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    CHECK(network_predict(back, fx.bank(true), fx.batch) == network_predict(m, fx.bank(true), fx.batch));
}

TEST_CASE("training lowers the loss on a learnable signal") {
    std::mt19937_64 rng(8);
    NetworkConfig cfg;
    cfg.widths = {1};
    cfg.filters = {4};
    cfg.hidden = 8;
    cfg.keep_prob = 1.0;
    cfg.learning_rate = 0.01;
    cfg.pos_weight = {false, 1.0};
    cfg.max_epochs = 15;
    cfg.batch_size = 16;
    FeatureLayout layout;
    layout.content = repr::Content::cnn;
    layout.email_dim = 4;
    auto fx = make_fixture(rng, 3, 4, true);
    // label: parity of the first token
    std::vector<NetExample> train;
    for (int i = 0; i < 200; ++i) {
        NetExample ex;
        ex.email = static_cast<std::uint32_t>(rng() % 10);
        ex.primary = {static_cast<std::uint32_t>(rng() % 10)};
        ex.negative = {static_cast<std::uint32_t>(rng() % 10)};
        ex.label = fx.seqs[ex.email][0] % 2 == 0;
        train.push_back(ex);
    }
    auto init = NetworkModel::init(layout, true, 3, user::AggregationKind::uniform, 1, 1.0, cfg, 2);
    const double before = network_loss(init, fx.bank(true), train, nullptr);
    auto m = train_network(init, fx.bank(true), train, {}, cfg, 4);
    CHECK(m.all_finite());
    CHECK(network_loss(m, fx.bank(true), train, nullptr) < before);
}
