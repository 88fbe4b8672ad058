#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "testing.hpp"
#include "triage/embeddings.hpp"

using namespace triage;
using namespace triage::embed;
using triage::text::UnigramTable;

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("triage_test_" + name)).string();
}

}  // namespace

TEST_CASE("negative-sampling gradient matches finite differences") {
    std::mt19937_64 rng(5);
    for (int inst = 0; inst < 25; ++inst) {
        const std::size_t d = 2 + inst % 7;
        auto center = testing::randn(d, rng, 0.7);
        auto context = testing::randn(d, rng, 0.7);
        std::vector<std::vector<double>> negs;
        for (int k = 0; k < 1 + inst % 5; ++k) negs.push_back(testing::randn(d, rng, 0.7));
        auto loss = [&] {
            std::vector<std::span<const double>> ns(negs.begin(), negs.end());
            return sgns_loss(center, context, ns);
        };
        std::vector<std::span<const double>> ns(negs.begin(), negs.end());
        const auto g = sgns_gradient(center, context, ns);
        testing::check_gradient(center, g.center, loss, rng, d);
        testing::check_gradient(context, g.context, loss, rng, d);
        for (std::size_t k = 0; k < negs.size(); ++k) testing::check_gradient(negs[k], g.negatives[k], loss, rng, d);
    }
}

TEST_CASE("zero epochs leave the initial table") {
    UnigramTable t({"a", "b", "c"}, {5, 4, 3});
    SkipGramConfig cfg;
    cfg.dimension = 6;
    cfg.epochs = 0;
    std::vector<std::vector<std::uint32_t>> docs{{1, 2, 3, 1, 2}};
    CHECK(train_skipgram(docs, t, cfg) == initial_table(t, cfg));
    const auto init = initial_table(t, cfg);
    for (double x : init.row(0)) CHECK(x == 0.0);
}

TEST_CASE("alternating corpus pulls a toward b relative to untouched tokens") {
    // c0..c19 are in the table but never center words, so their input rows
    // stay at the random initialization; their mean cosine with a is the control.
    std::vector<std::string> words{"a", "b"};
    std::vector<std::size_t> counts{500, 500};
    for (int i = 0; i < 20; ++i) {
        words.push_back("c" + std::to_string(i));
        counts.push_back(1);
    }
    UnigramTable t(words, counts);
    std::vector<std::uint32_t> doc;
    for (int i = 0; i < 1000; ++i) doc.push_back(i % 2 ? 2 : 1);
    SkipGramConfig cfg;
    cfg.dimension = 8;
    cfg.epochs = 5;
    auto e = train_skipgram({doc}, t, cfg);
    double control = 0;
    for (std::uint32_t c = 3; c < 23; ++c) control += cosine(e.row(1), e.row(c)) / 20.0;
    CHECK(cosine(e.row(1), e.row(2)) > control);
}

TEST_CASE("disjoint sub-languages separate") {
    UnigramTable t({"a", "b", "c", "x", "y", "z"}, {1, 1, 1, 1, 1, 1});
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> pick(0, 2);
    std::vector<std::vector<std::uint32_t>> docs;
    for (int d = 0; d < 60; ++d) {
        std::vector<std::uint32_t> doc;
        const std::uint32_t base = d % 2 ? 1 : 4;
        for (int i = 0; i < 50; ++i) doc.push_back(base + static_cast<std::uint32_t>(pick(rng)));
        docs.push_back(doc);
    }
    SkipGramConfig cfg;
    cfg.dimension = 10;
    auto e = train_skipgram(docs, t, cfg);
    double within = 0, cross = 0;
    int nw = 0, nc = 0;
    for (std::uint32_t i = 1; i <= 6; ++i)
        for (std::uint32_t j = i + 1; j <= 6; ++j) {
            const bool same = (i <= 3) == (j <= 3);
            (same ? within : cross) += cosine(e.row(i), e.row(j));
            (same ? nw : nc)++;
        }
    CHECK(within / nw > cross / nc);
}

TEST_CASE("fixed seed gives identical tables") {
    UnigramTable t({"a", "b", "c"}, {3, 3, 3});
    std::vector<std::vector<std::uint32_t>> docs{{1, 2, 3, 2, 1, 3, 3, 1}};
    SkipGramConfig cfg;
    cfg.dimension = 5;
    CHECK(train_skipgram(docs, t, cfg) == train_skipgram(docs, t, cfg));
}

TEST_CASE("loading word2vec text files") {
    const auto path = tmp_path("emb.txt");
    {
        std::ofstream f(path);
        f << "3 3\nalpha 1 2 3\nbeta -1 0.5 0\nomega 9 9 9\n";
    }
    UnigramTable t({"alpha", "beta", "gamma"}, {1, 1, 1});
    LoadReport rep;
    auto e = load_embeddings(path, t, rep);
    CHECK(e.dim() == 3);
    CHECK(rep.vectors_read == 3);
    CHECK(rep.matched == 2);
    CHECK(rep.unmatched_tokens == 1);
    CHECK(rep.missing_words == 1);
    CHECK(e.row(t.id("alpha"))[2] == 3.0);
    CHECK(e.row(t.id("beta"))[1] == 0.5);
    for (double x : e.row(t.id("gamma"))) CHECK(x == 0.0);
    std::filesystem::remove(path);
}

TEST_CASE("save then load is bit-identical") {
    UnigramTable t({"a", "b", "c"}, {3, 2, 1});
    SkipGramConfig cfg;
    cfg.dimension = 7;
    cfg.learn_unk = true;
    std::vector<std::vector<std::uint32_t>> docs{{1, 2, 3, 4, 2, 1}};
    auto e = train_skipgram(docs, t, cfg);
    const auto path = tmp_path("roundtrip.txt");
    save_embeddings(path, e, t);
    LoadReport rep;
    auto back = load_embeddings(path, t, rep);
    CHECK(back == e);
    std::filesystem::remove(path);
}

TEST_CASE("malformed embedding file is a data error") {
    const auto path = tmp_path("bad.txt");
    {
        std::ofstream f(path);
        f << "not a header\n";
    }
    UnigramTable t({"a"}, {1});
    LoadReport rep;
    CHECK_THROWS_AS(load_embeddings(path, t, rep), Error);
    std::filesystem::remove(path);
}
