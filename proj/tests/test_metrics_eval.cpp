#include <cmath>
#include <random>
#include <sstream>

#include <doctest.h>

#include "triage/evaluation.hpp"
#include "triage/metrics.hpp"

using namespace triage;
using namespace triage::eval;

namespace {

// Pair counting: P(s+ > s-) + 0.5 P(s+ == s-).
double pair_auroc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
            }
    return wins / pairs;
}

void random_instance(std::mt19937_64& rng, std::vector<double>& s, std::vector<int>& y) {
    const std::size_t n = 2 + rng() % 199;
    const int levels = 1 + static_cast<int>(rng() % 30);  // few levels force ties
    s.resize(n);
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng() % static_cast<unsigned>(levels)) / levels;
        y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
}

}  // namespace

TEST_CASE("auroc examples") {
    CHECK(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
    CHECK(auroc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{0, 0, 1, 1}) == 0.0);
    CHECK(auroc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{0, 1, 1}) == 0.5);
    CHECK(auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
    CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
    CHECK_THROWS_AS(auroc(std::vector<double>{0.1}, std::vector<int>{0, 1}), Error);
}

TEST_CASE("rank auroc equals pair counting on 1000 instances") {
    std::mt19937_64 rng(1);
    std::vector<double> s;
    std::vector<int> y;
    for (int inst = 0; inst < 1000; ++inst) {
        random_instance(rng, s, y);
        CHECK(std::abs(auroc(s, y) - pair_auroc(s, y)) <= 1e-12);
    }
}

TEST_CASE("auroc is invariant to increasing transforms and flips under negation") {
    std::mt19937_64 rng(2);
    std::vector<double> s;
    std::vector<int> y;
    for (int inst = 0; inst < 200; ++inst) {
        random_instance(rng, s, y);
        std::vector<double> t(s.size()), neg(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            t[i] = std::exp(5 * s[i]) - 3;
            neg[i] = -s[i];
        }
        CHECK(auroc(t, y) == auroc(s, y));
        CHECK(std::abs(auroc(neg, y) - (1.0 - auroc(s, y))) <= 1e-12);
    }
}

TEST_CASE("ensemble averages member scores") {
    ScoredSet a{{0.2, 0.4, 0.9}, {0, 1, 1}, "test", {}};
    ScoredSet b{{0.6, 0.0, 0.5}, {0, 1, 1}, "test", {}};
    auto e = ensemble({a, b});
    CHECK(e.scores[0] == doctest::Approx(0.4));
    CHECK(e.scores[1] == doctest::Approx(0.2));
    CHECK(e.scores[2] == doctest::Approx(0.7));
    CHECK_THROWS_AS(ensemble({a}), Error);
    ScoredSet c{{0.1}, {1}, "test", {}};
    CHECK_THROWS_AS(ensemble({a, c}), Error);
}

TEST_CASE("contrast histogram") {
    std::vector<double> v{-1.0, -0.5, 0.0, 0.5, 1.0};
    std::vector<int> y{0, 0, 1, 1, 1};
    auto h = contrast_histogram(v, y);
    CHECK(h.size() == 100);
    std::size_t n0 = 0, n1 = 0;
    for (const auto& b : h) (b.label ? n1 : n0) += b.count;
    CHECK(n0 == 2);
    CHECK(n1 == 3);
    CHECK(h.front().lo == -1.0);
    CHECK(h[49].hi == 1.0);
    CHECK(h[99].count == 1);  // the maximum lands in the last bin

    auto flat = contrast_histogram({0.25, 0.25}, {0, 1}, 4);
    CHECK(flat.front().lo == -0.25);
    CHECK(flat.back().hi == 0.75);

    std::ostringstream out;
    write_histogram_csv(flat, out);
    CHECK(out.str().rfind("class,bin_lo,bin_hi,count\n", 0) == 0);

    auto m = class_means(v, y);
    CHECK(m[0] == -0.75);
    CHECK(m[1] == 0.5);
}

TEST_CASE("ablation sweeps") {
    CellSpec base;
    CHECK(ablation_cells(Axis::similarity, base).size() == 2);
    CHECK(ablation_cells(Axis::history, base).size() == 4);
    CHECK(ablation_cells(Axis::aggregation, base).size() == 4);
    CHECK(ablation_cells(Axis::user_mode, base).size() == 3);
    CHECK(ablation_cells(Axis::matrix, base).size() == 27);
    for (const auto& c : ablation_cells(Axis::history, base)) CHECK(c.mode == base.mode);
    for (auto a : {Axis::similarity, Axis::history, Axis::aggregation, Axis::user_mode, Axis::content,
                   Axis::classifier, Axis::matrix})
        CHECK(axis_from_string(to_string(a)) == a);
    CHECK_THROWS_AS(axis_from_string("bogus"), Error);
}

TEST_CASE("mean and sample standard deviation") {
    auto [m, s] = mean_stddev({1.0, 2.0, 3.0, 4.0});
    CHECK(m == 2.5);
    CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(mean_stddev({0.7}).second == 0.0);
}

TEST_CASE("report csv marks failed cells") {
    ExperimentReport r;
    CellResult ok;
    ok.aurocs = {0.8};
    ok.mean_auroc = 0.8;
    CellResult bad;
    bad.failed = true;
    bad.cell.similarity = false;
    r.cells = {ok, bad};
    std::ostringstream out;
    r.write_csv(out);
    std::istringstream in(out.str());
    std::string header, l1, l2;
    std::getline(in, header);
    std::getline(in, l1);
    std::getline(in, l2);
    CHECK(header == "content,user_mode,classifier,similarity,history_len,aggregation,seed_count,mean_auroc,stddev,seconds");
    CHECK(l1.find("0.800000") != std::string::npos);
    CHECK(l2.find("failed") != std::string::npos);
    CHECK(l2.find(",off,") != std::string::npos);
}
