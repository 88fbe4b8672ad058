#include <random>

#include <doctest.h>

#include "testing.hpp"
#include "triage/kernels.hpp"

using namespace triage;
using namespace triage::kernels;

TEST_CASE("histogram: serial and parallel agree") {
    std::mt19937_64 rng(1);
    BinnedRows data;
    const std::uint32_t total = 64;
    for (int r = 0; r < 500; ++r) {
        for (std::uint32_t b = 0; b < total; b += 1 + static_cast<std::uint32_t>(rng() % 9)) data.bins.push_back(b);
        data.row_ptr.push_back(data.bins.size());
    }
    const auto g = testing::randn(500, rng), h = testing::randn(500, rng);
    std::vector<std::uint32_t> rows;
    for (std::uint32_t r = 0; r < 500; r += 2) rows.push_back(r);
    for (int threads : {1, 2, 4}) {
        std::vector<HistBin> a(total), b(total);
        build_histogram_serial(data, rows, g, h, a);
        build_histogram_omp(data, rows, g, h, b, threads);
        for (std::uint32_t k = 0; k < total; ++k) {
            CHECK(a[k].n == b[k].n);
            CHECK(a[k].g == doctest::Approx(b[k].g).epsilon(1e-12));
            CHECK(a[k].h == doctest::Approx(b[k].h).epsilon(1e-12));
        }
    }
}

TEST_CASE("cnn encoding: serial and parallel are bitwise identical") {
    std::mt19937_64 rng(2);
    embed::EmbeddingTable t(20, 6);
    for (std::size_t r = 1; r < 20; ++r)
        for (auto& x : t.row(r)) x = std::normal_distribution<double>(0, 1)(rng);
    auto p = repr::CnnParams::init({1, 2, 3}, {4, 3, 2}, 6, 5);
    std::vector<std::vector<std::uint32_t>> store(40, std::vector<std::uint32_t>(12));
    for (auto& s : store)
        for (auto& x : s) x = static_cast<std::uint32_t>(rng() % 20);
    std::vector<std::span<const std::uint32_t>> seqs(store.begin(), store.end());
    std::vector<repr::CnnCache> ca, cb;
    const auto a = cnn_encode_serial(seqs, t, p, &ca);
    for (int threads : {1, 3}) {
        const auto b = cnn_encode_omp(seqs, t, p, &cb, threads);
        CHECK(a == b);
        REQUIRE(ca.size() == cb.size());
        for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca[i].argmax == cb[i].argmax);
    }
}

TEST_CASE("sparse scores: serial and parallel are bitwise identical") {
    std::mt19937_64 rng(3);
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
    for (int r = 0; r < 300; ++r) {
        for (std::uint32_t c = 0; c < 50; c += 1 + static_cast<std::uint32_t>(rng() % 7)) {
            idx.push_back(c);
            val.push_back(std::normal_distribution<double>(0, 1)(rng));
        }
        row_ptr.push_back(idx.size());
    }
    const auto w = testing::randn(50, rng);
    std::vector<double> a(300), b(300);
    sparse_scores_serial(row_ptr, idx, val, w, 0.25, a);
    sparse_scores_omp(row_ptr, idx, val, w, 0.25, b, 4);
    CHECK(a == b);
}
