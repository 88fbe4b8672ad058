// Serial reference kernels against their OpenMP versions.
// usage: bench_kernels [threads] [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

#include <omp.h>

#include "triage/kernels.hpp"

using namespace triage;
using namespace triage::kernels;

namespace {

double best_ms(int repeats, const std::function<void()>& f) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void row(const char* name, double serial, double omp, int threads) {
    std::printf("%-16s serial %9.2f ms   omp(%d) %9.2f ms   speedup %.2fx\n", name, serial, threads, omp,
                serial / omp);
}

}  // namespace

int main(int argc, char** argv) {
    const int threads = argc > 1 ? std::atoi(argv[1]) : omp_get_max_threads();
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 1);

    // GBDT histogram: 200k rows, ~40 stored bins each out of 50k.
    {
        BinnedRows data;
        const std::uint32_t total = 50000;
        for (int r = 0; r < 200000; ++r) {
            for (std::uint32_t b = static_cast<std::uint32_t>(rng() % 1000); b < total;
                 b += 1 + static_cast<std::uint32_t>(rng() % 2500))
                data.bins.push_back(b);
            data.row_ptr.push_back(data.bins.size());
        }
        std::vector<double> g(200000), h(200000);
        for (auto& x : g) x = n(rng);
        for (auto& x : h) x = std::abs(n(rng));
        std::vector<std::uint32_t> rows(200000);
        for (std::uint32_t i = 0; i < rows.size(); ++i) rows[i] = i;
        std::vector<HistBin> hist(total);
        const double s = best_ms(repeats, [&] {
            std::fill(hist.begin(), hist.end(), HistBin{});
            build_histogram_serial(data, rows, g, h, hist);
        });
        const double o = best_ms(repeats, [&] {
            std::fill(hist.begin(), hist.end(), HistBin{});
            build_histogram_omp(data, rows, g, h, hist, threads);
        });
        row("histogram", s, o, threads);
    }

    // CNN encoding: 300 sequences of 150 tokens, d = 100, filters 256/128/64.
    {
        embed::EmbeddingTable table(5000, 100);
        for (std::size_t r = 1; r < 5000; ++r)
            for (auto& x : table.row(r)) x = n(rng) * 0.1;
        auto params = repr::CnnParams::init({1, 2, 3}, {256, 128, 64}, 100, 3);
        std::vector<std::vector<std::uint32_t>> store(300, std::vector<std::uint32_t>(150));
        for (auto& s : store)
            for (auto& x : s) x = static_cast<std::uint32_t>(rng() % 5000);
        std::vector<std::span<const std::uint32_t>> seqs(store.begin(), store.end());
        const double s = best_ms(std::max(1, repeats / 2), [&] { cnn_encode_serial(seqs, table, params, nullptr); });
        const double o =
            best_ms(std::max(1, repeats / 2), [&] { cnn_encode_omp(seqs, table, params, nullptr, threads); });
        row("cnn_encode", s, o, threads);
    }

    // Sparse linear scores: 500k rows, 60 nonzeros each, width 30k.
    {
        std::vector<std::size_t> row_ptr{0};
        std::vector<std::uint32_t> idx;
        std::vector<double> val;
        for (int r = 0; r < 500000; ++r) {
            for (int k = 0; k < 60; ++k) {
                idx.push_back(static_cast<std::uint32_t>(rng() % 30000));
                val.push_back(n(rng));
            }
            row_ptr.push_back(idx.size());
        }
        std::vector<double> w(30000), out(500000);
        for (auto& x : w) x = n(rng);
        const double s = best_ms(repeats, [&] { sparse_scores_serial(row_ptr, idx, val, w, 0.1, out); });
        const double o = best_ms(repeats, [&] { sparse_scores_omp(row_ptr, idx, val, w, 0.1, out, threads); });
        row("sparse_scores", s, o, threads);
    }
    return 0;
}
