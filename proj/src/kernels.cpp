#include "triage/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace triage::kernels {

void build_histogram_serial(const BinnedRows& data, std::span<const std::uint32_t> rows, std::span<const double> grad,
                            std::span<const double> hess, std::span<HistBin> hist) {
    for (auto r : rows) {
        const double g = grad[r], h = hess[r];
        for (auto b : data.row(r)) {
            auto& e = hist[b];
            e.g += g;
            e.h += h;
            e.n += 1.0;
        }
    }
}

void build_histogram_omp(const BinnedRows& data, std::span<const std::uint32_t> rows, std::span<const double> grad,
                         std::span<const double> hess, std::span<HistBin> hist, int threads) {
    if (threads <= 1) {
        build_histogram_serial(data, rows, grad, hess, hist);
        return;
    }
    std::vector<std::vector<HistBin>> partial(static_cast<std::size_t>(threads));
    const long n = static_cast<long>(rows.size());
#pragma omp parallel num_threads(threads)
    {
#ifdef _OPENMP
        const auto tid = static_cast<std::size_t>(omp_get_thread_num());
#else
        const std::size_t tid = 0;
#endif
        auto& local = partial[tid];
        local.assign(hist.size(), HistBin{});
#pragma omp for schedule(static)
        for (long i = 0; i < n; ++i) {
            const auto r = rows[static_cast<std::size_t>(i)];
            const double g = grad[r], h = hess[r];
            for (auto b : data.row(r)) {
                auto& e = local[b];
                e.g += g;
                e.h += h;
                e.n += 1.0;
            }
        }
    }
    const long nb = static_cast<long>(hist.size());
#pragma omp parallel for num_threads(threads) schedule(static)
    for (long b = 0; b < nb; ++b) {
        auto& e = hist[static_cast<std::size_t>(b)];
        for (const auto& part : partial) {
            e.g += part[static_cast<std::size_t>(b)].g;
            e.h += part[static_cast<std::size_t>(b)].h;
            e.n += part[static_cast<std::size_t>(b)].n;
        }
    }
}

std::vector<std::vector<double>> cnn_encode_serial(const std::vector<std::span<const std::uint32_t>>& seqs,
                                                   const embed::EmbeddingTable& table, const repr::CnnParams& params,
                                                   std::vector<repr::CnnCache>* caches) {
    std::vector<std::vector<double>> out(seqs.size());
    if (caches) caches->assign(seqs.size(), {});
    for (std::size_t i = 0; i < seqs.size(); ++i)
        out[i] = repr::cnn_forward(seqs[i], table, params, caches ? &(*caches)[i] : nullptr);
    return out;
}

std::vector<std::vector<double>> cnn_encode_omp(const std::vector<std::span<const std::uint32_t>>& seqs,
                                                const embed::EmbeddingTable& table, const repr::CnnParams& params,
                                                std::vector<repr::CnnCache>* caches, int threads) {
    if (!params.all_finite()) throw_training("cnn: non-finite parameter");
    std::vector<std::vector<double>> out(seqs.size());
    if (caches) caches->assign(seqs.size(), {});
    const long n = static_cast<long>(seqs.size());
#pragma omp parallel for num_threads(threads) schedule(dynamic, 4)
    for (long i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        out[k] = repr::cnn_forward(seqs[k], table, params, caches ? &(*caches)[k] : nullptr);
    }
    return out;
}

void sparse_scores_serial(std::span<const std::size_t> row_ptr, std::span<const std::uint32_t> idx,
                          std::span<const double> val, std::span<const double> w, double bias, std::span<double> out) {
    for (std::size_t r = 0; r + 1 < row_ptr.size(); ++r) {
        double s = bias;
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += w[idx[k]] * val[k];
        out[r] = s;
    }
}

void sparse_scores_omp(std::span<const std::size_t> row_ptr, std::span<const std::uint32_t> idx,
                       std::span<const double> val, std::span<const double> w, double bias, std::span<double> out,
                       int threads) {
    const long n = static_cast<long>(row_ptr.size()) - 1;
#pragma omp parallel for num_threads(threads) schedule(static)
    for (long r = 0; r < n; ++r) {
        const auto rr = static_cast<std::size_t>(r);
        double s = bias;
        for (std::size_t k = row_ptr[rr]; k < row_ptr[rr + 1]; ++k) s += w[idx[k]] * val[k];
        out[rr] = s;
    }
}

}  // namespace triage::kernels
