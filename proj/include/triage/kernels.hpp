#pragma once

// Data-parallel inner loops. Each kernel has a serial reference (`*_serial`)
// and an OpenMP version (`*_omp`); tests compare the two and bench/ times them.

#include <cstdint>
#include <span>
#include <vector>

#include "triage/embeddings.hpp"
#include "triage/represent.hpp"

namespace triage::kernels {

struct HistBin {
    double g = 0.0;
    double h = 0.0;
    double n = 0.0;
};

/// Binned rows in CSR form: entries are global bin ids.
struct BinnedRows {
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::uint32_t> bins;

    std::span<const std::uint32_t> row(std::size_t r) const {
        return {bins.data() + row_ptr[r], row_ptr[r + 1] - row_ptr[r]};
    }
};

/// hist[bin] += (g, h, 1) for every stored entry of the listed rows.
void build_histogram_serial(const BinnedRows& data, std::span<const std::uint32_t> rows, std::span<const double> grad,
                            std::span<const double> hess, std::span<HistBin> hist);
/// Per-thread partial histograms merged in thread order. Summation order
/// differs from the serial kernel, so results agree to rounding only.
void build_histogram_omp(const BinnedRows& data, std::span<const std::uint32_t> rows, std::span<const double> grad,
                         std::span<const double> hess, std::span<HistBin> hist, int threads);

/// CNN encodings for a batch of sequences; bitwise identical across kernels.
std::vector<std::vector<double>> cnn_encode_serial(const std::vector<std::span<const std::uint32_t>>& seqs,
                                                   const embed::EmbeddingTable& table, const repr::CnnParams& params,
                                                   std::vector<repr::CnnCache>* caches);
std::vector<std::vector<double>> cnn_encode_omp(const std::vector<std::span<const std::uint32_t>>& seqs,
                                                const embed::EmbeddingTable& table, const repr::CnnParams& params,
                                                std::vector<repr::CnnCache>* caches, int threads);

/// out[r] = bias + w . row_r for CSR rows.
void sparse_scores_serial(std::span<const std::size_t> row_ptr, std::span<const std::uint32_t> idx,
                          std::span<const double> val, std::span<const double> w, double bias, std::span<double> out);
void sparse_scores_omp(std::span<const std::size_t> row_ptr, std::span<const std::uint32_t> idx,
                       std::span<const double> val, std::span<const double> w, double bias, std::span<double> out,
                       int threads);

}  // namespace triage::kernels
