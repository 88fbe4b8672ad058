#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/common.hpp"
#include "triage/embeddings.hpp"
#include "triage/textproc.hpp"

namespace triage::repr {

enum class Content { tfidf, embed, cnn };

const char* to_string(Content c);
Content content_from_string(const std::string& s);

/// F(e): sparse for TFIDF, dense for Embed and CNN.
struct EmailVector {
    Content variant = Content::tfidf;
    SparseVector sparse;
    std::vector<double> dense;

    bool is_sparse() const { return variant == Content::tfidf; }
    std::size_t dim() const { return is_sparse() ? sparse.dim : dense.size(); }
    double norm() const;
};

double dot(const EmailVector& a, const EmailVector& b);

/// Raw-count tf times idf over the email's n-grams, L2 normalized when nonzero.
EmailVector tfidf_vector(const std::vector<std::string>& tokens, const text::Vocabulary& vocab);

/// Mean of the embedding rows of non-padding tokens; zero for all-padding input.
EmailVector embed_mean(std::span<const std::uint32_t> sequence, const embed::EmbeddingTable& table);

/// Convolution filters of several widths over the L x d embedded sequence.
/// Weights for width w are stored filter-major as [filter][offset * d + j].
struct CnnParams {
    std::vector<int> widths{1, 2, 3};
    std::vector<int> filters{256, 128, 64};
    int dim = 100;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    std::size_t output_dim() const;
    int max_width() const;
    std::size_t parameter_count() const;
    bool all_finite() const;
    bool same_shape(const CnnParams& o) const;

    /// Glorot-uniform weights, zero biases.
    static CnnParams init(std::vector<int> widths, std::vector<int> filters, int dim, std::uint64_t seed);
    /// Same shape, all zeros (gradient buffers).
    CnnParams zeros_like() const;

    // Flat views used by the optimizer.
    std::vector<std::span<double>> blocks();

    nlohmann::json to_json() const;
    static CnnParams from_json(const nlohmann::json& j);
};

/// Per-filter argmax (first maximizer) and the pooled pre-activation.
struct CnnCache {
    std::vector<std::vector<std::uint32_t>> argmax;
    std::vector<std::vector<double>> pooled_pre;
};

/// Valid convolution, relu, max-over-time pooling, concatenation over widths.
std::vector<double> cnn_forward(std::span<const std::uint32_t> sequence, const embed::EmbeddingTable& table,
                                const CnnParams& params, CnnCache* cache = nullptr);

/// Accumulates d(output . upstream)/d(params) into `grad`. Embeddings are static.
void cnn_backward(std::span<const double> upstream, std::span<const std::uint32_t> sequence,
                  const embed::EmbeddingTable& table, const CnnParams& params, const CnnCache& cache, CnnParams& grad);

}  // namespace triage::repr
