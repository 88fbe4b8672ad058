#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/common.hpp"
#include "triage/textproc.hpp"

namespace triage::embed {

/// Dense row-major table indexed by unigram id. Row 0 (padding) is all-zero.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool all_finite() const;
    bool operator==(const EmbeddingTable& o) const = default;

    nlohmann::json to_json() const;
    static EmbeddingTable from_json(const nlohmann::json& j);

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

struct SkipGramConfig {
    int window = 5;
    int dimension = 100;
    int negatives = 5;
    int epochs = 5;
    double learning_rate = 0.025;
    std::uint64_t seed = 1;
    // When false the out-of-table row stays zero.
    bool learn_unk = false;

    void validate() const;
    nlohmann::json to_json() const;
    static SkipGramConfig from_json(const nlohmann::json& j, SkipGramConfig base);
    static SkipGramConfig from_json(const nlohmann::json& j) { return from_json(j, SkipGramConfig{}); }
};

/// Negative-sampling objective for one (center, context, negatives) triple:
///   -ln s(u_c . v) - sum_k ln s(-u_k . v)
double sgns_loss(std::span<const double> center, std::span<const double> context,
                 const std::vector<std::span<const double>>& negatives);

struct SgnsGradient {
    std::vector<double> center;
    std::vector<double> context;
    std::vector<std::vector<double>> negatives;
};

SgnsGradient sgns_gradient(std::span<const double> center, std::span<const double> context,
                           const std::vector<std::span<const double>>& negatives);

/// Initial input vectors: uniform in (-0.5/d, 0.5/d), padding zero, unk zero
/// unless learned.
EmbeddingTable initial_table(const text::UnigramTable& table, const SkipGramConfig& cfg);

/// Skip-gram with negative sampling over token-id documents. Negatives are
/// drawn from the unigram distribution raised to 0.75. Deterministic for a
/// fixed seed in single-thread mode; multi-thread mode is hogwild.
EmbeddingTable train_skipgram(const std::vector<std::vector<std::uint32_t>>& docs, const text::UnigramTable& table,
                              const SkipGramConfig& cfg, const ExecPolicy& exec = {});

struct LoadReport {
    std::size_t vectors_read = 0;
    std::size_t matched = 0;
    std::size_t unmatched_tokens = 0;  // file tokens absent from the table
    std::size_t missing_words = 0;     // table words absent from the file
    std::size_t malformed = 0;
};

struct LoadOptions {
    bool random_unmatched = false;
    std::uint64_t seed = 1;
};

inline constexpr const char* kUnkToken = "<unk>";

/// word2vec text format: header "count dim", then "token v1 ... vd".
EmbeddingTable load_embeddings(const std::string& path, const text::UnigramTable& table, LoadReport& report,
                               const LoadOptions& opts = {});
void save_embeddings(const std::string& path, const EmbeddingTable& emb, const text::UnigramTable& table);

}  // namespace triage::embed
