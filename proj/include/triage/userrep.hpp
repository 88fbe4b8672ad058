#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/audit.hpp"
#include "triage/corpus.hpp"
#include "triage/represent.hpp"

namespace triage::user {

enum class HistoryMode { received, pos, posneg };

const char* to_string(HistoryMode m);
HistoryMode mode_from_string(const std::string& s);

struct HistoryConfig {
    HistoryMode mode = HistoryMode::posneg;
    int length = 10;  // h

    void validate() const;
};

/// Email indices, most recent first. `negative` is used by PosNeg only.
struct History {
    std::vector<std::size_t> primary;
    std::vector<std::size_t> negative;
};

/// Up to h emails received strictly before `t`. Pos membership requires the
/// reply itself to predate `t`.
History select_history(const corpus::MailboxIndex& index, const std::string& recipient, Timestamp t,
                       const HistoryConfig& cfg, Audit* audit = nullptr);

enum class AggregationKind { uniform, learned_global, dot, concat };

const char* to_string(AggregationKind k);
AggregationKind aggregation_from_string(const std::string& s);

struct AttentionParams {
    AggregationKind kind = AggregationKind::uniform;
    double gamma = 1.0;
    // learned_global: one logit per recency rank, shared by all users.
    std::vector<double> global_logits;
    // concat: score = v . relu(W [x; y]); W is hidden x (2 * dim), row-major.
    std::size_t hidden = 0;
    std::size_t dim = 0;
    std::vector<double> v;
    std::vector<double> W;

    static AttentionParams make(AggregationKind kind, std::size_t history_length, std::size_t dim,
                                std::size_t concat_hidden, double gamma, std::uint64_t seed);
    AttentionParams zeros_like() const;
    bool all_finite() const;
    std::vector<std::span<double>> blocks();

    nlohmann::json to_json() const;
    static AttentionParams from_json(const nlohmann::json& j);
};

/// Aggregation weights alpha_1..alpha_m for the given history.
std::vector<double> attention_weights(const repr::EmailVector& incoming,
                                      const std::vector<const repr::EmailVector*>& history,
                                      const AttentionParams& params);

/// sum_t alpha_t F(e_t); zero vector when the history is empty.
repr::EmailVector aggregate(const repr::EmailVector& incoming, const std::vector<const repr::EmailVector*>& history,
                            const AttentionParams& params, std::size_t dim, std::vector<double>* weights_out = nullptr);

// Dense path with gradients, used by the jointly trained network.
struct AttentionCache {
    std::vector<double> scores;   // raw scores before gamma
    std::vector<double> weights;  // alpha
    std::vector<std::vector<double>> concat_pre;  // per element hidden pre-activations
};

std::vector<double> aggregate_dense(std::span<const double> incoming, const std::vector<std::span<const double>>& history,
                                    const AttentionParams& params, AttentionCache* cache = nullptr);

/// Accumulates gradients given dL/dG into d_incoming, d_history[t] and grad.
void aggregate_dense_backward(std::span<const double> d_output, std::span<const double> incoming,
                              const std::vector<std::span<const double>>& history, const AttentionParams& params,
                              const AttentionCache& cache, std::span<double> d_incoming,
                              std::vector<std::span<double>>& d_history, AttentionParams& grad);

struct UserRepresentation {
    HistoryMode mode = HistoryMode::posneg;
    repr::EmailVector primary;   // G (Received/Pos) or G_pos
    repr::EmailVector negative;  // G_neg for PosNeg
    std::size_t primary_count = 0;
    std::size_t negative_count = 0;
    bool primary_missing() const { return primary_count == 0; }
    bool negative_missing() const { return negative_count == 0; }
};

struct SimilarityFeatures {
    double sim_pos = 0.0;
    double sim_neg = 0.0;
    double contrast = 0.0;
    bool paired = false;

    // Flattened in layout order: 1 value, or (sim_pos, sim_neg, contrast).
    std::vector<double> values() const;
};

SimilarityFeatures similarity(const repr::EmailVector& incoming, const UserRepresentation& user);

}  // namespace triage::user
