#pragma once

// Jointly trained reply model: a shared email encoder (CNN or fixed mean
// embedding), attention aggregation of the user's history, similarity
// features and an MLP head, trained end to end on weighted log-loss.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "triage/common.hpp"
#include "triage/embeddings.hpp"
#include "triage/features.hpp"
#include "triage/loss.hpp"
#include "triage/mlp.hpp"
#include "triage/represent.hpp"
#include "triage/userrep.hpp"

namespace triage::learn {

struct NetworkConfig {
    std::vector<int> widths{1, 2, 3};
    std::vector<int> filters{256, 128, 64};
    std::size_t hidden = 128;
    int batch_size = 128;
    double learning_rate = 5e-4;
    double keep_prob = 0.5;  // dropout keep probability on encoded emails
    PositiveWeight pos_weight{false, 10.0};
    int max_epochs = 10;
    int patience = 5;
    std::size_t concat_hidden = 32;
    // Consecutive same-recipient examples kept together in a batch so that
    // overlapping histories are encoded once.
    int chunk = 16;

    nlohmann::json to_json() const;
    static NetworkConfig from_json(const nlohmann::json& j);
};

/// Email store the network reads from. With a CNN encoder `sequences` holds
/// token ids; otherwise `fixed` holds precomputed encodings.
struct EncoderBank {
    const std::vector<std::vector<std::uint32_t>>* sequences = nullptr;
    const embed::EmbeddingTable* table = nullptr;
    const std::vector<std::vector<double>>* fixed = nullptr;

    std::size_t size() const { return sequences ? sequences->size() : (fixed ? fixed->size() : 0); }
};

/// One (email, recipient) prediction: ids index the bank.
struct NetExample {
    std::uint32_t email = 0;
    std::vector<std::uint32_t> primary;   // most recent first
    std::vector<std::uint32_t> negative;  // PosNeg only
    double reply_rate = 0.0;
    int label = 0;
};

struct NetworkModel {
    FeatureLayout layout;
    bool cnn_encoder = true;
    repr::CnnParams cnn;
    user::AttentionParams attention;
    MlpParams head;
    double pos_weight = 1.0;
    int epochs_run = 0;
    double best_val_auroc = 0.0;

    static NetworkModel init(const FeatureLayout& layout, bool cnn_encoder, int embed_dim, user::AggregationKind kind,
                             int history_length, double gamma, const NetworkConfig& cfg, std::uint64_t seed);
    NetworkModel zeros_like() const;
    // Trainable blocks: CNN (when used), attention, head.
    std::vector<std::span<double>> blocks();
    bool all_finite() const;

    nlohmann::json to_json() const;
    static NetworkModel from_json(const nlohmann::json& j);
};

/// Per-example forward results for downstream feature extraction.
struct NetForward {
    std::vector<double> input;  // assembled dense row
    double logit = 0.0;
    user::SimilarityFeatures sims;
};

/// Mean weighted log-loss over `batch`; accumulates parameter gradients into
/// `grad` when given. `keep` < 1 enables dropout drawn from `rng`.
double network_loss(const NetworkModel& m, const EncoderBank& bank, std::span<const NetExample> batch, NetworkModel* grad,
                    double keep = 1.0, std::mt19937_64* rng = nullptr, const ExecPolicy& exec = {});

/// Encodes every bank entry once (no dropout).
std::vector<std::vector<double>> encode_all(const NetworkModel& m, const EncoderBank& bank, const ExecPolicy& exec = {});

/// Forward pass from precomputed encodings.
NetForward network_forward(const NetworkModel& m, const std::vector<std::vector<double>>& enc, const NetExample& ex);

std::vector<double> network_predict(const NetworkModel& m, const EncoderBank& bank, std::span<const NetExample> examples,
                                    const ExecPolicy& exec = {});

/// Adam over recipient-chunked minibatches with validation early stopping.
NetworkModel train_network(NetworkModel init, const EncoderBank& bank, std::span<const NetExample> train,
                           std::span<const NetExample> val, const NetworkConfig& cfg, std::uint64_t seed,
                           const ExecPolicy& exec = {});

}  // namespace triage::learn
