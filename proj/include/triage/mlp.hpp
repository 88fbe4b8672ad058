#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "triage/common.hpp"
#include "triage/features.hpp"
#include "triage/loss.hpp"

namespace triage::learn {

/// One relu hidden layer and a logit. With hidden == 0 the head is linear.
/// w1 is column-major (input x hidden) so a sparse input touches whole columns.
struct MlpParams {
    std::size_t input = 0;
    std::size_t hidden = 128;
    std::vector<double> w1;
    std::vector<double> b1;
    std::vector<double> w2;  // hidden entries, or input entries when hidden == 0
    std::vector<double> b2{0.0};

    static MlpParams init(std::size_t input, std::size_t hidden, std::uint64_t seed);
    MlpParams zeros_like() const;
    std::vector<std::span<double>> blocks();
    bool all_finite() const;

    nlohmann::json to_json() const;
    static MlpParams from_json(const nlohmann::json& j);
};

struct MlpCache {
    std::vector<double> pre;
    std::vector<double> act;  // after relu and dropout
    std::vector<double> mask;
};

/// `keep` < 1 applies inverted dropout to the hidden units using `rng`.
double mlp_forward(const MlpParams& p, std::span<const std::uint32_t> idx, std::span<const double> val,
                   MlpCache* cache, double keep = 1.0, std::mt19937_64* rng = nullptr);
double mlp_forward_dense(const MlpParams& p, std::span<const double> x, MlpCache* cache, double keep = 1.0,
                         std::mt19937_64* rng = nullptr);

/// Accumulates dlogit * d(logit)/d(params) into `grad`.
void mlp_backward(const MlpParams& p, std::span<const std::uint32_t> idx, std::span<const double> val,
                  const MlpCache& cache, double dlogit, MlpParams& grad);
/// Dense variant; also accumulates into `dx` when non-empty.
void mlp_backward_dense(const MlpParams& p, std::span<const double> x, const MlpCache& cache, double dlogit,
                        MlpParams& grad, std::span<double> dx);

struct MlpConfig {
    std::size_t hidden = 128;
    int batch_size = 128;
    double learning_rate = 5e-4;
    double keep_prob = 0.5;
    PositiveWeight pos_weight{false, 10.0};
    int max_epochs = 30;
    int patience = 5;
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
    static MlpConfig from_json(const nlohmann::json& j);
};

struct MlpModel {
    MlpParams params;
    double pos_weight = 1.0;
    int epochs_run = 0;
    double best_val_auroc = 0.0;

    std::vector<double> predict_proba(const Dataset& data, const ExecPolicy& exec = {}) const;

    nlohmann::json to_json() const;
    static MlpModel from_json(const nlohmann::json& j);
};

/// Row MLP over assembled features, early-stopped on validation AUROC.
MlpModel train_mlp(const Dataset& train, const Dataset* val, const MlpConfig& cfg, const ExecPolicy& exec = {});

}  // namespace triage::learn
