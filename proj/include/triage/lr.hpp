#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "triage/common.hpp"
#include "triage/features.hpp"
#include "triage/loss.hpp"

namespace triage::learn {

struct LrConfig {
    double C = 1.0;  // inverse regularization strength
    PositiveWeight pos_weight{false, 1.0};
    double learning_rate = 0.01;
    int batch_size = 256;
    int max_epochs = 40;
    int patience = 5;
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
    static LrConfig from_json(const nlohmann::json& j);
};

struct LrModel {
    std::vector<double> w;
    double bias = 0.0;
    double C = 1.0;
    double pos_weight = 1.0;
    int epochs_run = 0;
    double best_val_auroc = 0.0;

    double logit(std::span<const std::uint32_t> idx, std::span<const double> val) const;
    double logit(const Dataset& data, std::size_t row) const { return logit(data.indices(row), data.values(row)); }
    std::vector<double> predict_proba(const Dataset& data, const ExecPolicy& exec = {}) const;

    nlohmann::json to_json() const;
    static LrModel from_json(const nlohmann::json& j);
};

/// Mean weighted log-loss over the batch plus ||w||^2 / (2 C N), and its
/// gradient (bias unregularized). Exposed for the finite-difference suite.
double lr_objective(const LrModel& m, const Dataset& data, std::span<const std::uint32_t> rows, std::size_t n_train,
                    std::vector<double>* grad_w, double* grad_b);

/// Adam over shuffled minibatches; when `val` has both classes, stops after
/// `patience` epochs without a validation AUROC gain and keeps the best weights.
LrModel train_lr(const Dataset& train, const Dataset* val, const LrConfig& cfg, const ExecPolicy& exec = {});

}  // namespace triage::learn
