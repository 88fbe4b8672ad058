#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/common.hpp"

namespace triage::learn {

inline constexpr double kProbClamp = 1e-12;

/// -[pw * y * ln p + (1 - y) * ln(1 - p)], with p clamped away from {0, 1}.
double weighted_logloss(double p, int y, double pw);

/// d loss / d logit for p = sigmoid(logit): pw*y*(p-1) + (1-y)*p.
double weighted_logloss_grad(double p, int y, double pw);

/// Batch mean of the per-example loss.
double weighted_logloss_mean(std::span<const double> p, std::span<const int> y, double pw);

/// Positive-class weight: a constant or N_neg / N_pos ("balanced").
struct PositiveWeight {
    bool balanced = false;
    double value = 1.0;

    double resolve(std::size_t n_pos, std::size_t n_neg) const;
    nlohmann::json to_json() const;
    static PositiveWeight from_json(const nlohmann::json& j);
};

/// Adam with bias correction over a fixed list of parameter blocks.
class Adam {
public:
    explicit Adam(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads);

    long steps() const { return t_; }
    double learning_rate() const { return lr_; }
    bool moments_finite() const;

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace triage::learn
