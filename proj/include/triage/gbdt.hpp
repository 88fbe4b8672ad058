#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "triage/common.hpp"
#include "triage/features.hpp"
#include "triage/loss.hpp"

namespace triage::learn {

struct GbdtConfig {
    int iterations = 500;
    int max_depth = 5;
    double learning_rate = 0.1;
    PositiveWeight pos_weight{false, 5.0};
    int max_bin = 255;
    double lambda = 1.0;
    int min_data_in_leaf = 20;
    double min_sum_hessian = 1e-3;
    // Cap on cached leaf histograms; uncached parents force a direct rebuild
    // of both children instead of the subtraction trick.
    std::size_t histogram_budget_bytes = std::size_t{768} << 20;

    // 2^depth - 2, but a depth-1 stump still gets its two leaves.
    int max_leaves() const;

    nlohmann::json to_json() const;
    static GbdtConfig from_json(const nlohmann::json& j);
};

/// Per-feature quantile bins. A value x lands in the first bin whose upper
/// bound is >= x; upper bounds are observed values, so the assignment depends
/// only on ranks.
struct FeatureBins {
    std::vector<double> upper;
    int zero_bin = -1;  // bin holding implicit zeros, -1 when the column is fully stored

    std::size_t size() const { return upper.size(); }
    std::uint32_t bin_of(double x) const;
};

std::vector<FeatureBins> compute_bins(const Dataset& data, int max_bin, int threads = 1);

struct TreeNode {
    int feature = -1;  // -1 for a leaf
    std::uint32_t bin = 0;
    double threshold = 0.0;  // go left when x <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;
    double gain = 0.0;
    int depth = 0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict(const Dataset& data, std::size_t row) const;
    double predict(std::span<const std::uint32_t> idx, std::span<const double> val) const;
    int leaves() const;
    int depth() const;
};

/// One chosen split, in the order the leaf-wise grower applied them.
struct SplitRecord {
    int leaf = 0;
    int feature = -1;
    std::uint32_t bin = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

class GbdtModel {
public:
    double prior = 0.0;
    double pos_weight = 1.0;
    std::vector<Tree> trees;
    std::size_t width = 0;
    // Set when the first tree found no split with positive gain.
    bool prior_only = false;
    std::vector<double> gain_importance;
    std::vector<SplitRecord> first_tree_splits;

    double logit(const Dataset& data, std::size_t row) const;
    double logit(std::span<const std::uint32_t> idx, std::span<const double> val) const;
    double predict_proba(const Dataset& data, std::size_t row) const { return sigmoid(logit(data, row)); }
    std::vector<double> predict_proba(const Dataset& data, const ExecPolicy& exec = {}) const;

    nlohmann::json to_json() const;
    static GbdtModel from_json(const nlohmann::json& j);
};

GbdtModel train_gbdt(const Dataset& train, const GbdtConfig& cfg, const ExecPolicy& exec = {});

}  // namespace triage::learn
