#pragma once

#include <span>
#include <string>
#include <vector>

#include "triage/common.hpp"

namespace triage::eval {

/// Parallel (score, label) lists for one partition.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;
    std::string partition;
    std::vector<std::string> ids;

    void validate() const;
};

/// Mann-Whitney AUROC with average ranks for ties. Throws a data error when
/// either class is absent.
double auroc(std::span<const double> scores, std::span<const int> labels);
inline double auroc(const ScoredSet& s) { return auroc(s.scores, s.labels); }

/// Per-example arithmetic mean of the member probabilities.
ScoredSet ensemble(const std::vector<ScoredSet>& members);

}  // namespace triage::eval
