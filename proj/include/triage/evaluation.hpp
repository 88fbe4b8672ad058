#pragma once

// Experiment matrix, ablation sweeps, ensembles and the contrast histogram.

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/metrics.hpp"
#include "triage/pipeline.hpp"

namespace triage::eval {

struct CellResult {
    CellSpec cell;
    std::vector<double> aurocs;  // test AUROC per seed
    std::vector<double> val_aurocs;
    double mean_auroc = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for one seed
    double seconds = 0.0;
    bool failed = false;
    std::string error;
    nlohmann::json tuned;  // best search config when a search ran

    int seed_count() const { return static_cast<int>(aurocs.size()); }
    nlohmann::json to_json() const;
};

struct ExperimentReport {
    std::vector<CellResult> cells;
    std::optional<double> bayes_auroc;  // synthetic fixtures only
    nlohmann::json extra = nlohmann::json::object();

    void write_csv(std::ostream& out) const;
    nlohmann::json to_json() const;
};

/// Mean and sample standard deviation.
std::pair<double, double> mean_stddev(const std::vector<double>& xs);

enum class Axis { similarity, history, aggregation, user_mode, content, classifier, matrix };

Axis axis_from_string(const std::string& s);
const char* to_string(Axis a);

/// Cells for one ablation sweep around `base`.
std::vector<CellSpec> ablation_cells(Axis axis, const CellSpec& base);

/// Trains and scores each cell on the test partition. Deep cells run
/// `cfg.deep_seeds` seeds (seed, seed+1, ...). A cell that throws is recorded
/// as failed and the run continues. `search_logs` receives one log per tuned
/// cell when `cfg.search_budget > 0`.
ExperimentReport run_matrix(const PreparedCorpus& pc, const std::vector<CellSpec>& cells, const ExperimentConfig& cfg,
                            Audit* audit, std::vector<learn::SearchResult>* search_logs = nullptr);

/// Per-seed probability averages of two or more cells; AUROC averaged over seeds.
struct EnsembleResult {
    std::vector<CellResult> members;
    std::vector<double> aurocs;
    double mean_auroc = 0.0;
    double stddev = 0.0;

    nlohmann::json to_json() const;
};

EnsembleResult run_ensemble(const PreparedCorpus& pc, const std::vector<CellSpec>& cells, const ExperimentConfig& cfg,
                            Audit* audit);

struct HistogramBin {
    int label = 0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

/// Equal-width bins over the pooled range, one series per class. A
/// zero-width range is widened to [v - 0.5, v + 0.5].
std::vector<HistogramBin> contrast_histogram(const std::vector<double>& contrast, const std::vector<int>& labels,
                                             int bins = 50);
void write_histogram_csv(const std::vector<HistogramBin>& h, std::ostream& out);

/// Mean contrast per class (index = label).
std::array<double, 2> class_means(const std::vector<double>& values, const std::vector<int>& labels);

}  // namespace triage::eval
