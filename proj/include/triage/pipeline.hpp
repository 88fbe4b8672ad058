#pragma once

// End-to-end wiring: text artifacts fitted on train+validation, per-partition
// examples with causal histories, cell training, checkpoints and scoring.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/audit.hpp"
#include "triage/corpus.hpp"
#include "triage/embeddings.hpp"
#include "triage/features.hpp"
#include "triage/gbdt.hpp"
#include "triage/lr.hpp"
#include "triage/metrics.hpp"
#include "triage/mlp.hpp"
#include "triage/network.hpp"
#include "triage/represent.hpp"
#include "triage/search.hpp"
#include "triage/textproc.hpp"
#include "triage/userrep.hpp"

namespace triage {

enum class Classifier { lr, mlp, gbdt };

const char* to_string(Classifier c);
Classifier classifier_from_string(const std::string& s);

/// One cell of the experiment matrix.
struct CellSpec {
    repr::Content content = repr::Content::tfidf;
    user::HistoryMode mode = user::HistoryMode::posneg;
    Classifier classifier = Classifier::gbdt;
    bool similarity = true;
    int history_len = 10;
    user::AggregationKind aggregation = user::AggregationKind::uniform;

    // Cells whose email encoder or attention is trained jointly with an MLP head.
    bool uses_network() const;
    // Cells whose result depends on the training seed.
    bool is_deep() const { return uses_network() || classifier == Classifier::mlp; }
    std::string label() const;

    nlohmann::json to_json() const;
    static CellSpec from_json(const nlohmann::json& j, CellSpec base);
    static CellSpec from_json(const nlohmann::json& j) { return from_json(j, CellSpec{}); }
};

struct TextConfig {
    text::CleanOptions clean;
    std::string blocklist_path;
    text::VocabularyOptions vocab;
    std::size_t seq_len = 150;
    std::size_t unigram_min_count = 1;
    std::size_t unigram_max = 30000;
    embed::SkipGramConfig skipgram;
    std::string embeddings_path;  // pre-trained word2vec text file; trained when empty

    nlohmann::json to_json() const;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    ExecPolicy exec;
    std::optional<corpus::SplitSpec> split;
    TextConfig text;
    CellSpec cell;
    learn::LrConfig lr;
    learn::MlpConfig mlp;
    learn::GbdtConfig gbdt;
    learn::NetworkConfig network;
    double gamma = 1.0;
    int deep_seeds = 5;
    int search_budget = 0;
    int histogram_bins = 50;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Everything fitted on train+validation text plus the training-window
/// reply rates. Stored inside checkpoints.
struct TextArtifacts {
    text::Vocabulary vocab;
    text::UnigramTable unigrams;
    std::optional<embed::EmbeddingTable> embeddings;
    std::map<std::string, double> reply_rate;
    std::size_t seq_len = 150;
    int max_order = 3;
    bool include_subject = true;
    std::vector<std::string> blocklist;  // sorted

    text::CleanOptions clean_options() const;
    double rate(const std::string& recipient) const;

    nlohmann::json to_json() const;
    static TextArtifacts from_json(const nlohmann::json& j);
};

/// Training-window reply fraction per recipient; replies after train_end do
/// not count.
std::map<std::string, double> reply_rates(const corpus::MailboxIndex& index, const corpus::Splits& splits,
                                          const corpus::SplitSpec& spec, Audit* audit);

/// Per-email representations for one mailbox under fixed text artifacts.
struct EmailBank {
    std::vector<std::vector<std::string>> tokens;
    std::vector<repr::EmailVector> tfidf;
    std::vector<repr::EmailVector> embed;
    std::vector<std::vector<double>> embed_dense;
    std::vector<std::vector<std::uint32_t>> sequences;

    std::size_t size() const { return tokens.size(); }
    /// Appends one email; vectors are computed for whichever variants are enabled.
    void add(const std::string& subject, const std::string& body, const TextArtifacts& art);
};

class PreparedCorpus {
public:
    corpus::IngestResult data;
    corpus::SplitSpec spec;
    corpus::Splits splits;
    TextArtifacts art;
    EmailBank bank;

    /// Fits vocabulary, unigram table, embeddings (when `need_embeddings`) and
    /// reply rates without reading test documents.
    static PreparedCorpus fit(corpus::IngestResult data, const corpus::SplitSpec& spec, const TextConfig& cfg,
                              bool need_embeddings, std::uint64_t seed, const ExecPolicy& exec, Audit* audit);
    /// Reuses artifacts from a checkpoint.
    static PreparedCorpus with_artifacts(corpus::IngestResult data, const corpus::SplitSpec& spec, TextArtifacts art);

    const corpus::MailboxIndex& index() const { return data.index; }
};

/// Examples for one partition, ordered by (recipient, timestamp, email id).
struct ExampleSet {
    std::vector<learn::NetExample> examples;
    std::vector<std::string> ids;
    std::vector<int> labels() const;
};

ExampleSet build_examples(const PreparedCorpus& pc, corpus::Partition part, const user::HistoryConfig& hcfg,
                          Audit* audit);

/// Assembled rows for the fixed-representation classifiers (TFIDF or Embed
/// content, parameter-free aggregation). `contrast` receives the contrast
/// value per row for PosNeg cells.
learn::Dataset build_dataset(const EmailBank& bank, const ExampleSet& set, const CellSpec& cell,
                             const learn::FeatureLayout& layout, const user::AttentionParams& attention,
                             std::vector<double>* contrast, const ExecPolicy& exec);

learn::FeatureLayout layout_for(const CellSpec& cell, const TextArtifacts& art, const learn::NetworkConfig& net);

/// A trained cell, ready to score or checkpoint.
struct TrainedCell {
    CellSpec cell;
    std::uint64_t seed = 0;
    learn::FeatureLayout layout;
    user::AttentionParams attention;  // fixed-feature path
    std::optional<learn::NetworkModel> network;
    std::optional<learn::LrModel> lr;
    std::optional<learn::MlpModel> mlp;
    std::optional<learn::GbdtModel> gbdt;
    double val_auroc = 0.0;
    nlohmann::json effective_config;

    std::vector<double> predict(const EmailBank& bank, const ExampleSet& set, const ExecPolicy& exec,
                                std::vector<double>* contrast = nullptr) const;
};

TrainedCell train_cell(const PreparedCorpus& pc, const CellSpec& cell, const ExperimentConfig& cfg, std::uint64_t seed,
                       Audit* audit, const ExampleSet* train = nullptr, const ExampleSet* val = nullptr);

/// Scores any trained cell, including network-based ones. `contrast` receives
/// the contrast similarity per example.
std::vector<double> score_cell(const TrainedCell& tc, const PreparedCorpus& pc, const ExampleSet& set,
                               const ExecPolicy& exec, std::vector<double>* contrast = nullptr);

/// Random search over the classifier's grid, scored on validation AUROC.
/// Returns the best config applied to `cfg` and the search log.
std::pair<ExperimentConfig, learn::SearchResult> tune_cell(const PreparedCorpus& pc, const CellSpec& cell,
                                                           const ExperimentConfig& cfg, std::size_t budget,
                                                           Audit* audit);

/// Applies one search-grid config to the matching sub-config.
ExperimentConfig apply_overrides(ExperimentConfig cfg, const CellSpec& cell, const nlohmann::json& overrides);

struct Checkpoint {
    TrainedCell model;
    TextArtifacts art;
    corpus::SplitSpec split;
    ExperimentConfig config;

    nlohmann::json to_json() const;
    static Checkpoint from_json(const nlohmann::json& j);
};

/// Per-(message, recipient) probabilities for new root messages, using the
/// mailbox `history` for user representations.
struct Prediction {
    std::string email_id;
    std::string recipient;
    double probability = 0.0;
};

std::vector<Prediction> predict_messages(const Checkpoint& ck, const corpus::IngestResult& history,
                                         const std::vector<corpus::RawMessage>& messages, const ExecPolicy& exec);

}  // namespace triage
