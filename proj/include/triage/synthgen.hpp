#pragma once

// Synthetic mailboxes with a known reply process. Each root message draws a
// topic mixture theta; recipient u replies with probability
//   sigmoid(w_match * <theta, a_u> + bias)
// where a_u is the user's hidden topic affinity.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/corpus.hpp"

namespace triage::synth {

struct GeneratorConfig {
    int n_users = 50;
    int n_topics = 10;
    int vocab_size = 1000;
    int background_words = 150;
    int emails_per_user = 400;  // expected received root emails per user
    int span_days = 365;
    Timestamp start = 959817600;  // 2000-06-01T00:00:00Z
    double user_topic_concentration = 0.1;  // Dirichlet alpha of each user's topic prior
    double topic_word_concentration = 0.5;  // Dirichlet beta within a topic's word block
    double primary_mass = 0.7;  // theta = primary_mass * onehot + rest * Dirichlet(1)
    double background_rate = 0.3;
    int min_body_words = 30;
    int max_body_words = 60;
    int max_recipients = 3;
    int n_external_senders = 200;
    double affinity_scale = 1.0;
    double w_match = 3.0;
    double bias = -3.6;
    double reply_delay_hours = 24.0;
    std::uint64_t seed = 7;

    void validate() const;
    nlohmann::json to_json() const;
    static GeneratorConfig from_json(const nlohmann::json& j);
};

/// Hidden ground truth for one (root message, recipient) pair.
struct HiddenRecord {
    std::string email_id;
    Timestamp timestamp = 0;
    double probability = 0.0;
    int replied = 0;
};

struct SynthCorpus {
    GeneratorConfig config;  // bias reflects any single-class regeneration
    std::vector<corpus::RawMessage> messages;  // roots and replies, ordered by (timestamp, id)
    std::vector<HiddenRecord> hidden;
    corpus::SplitSpec split;
    int regenerations = 0;

    double positive_ratio() const;
};

/// Split boundaries derived from the start date: 245 / 28 / 92 days.
corpus::SplitSpec default_split(const GeneratorConfig& cfg);

/// Deterministic per seed. A single-class sample is regenerated with the bias
/// moved toward the missing class.
SynthCorpus generate(GeneratorConfig cfg);

/// AUROC of the true probabilities against the sampled labels, optionally
/// restricted to one partition.
double bayes_auroc(const std::vector<HiddenRecord>& hidden);
double bayes_auroc(const SynthCorpus& c, corpus::Partition p);

nlohmann::json manifest(const SynthCorpus& c);
void write_jsonl(const SynthCorpus& c, std::ostream& out);
void write_hidden_csv(const SynthCorpus& c, std::ostream& out);

}  // namespace triage::synth
