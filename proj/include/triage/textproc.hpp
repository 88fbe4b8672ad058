#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "triage/common.hpp"

namespace triage::text {

inline constexpr std::string_view kQuoteMarker = "original message";

struct CleanOptions {
    bool include_subject = true;
    // Lowercased tokens removed after splitting (entity names, aliases).
    std::unordered_set<std::string> blocklist;
};

struct CleanText {
    std::string email_id;
    std::vector<std::string> tokens;
};

std::unordered_set<std::string> load_blocklist(const std::string& path);

/// Lowercased word tokens of subject + body, cut at the quoted-reply marker,
/// with addresses, blocklisted tokens and pure numbers removed.
std::vector<std::string> clean(std::string_view subject, std::string_view body, const CleanOptions& opts = {});

/// Word n-grams of orders 1..max_order joined by a single space.
std::vector<std::string> ngrams(const std::vector<std::string>& tokens, int max_order);

struct VocabularyOptions {
    std::size_t max_size = 10000;
    int max_order = 3;
    double stop_df_fraction = 0.95;
};

struct Term {
    std::string text;
    std::size_t df = 0;
    double idf = 0.0;
};

/// n-gram vocabulary with smoothed idf weights.
class Vocabulary {
public:
    Vocabulary() = default;

    std::size_t size() const { return terms_.size(); }
    std::size_t n_docs() const { return n_docs_; }
    int max_order() const { return max_order_; }
    const std::vector<Term>& terms() const { return terms_; }
    const Term& term(std::size_t i) const { return terms_[i]; }
    // -1 when absent.
    long lookup(const std::string& t) const;

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

    static double idf(std::size_t n_docs, std::size_t df);

    friend Vocabulary build_vocabulary(const std::vector<const std::vector<std::string>*>& docs,
                                       const VocabularyOptions& opts, const ExecPolicy& exec);

private:
    void reindex();

    std::vector<Term> terms_;
    std::unordered_map<std::string, std::size_t> pos_;
    std::size_t n_docs_ = 0;
    int max_order_ = 3;
};

/// Counts document frequencies over train+validation documents only; the
/// caller decides which documents are passed in.
Vocabulary build_vocabulary(const std::vector<const std::vector<std::string>*>& docs,
                            const VocabularyOptions& opts = {}, const ExecPolicy& exec = {});

/// Word unigram table for embeddings and CNN input. Id 0 is padding, regular
/// words occupy 1..n and n+1 is the out-of-table id.
class UnigramTable {
public:
    UnigramTable() = default;
    explicit UnigramTable(std::vector<std::string> words, std::vector<std::size_t> counts = {});

    std::size_t words() const { return words_.size(); }
    // Rows needed by an embedding table: padding + words + unk.
    std::size_t rows() const { return words_.size() + 2; }
    static constexpr std::uint32_t pad_id = 0;
    std::uint32_t unk_id() const { return static_cast<std::uint32_t>(words_.size() + 1); }

    std::uint32_t id(const std::string& w) const;
    bool contains(const std::string& w) const { return pos_.count(w) > 0; }
    const std::string& word(std::uint32_t id) const { return words_.at(id - 1); }
    std::size_t count(std::uint32_t id) const { return id >= 1 && id <= counts_.size() ? counts_[id - 1] : 0; }

    nlohmann::json to_json() const;
    static UnigramTable from_json(const nlohmann::json& j);

    /// Most frequent words (ties lexicographic) with count >= min_count.
    static UnigramTable build(const std::vector<const std::vector<std::string>*>& docs, std::size_t min_count,
                              std::size_t max_words);

private:
    std::vector<std::string> words_;
    std::vector<std::size_t> counts_;
    std::unordered_map<std::string, std::uint32_t> pos_;
};

/// First `length` tokens mapped to ids, zero padded.
std::vector<std::uint32_t> to_sequence(const std::vector<std::string>& tokens, const UnigramTable& table,
                                       std::size_t length);

}  // namespace triage::text
