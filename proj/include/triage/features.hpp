#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/common.hpp"
#include "triage/represent.hpp"
#include "triage/userrep.hpp"

namespace triage::learn {

/// Column order of an assembled row:
///   [email vector][user vector(s)][similarity][reply rate][missing flags]
/// PosNeg contributes two user vectors, three similarity scalars and two
/// flags; Received and Pos contribute one of each.
struct FeatureLayout {
    repr::Content content = repr::Content::tfidf;
    user::HistoryMode mode = user::HistoryMode::posneg;
    bool similarity = true;
    std::size_t email_dim = 0;

    std::size_t user_vectors() const { return mode == user::HistoryMode::posneg ? 2 : 1; }
    std::size_t similarity_count() const { return similarity ? (mode == user::HistoryMode::posneg ? 3 : 1) : 0; }
    std::size_t flag_count() const { return user_vectors(); }

    std::size_t user_offset() const { return email_dim; }
    std::size_t similarity_offset() const { return email_dim * (1 + user_vectors()); }
    std::size_t reply_rate_offset() const { return similarity_offset() + similarity_count(); }
    std::size_t flags_offset() const { return reply_rate_offset() + 1; }
    std::size_t width() const { return flags_offset() + flag_count(); }

    std::string column_name(std::size_t col) const;

    bool operator==(const FeatureLayout& o) const = default;
    nlohmann::json to_json() const;
    static FeatureLayout from_json(const nlohmann::json& j);
};

/// Assembled classifier input as a sparse row (zeros omitted).
SparseVector assemble(const FeatureLayout& layout, const repr::EmailVector& email, const user::UserRepresentation& user,
                      const std::optional<user::SimilarityFeatures>& sims, double reply_rate);

/// Dense twin of assemble() for the jointly trained network.
void assemble_dense(const FeatureLayout& layout, std::span<const double> email, std::span<const double> g_primary,
                    std::span<const double> g_negative, const user::SimilarityFeatures& sims, double reply_rate,
                    bool primary_missing, bool negative_missing, std::span<double> out);

/// Row-major sparse matrix of feature rows plus labels.
class Dataset {
public:
    explicit Dataset(std::size_t width = 0) : width_(width) { row_ptr_.push_back(0); }

    void add(const SparseVector& row, int label, std::string id = {});
    void reserve(std::size_t rows, std::size_t nnz);

    std::size_t rows() const { return labels_.size(); }
    std::size_t width() const { return width_; }
    std::size_t nnz() const { return idx_.size(); }
    int label(std::size_t r) const { return labels_[r]; }
    const std::vector<int>& labels() const { return labels_; }
    const std::string& id(std::size_t r) const { return ids_[r]; }

    std::span<const std::uint32_t> indices(std::size_t r) const {
        return {idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
    }
    std::span<const double> values(std::size_t r) const {
        return {val_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
    }
    // 0 when the column is not stored.
    double at(std::size_t r, std::uint32_t col) const;

    std::size_t positives() const;

private:
    std::size_t width_;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::uint32_t> idx_;
    std::vector<double> val_;
    std::vector<int> labels_;
    std::vector<std::string> ids_;
};

}  // namespace triage::learn
