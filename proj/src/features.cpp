#include "triage/features.hpp"

#include <algorithm>

namespace triage::learn {

using nlohmann::json;

std::string FeatureLayout::column_name(std::size_t col) const {
    if (col < email_dim) return "email[" + std::to_string(col) + "]";
    if (col < similarity_offset()) {
        const std::size_t k = (col - email_dim) / email_dim;
        const std::string which = mode == user::HistoryMode::posneg ? (k == 0 ? "user_pos" : "user_neg") : "user";
        return which + "[" + std::to_string((col - email_dim) % email_dim) + "]";
    }
    if (col < reply_rate_offset()) {
        static const char* names[] = {"sim_pos", "sim_neg", "contrast"};
        if (mode != user::HistoryMode::posneg) return "sim";
        return names[col - similarity_offset()];
    }
    if (col == reply_rate_offset()) return "reply_rate";
    if (col < width()) return col == flags_offset() ? "missing_primary" : "missing_negative";
    return "?";
}

json FeatureLayout::to_json() const {
    return {{"content", repr::to_string(content)},
            {"mode", user::to_string(mode)},
            {"similarity", similarity},
            {"email_dim", email_dim},
            {"width", width()}};
}

FeatureLayout FeatureLayout::from_json(const json& j) {
    FeatureLayout l;
    l.content = repr::content_from_string(j.at("content").get<std::string>());
    l.mode = user::mode_from_string(j.at("mode").get<std::string>());
    l.similarity = j.at("similarity").get<bool>();
    l.email_dim = j.at("email_dim").get<std::size_t>();
    if (j.contains("width") && j.at("width").get<std::size_t>() != l.width()) throw_data("feature layout: width mismatch");
    return l;
}

namespace {

void append_block(SparseVector& row, const repr::EmailVector& v, std::size_t offset) {
    if (v.is_sparse()) {
        for (std::size_t k = 0; k < v.sparse.index.size(); ++k) {
            if (v.sparse.value[k] == 0.0) continue;
            row.index.push_back(static_cast<std::uint32_t>(offset + v.sparse.index[k]));
            row.value.push_back(v.sparse.value[k]);
        }
    } else {
        for (std::size_t i = 0; i < v.dense.size(); ++i) {
            if (v.dense[i] == 0.0) continue;
            row.index.push_back(static_cast<std::uint32_t>(offset + i));
            row.value.push_back(v.dense[i]);
        }
    }
}

void append_scalar(SparseVector& row, std::size_t col, double v) {
    if (v == 0.0) return;
    row.index.push_back(static_cast<std::uint32_t>(col));
    row.value.push_back(v);
}

}  // namespace

SparseVector assemble(const FeatureLayout& layout, const repr::EmailVector& email, const user::UserRepresentation& user,
                      const std::optional<user::SimilarityFeatures>& sims, double reply_rate) {
    const std::size_t D = layout.email_dim;
    if (email.dim() != D) throw_data("assemble: email dimension does not match layout");
    if (user.mode != layout.mode) throw_data("assemble: user mode does not match layout");
    if (layout.similarity != sims.has_value()) throw_data("assemble: similarity block does not match layout");
    if (sims && sims->paired != (layout.mode == user::HistoryMode::posneg)) throw_data("assemble: similarity arity mismatch");

    SparseVector row;
    row.dim = layout.width();
    append_block(row, email, 0);
    if (!user.primary_missing()) {
        if (user.primary.dim() != D) throw_data("assemble: user vector dimension mismatch");
        append_block(row, user.primary, layout.user_offset());
    }
    if (layout.mode == user::HistoryMode::posneg && !user.negative_missing()) {
        if (user.negative.dim() != D) throw_data("assemble: user vector dimension mismatch");
        append_block(row, user.negative, layout.user_offset() + D);
    }
    if (sims) {
        auto vals = sims->values();
        for (std::size_t k = 0; k < vals.size(); ++k) append_scalar(row, layout.similarity_offset() + k, vals[k]);
    }
    append_scalar(row, layout.reply_rate_offset(), reply_rate);
    append_scalar(row, layout.flags_offset(), user.primary_missing() ? 1.0 : 0.0);
    if (layout.mode == user::HistoryMode::posneg)
        append_scalar(row, layout.flags_offset() + 1, user.negative_missing() ? 1.0 : 0.0);
    return row;
}

void assemble_dense(const FeatureLayout& layout, std::span<const double> email, std::span<const double> g_primary,
                    std::span<const double> g_negative, const user::SimilarityFeatures& sims, double reply_rate,
                    bool primary_missing, bool negative_missing, std::span<double> out) {
    const std::size_t D = layout.email_dim;
    if (out.size() != layout.width() || email.size() != D) throw_data("assemble_dense: layout mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    std::copy(email.begin(), email.end(), out.begin());
    std::copy(g_primary.begin(), g_primary.end(), out.begin() + static_cast<long>(layout.user_offset()));
    if (layout.mode == user::HistoryMode::posneg)
        std::copy(g_negative.begin(), g_negative.end(), out.begin() + static_cast<long>(layout.user_offset() + D));
    if (layout.similarity) {
        auto vals = sims.values();
        for (std::size_t k = 0; k < vals.size(); ++k) out[layout.similarity_offset() + k] = vals[k];
    }
    out[layout.reply_rate_offset()] = reply_rate;
    out[layout.flags_offset()] = primary_missing ? 1.0 : 0.0;
    if (layout.mode == user::HistoryMode::posneg) out[layout.flags_offset() + 1] = negative_missing ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------

void Dataset::add(const SparseVector& row, int label, std::string id) {
    if (row.dim != width_) throw_data("dataset: row width " + std::to_string(row.dim) + " != " + std::to_string(width_));
    idx_.insert(idx_.end(), row.index.begin(), row.index.end());
    val_.insert(val_.end(), row.value.begin(), row.value.end());
    row_ptr_.push_back(idx_.size());
    labels_.push_back(label);
    ids_.push_back(std::move(id));
}

void Dataset::reserve(std::size_t rows, std::size_t nnz) {
    row_ptr_.reserve(rows + 1);
    labels_.reserve(rows);
    ids_.reserve(rows);
    idx_.reserve(nnz);
    val_.reserve(nnz);
}

double Dataset::at(std::size_t r, std::uint32_t col) const {
    auto ix = indices(r);
    auto it = std::lower_bound(ix.begin(), ix.end(), col);
    if (it == ix.end() || *it != col) return 0.0;
    return values(r)[static_cast<std::size_t>(it - ix.begin())];
}

std::size_t Dataset::positives() const {
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), 1));
}

}  // namespace triage::learn
