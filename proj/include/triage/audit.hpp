#pragma once

#include <array>
#include <atomic>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/corpus.hpp"

namespace triage {

/// Records which partitions each fitting stage reads and checks history
/// lookups for temporal causality. Thread-safe.
class Audit {
public:
    enum class Stage : int { vocabulary = 0, embedding, reply_rate, fitting, tuning, count };

    explicit Audit(corpus::SplitSpec split) : split_(split) {}

    // Records that `stage` read the document received at `received`.
    void touch(Stage stage, Timestamp received, const std::string& email_id);
    // Records one history element used for a query at time `query`; a reply
    // timestamp is passed when the element's reply status was consulted.
    void history(Timestamp query, Timestamp element, std::optional<Timestamp> reply_used, const std::string& email_id);

    std::size_t touches(Stage s, corpus::Partition p) const;
    std::size_t history_checks() const { return history_checks_; }
    std::size_t violations() const { return violations_; }
    std::vector<std::string> violation_messages() const;

    nlohmann::json to_json() const;
    static const char* to_string(Stage s);

private:
    void violate(std::string msg);

    corpus::SplitSpec split_;
    std::array<std::array<std::atomic<std::size_t>, 3>, static_cast<std::size_t>(Stage::count)> touches_{};
    std::atomic<std::size_t> history_checks_{0};
    std::atomic<std::size_t> violations_{0};
    mutable std::mutex mu_;
    std::vector<std::string> messages_;
};

}  // namespace triage
