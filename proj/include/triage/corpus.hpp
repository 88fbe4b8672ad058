#pragma once

#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "triage/common.hpp"

namespace triage::corpus {

struct RawMessage {
    std::string message_id;
    std::optional<Timestamp> timestamp;  // nullopt when absent in the input
    std::string sender;
    std::vector<std::string> recipients;
    std::string subject;
    std::string body;
    std::optional<std::string> reply_to;
};

/// One received root message from one recipient's point of view.
struct Email {
    std::string email_id;  // source_message_id + "/" + recipient_id
    std::string source_message_id;
    std::string recipient_id;
    Timestamp timestamp = 0;
    std::string sender_id;
    std::string subject;
    std::string body;
    bool replied = false;
    // Earliest qualifying reply; set iff replied.
    std::optional<Timestamp> reply_timestamp;
};

/// Inclusive upper bounds of the three partitions.
struct SplitSpec {
    Timestamp train_end = 0;
    Timestamp validation_end = 0;
    Timestamp test_end = 0;

    void validate() const;
};

enum class Partition : int { train = 0, validation = 1, test = 2 };

const char* to_string(Partition p);

struct IngestReport {
    std::size_t lines_read = 0;
    std::size_t malformed = 0;
    std::size_t duplicates = 0;
    std::size_t missing_fields = 0;
    std::size_t sole_recipient = 0;
    std::size_t no_recipients = 0;
    std::size_t out_of_window = 0;
    std::size_t excluded_recipients = 0;
    std::size_t excluded_emails = 0;
    std::size_t unknown_reply_to = 0;
    std::size_t replies_consumed = 0;
    struct PartitionStats {
        std::size_t recipients = 0;
        std::size_t emails = 0;
        std::size_t positives = 0;
        double positive_ratio() const { return emails ? double(positives) / double(emails) : 0.0; }
    };
    PartitionStats partitions[3];
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

/// Labeled per-recipient timelines. Immutable once built.
class MailboxIndex {
public:
    MailboxIndex() = default;

    const std::vector<Email>& emails() const { return emails_; }
    const Email& email(std::size_t i) const { return emails_[i]; }
    std::size_t size() const { return emails_.size(); }

    const std::vector<std::string>& recipients() const { return recipient_names_; }
    bool has_recipient(const std::string& r) const { return recipient_pos_.count(r) > 0; }
    // Indices into emails(), ascending by timestamp.
    const std::vector<std::size_t>& timeline(const std::string& recipient) const;
    std::size_t reply_count(const std::string& recipient) const;

    std::optional<std::size_t> find(const std::string& email_id) const;

    // Builds the index from already-labeled emails. `reply_counts` holds every
    // recipient's reply count over the whole corpus.
    static MailboxIndex build(std::vector<Email> emails,
                              const std::unordered_map<std::string, std::size_t>& reply_counts);

private:
    std::vector<Email> emails_;
    std::vector<std::string> recipient_names_;
    std::unordered_map<std::string, std::size_t> recipient_pos_;
    std::vector<std::vector<std::size_t>> timelines_;
    std::vector<std::size_t> reply_counts_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// Raw message table retained for reply labeling.
struct MessageTable {
    std::vector<RawMessage> messages;  // deduplicated, field-valid
};

struct IngestResult {
    MailboxIndex index;
    MessageTable messages;
    IngestReport report;
};

// JSONL helpers. A line that is not a valid RawMessage returns nullopt.
std::optional<RawMessage> parse_message(const std::string& line);
nlohmann::json message_to_json(const RawMessage& m);

/// Parses a JSONL stream; malformed lines are counted in `report`.
std::vector<RawMessage> read_jsonl(std::istream& in, IngestReport& report);
std::vector<RawMessage> read_jsonl_file(const std::string& path, IngestReport& report);

/// Full ingestion pipeline: dedupe, field filtering, sole-recipient filter,
/// per-recipient expansion, labeling, no-reply recipient exclusion.
IngestResult ingest(std::vector<RawMessage> messages, const SplitSpec& split, IngestReport report = {});

/// Sets Email.replied / reply_timestamp from reply_to links. Idempotent.
/// Returns the number of reply_to references that matched no known message.
std::size_t label_replies(std::vector<Email>& emails, const std::vector<RawMessage>& messages);

MailboxIndex label_replies(const MailboxIndex& index, const MessageTable& messages);

Partition partition_of(Timestamp t, const SplitSpec& split);

struct Splits {
    std::vector<std::size_t> train, validation, test;  // indices into the index
    const std::vector<std::size_t>& operator[](Partition p) const;
};

/// Partitions by timestamp; fills per-partition stats and empty-partition
/// warnings into `report` when given.
Splits split(const MailboxIndex& index, const SplitSpec& split, IngestReport* report = nullptr);

}  // namespace triage::corpus
