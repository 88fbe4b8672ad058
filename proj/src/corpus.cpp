#include "triage/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

namespace triage::corpus {

using nlohmann::json;

void SplitSpec::validate() const {
    if (!(train_end < validation_end && validation_end < test_end))
        throw_usage("split boundaries must satisfy train_end < validation_end < test_end");
}

const char* to_string(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::validation: return "validation";
        case Partition::test: return "test";
    }
    return "?";
}

json IngestReport::to_json() const {
    json j;
    j["lines_read"] = lines_read;
    j["malformed"] = malformed;
    j["duplicates"] = duplicates;
    j["missing_fields"] = missing_fields;
    j["sole_recipient"] = sole_recipient;
    j["no_recipients"] = no_recipients;
    j["out_of_window"] = out_of_window;
    j["excluded_recipients"] = excluded_recipients;
    j["excluded_emails"] = excluded_emails;
    j["unknown_reply_to"] = unknown_reply_to;
    j["replies_consumed"] = replies_consumed;
    json parts = json::object();
    for (int p = 0; p < 3; ++p) {
        const auto& s = partitions[p];
        parts[to_string(static_cast<Partition>(p))] = {
            {"recipients", s.recipients},
            {"emails", s.emails},
            {"positives", s.positives},
            {"positive_ratio", s.positive_ratio()},
        };
    }
    j["partitions"] = parts;
    j["warnings"] = warnings;
    return j;
}

// ---------------------------------------------------------------------------
// MailboxIndex

const std::vector<std::size_t>& MailboxIndex::timeline(const std::string& recipient) const {
    auto it = recipient_pos_.find(recipient);
    if (it == recipient_pos_.end()) throw_data("unknown recipient: " + recipient);
    return timelines_[it->second];
}

std::size_t MailboxIndex::reply_count(const std::string& recipient) const {
    auto it = recipient_pos_.find(recipient);
    return it == recipient_pos_.end() ? 0 : reply_counts_[it->second];
}

std::optional<std::size_t> MailboxIndex::find(const std::string& email_id) const {
    auto it = by_id_.find(email_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

MailboxIndex MailboxIndex::build(std::vector<Email> emails,
                                 const std::unordered_map<std::string, std::size_t>& reply_counts) {
    // Canonical order makes every downstream index independent of input order.
    std::sort(emails.begin(), emails.end(), [](const Email& a, const Email& b) {
        return std::tie(a.timestamp, a.email_id) < std::tie(b.timestamp, b.email_id);
    });
    MailboxIndex idx;
    idx.emails_ = std::move(emails);
    std::set<std::string> names;
    for (const auto& e : idx.emails_) names.insert(e.recipient_id);
    idx.recipient_names_.assign(names.begin(), names.end());
    idx.timelines_.resize(idx.recipient_names_.size());
    idx.reply_counts_.resize(idx.recipient_names_.size(), 0);
    for (std::size_t i = 0; i < idx.recipient_names_.size(); ++i) {
        idx.recipient_pos_[idx.recipient_names_[i]] = i;
        auto rc = reply_counts.find(idx.recipient_names_[i]);
        idx.reply_counts_[i] = rc == reply_counts.end() ? 0 : rc->second;
    }
    for (std::size_t i = 0; i < idx.emails_.size(); ++i) {
        const auto& e = idx.emails_[i];
        idx.timelines_[idx.recipient_pos_[e.recipient_id]].push_back(i);
        idx.by_id_[e.email_id] = i;
    }
    return idx;
}

// ---------------------------------------------------------------------------
// JSONL

namespace {

bool optional_string(const json& j, const char* key, std::string& out) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        out.clear();
        return true;
    }
    if (!it->is_string()) return false;
    out = it->get<std::string>();
    return true;
}

}  // namespace

std::optional<RawMessage> parse_message(const std::string& line) {
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;

    RawMessage m;
    auto id = j.find("message_id");
    if (id == j.end() || !id->is_string()) return std::nullopt;
    m.message_id = id->get<std::string>();
    if (m.message_id.empty()) return std::nullopt;

    auto ts = j.find("timestamp");
    if (ts != j.end() && !ts->is_null()) {
        if (!ts->is_number_integer()) return std::nullopt;
        m.timestamp = ts->get<Timestamp>();
    }
    if (!optional_string(j, "sender", m.sender)) return std::nullopt;
    if (!optional_string(j, "subject", m.subject)) return std::nullopt;
    if (!optional_string(j, "body", m.body)) return std::nullopt;

    auto rc = j.find("recipients");
    if (rc != j.end() && !rc->is_null()) {
        if (!rc->is_array()) return std::nullopt;
        for (const auto& r : *rc) {
            if (!r.is_string()) return std::nullopt;
            m.recipients.push_back(r.get<std::string>());
        }
    }
    std::string reply;
    if (!optional_string(j, "reply_to", reply)) return std::nullopt;
    if (!reply.empty()) m.reply_to = reply;
    return m;
}

json message_to_json(const RawMessage& m) {
    json j;
    j["message_id"] = m.message_id;
    j["timestamp"] = m.timestamp ? json(*m.timestamp) : json(nullptr);
    j["sender"] = m.sender;
    j["recipients"] = m.recipients;
    j["subject"] = m.subject;
    j["body"] = m.body;
    j["reply_to"] = m.reply_to ? json(*m.reply_to) : json(nullptr);
    return j;
}

std::vector<RawMessage> read_jsonl(std::istream& in, IngestReport& report) {
    std::vector<RawMessage> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++report.lines_read;
        auto m = parse_message(line);
        if (!m) {
            ++report.malformed;
            continue;
        }
        out.push_back(std::move(*m));
    }
    return out;
}

std::vector<RawMessage> read_jsonl_file(const std::string& path, IngestReport& report) {
    std::ifstream in(path);
    if (!in) throw_data("cannot open corpus: " + path);
    return read_jsonl(in, report);
}

// ---------------------------------------------------------------------------
// Labeling

namespace {

struct ReplyRef {
    std::string sender;
    Timestamp timestamp;
};

using ReplyMap = std::unordered_map<std::string, std::vector<ReplyRef>>;

// Groups replies by the message they answer; counts dangling reply_to links.
ReplyMap collect_replies(const std::vector<RawMessage>& messages, std::size_t& unknown) {
    std::unordered_map<std::string, const RawMessage*> by_id;
    for (const auto& m : messages) by_id.emplace(m.message_id, &m);
    ReplyMap replies;
    unknown = 0;
    for (const auto& m : messages) {
        if (!m.reply_to) continue;
        if (!by_id.count(*m.reply_to)) {
            ++unknown;
            continue;
        }
        replies[*m.reply_to].push_back({m.sender, m.timestamp.value_or(0)});
    }
    return replies;
}

void apply_labels(std::vector<Email>& emails, const ReplyMap& replies) {
    for (auto& e : emails) {
        e.replied = false;
        e.reply_timestamp.reset();
        auto it = replies.find(e.source_message_id);
        if (it == replies.end()) continue;
        for (const auto& r : it->second) {
            if (r.sender != e.recipient_id || r.timestamp < e.timestamp) continue;
            if (!e.reply_timestamp || r.timestamp < *e.reply_timestamp) e.reply_timestamp = r.timestamp;
            e.replied = true;
        }
    }
}

}  // namespace

std::size_t label_replies(std::vector<Email>& emails, const std::vector<RawMessage>& messages) {
    std::size_t unknown = 0;
    apply_labels(emails, collect_replies(messages, unknown));
    return unknown;
}

MailboxIndex label_replies(const MailboxIndex& index, const MessageTable& messages) {
    std::vector<Email> emails = index.emails();
    label_replies(emails, messages.messages);
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& r : index.recipients()) counts[r] = index.reply_count(r);
    return MailboxIndex::build(std::move(emails), counts);
}

// ---------------------------------------------------------------------------
// Ingestion

IngestResult ingest(std::vector<RawMessage> messages, const SplitSpec& spec, IngestReport report) {
    spec.validate();

    // Duplicates: identical message_id. The survivor is the smallest record in
    // a total order so the result does not depend on input order.
    auto key = [](const RawMessage& m) {
        return std::tie(m.message_id, m.timestamp, m.sender, m.recipients, m.subject, m.body, m.reply_to);
    };
    std::sort(messages.begin(), messages.end(), [&](const RawMessage& a, const RawMessage& b) { return key(a) < key(b); });
    std::vector<RawMessage> kept;
    kept.reserve(messages.size());
    for (auto& m : messages) {
        if (!kept.empty() && kept.back().message_id == m.message_id) {
            ++report.duplicates;
            continue;
        }
        kept.push_back(std::move(m));
    }

    std::vector<RawMessage> valid;
    valid.reserve(kept.size());
    for (auto& m : kept) {
        if (m.sender.empty() || !m.timestamp) {
            ++report.missing_fields;
            continue;
        }
        if (m.recipients.empty()) {
            ++report.no_recipients;
            continue;
        }
        if (m.recipients.size() == 1 && m.recipients.front() == m.sender) {
            ++report.sole_recipient;
            continue;
        }
        valid.push_back(std::move(m));
    }

    std::size_t unknown = 0;
    ReplyMap replies = collect_replies(valid, unknown);
    report.unknown_reply_to = unknown;

    // Who has replied to anything they received.
    std::unordered_map<std::string, const RawMessage*> by_id;
    for (const auto& m : valid) by_id.emplace(m.message_id, &m);
    std::unordered_map<std::string, std::size_t> reply_counts;
    for (const auto& m : valid) {
        if (!m.reply_to) continue;
        auto it = by_id.find(*m.reply_to);
        if (it == by_id.end()) continue;
        const auto& rcpts = it->second->recipients;
        if (std::find(rcpts.begin(), rcpts.end(), m.sender) != rcpts.end()) {
            ++reply_counts[m.sender];
            ++report.replies_consumed;
        }
    }

    std::vector<Email> emails;
    std::set<std::string> excluded;
    for (const auto& m : valid) {
        if (m.reply_to) continue;  // replies only feed labels
        if (*m.timestamp > spec.test_end) {
            ++report.out_of_window;
            continue;
        }
        std::set<std::string> seen;
        for (const auto& r : m.recipients) {
            if (r == m.sender || !seen.insert(r).second) continue;
            if (!reply_counts.count(r)) {
                excluded.insert(r);
                ++report.excluded_emails;
                continue;
            }
            Email e;
            e.email_id = m.message_id + "/" + r;
            e.source_message_id = m.message_id;
            e.recipient_id = r;
            e.timestamp = *m.timestamp;
            e.sender_id = m.sender;
            e.subject = m.subject;
            e.body = m.body;
            emails.push_back(std::move(e));
        }
    }
    report.excluded_recipients = excluded.size();
    apply_labels(emails, replies);

    if (emails.empty()) throw_data("empty corpus after ingestion filters");

    IngestResult result;
    result.index = MailboxIndex::build(std::move(emails), reply_counts);
    result.messages.messages = std::move(valid);
    split(result.index, spec, &report);
    result.report = std::move(report);
    return result;
}

Partition partition_of(Timestamp t, const SplitSpec& spec) {
    if (t <= spec.train_end) return Partition::train;
    if (t <= spec.validation_end) return Partition::validation;
    return Partition::test;
}

const std::vector<std::size_t>& Splits::operator[](Partition p) const {
    switch (p) {
        case Partition::train: return train;
        case Partition::validation: return validation;
        case Partition::test: return test;
    }
    return test;
}

Splits split(const MailboxIndex& index, const SplitSpec& spec, IngestReport* report) {
    Splits s;
    std::set<std::string> recips[3];
    std::size_t positives[3] = {0, 0, 0};
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto& e = index.email(i);
        auto p = partition_of(e.timestamp, spec);
        int k = static_cast<int>(p);
        (k == 0 ? s.train : k == 1 ? s.validation : s.test).push_back(i);
        recips[k].insert(e.recipient_id);
        positives[k] += e.replied ? 1 : 0;
    }
    if (report) {
        for (int k = 0; k < 3; ++k) {
            auto& ps = report->partitions[k];
            ps.recipients = recips[k].size();
            ps.emails = s[static_cast<Partition>(k)].size();
            ps.positives = positives[k];
            if (ps.emails == 0)
                report->warnings.push_back(std::string("empty partition: ") + to_string(static_cast<Partition>(k)));
        }
    }
    return s;
}

}  // namespace triage::corpus
