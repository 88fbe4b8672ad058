#include "triage/audit.hpp"

namespace triage {

const char* Audit::to_string(Stage s) {
    switch (s) {
        case Stage::vocabulary: return "vocabulary";
        case Stage::embedding: return "embedding";
        case Stage::reply_rate: return "reply_rate";
        case Stage::fitting: return "fitting";
        case Stage::tuning: return "tuning";
        case Stage::count: break;
    }
    return "?";
}

void Audit::touch(Stage stage, Timestamp received, const std::string& email_id) {
    const auto p = corpus::partition_of(received, split_);
    touches_[static_cast<std::size_t>(stage)][static_cast<std::size_t>(p)]++;
    bool bad = false;
    switch (stage) {
        case Stage::vocabulary:
        case Stage::embedding: bad = p == corpus::Partition::test; break;
        case Stage::reply_rate:
        case Stage::fitting: bad = p != corpus::Partition::train; break;
        case Stage::tuning: bad = p != corpus::Partition::validation; break;
        case Stage::count: break;
    }
    if (bad)
        violate(std::string(to_string(stage)) + " read " + corpus::to_string(p) + " document " + email_id);
}

void Audit::history(Timestamp query, Timestamp element, std::optional<Timestamp> reply_used, const std::string& email_id) {
    ++history_checks_;
    if (element >= query) violate("history element " + email_id + " is not older than its query");
    if (reply_used && *reply_used >= query) violate("history element " + email_id + " uses a reply from the future");
}

std::size_t Audit::touches(Stage s, corpus::Partition p) const {
    return touches_[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)];
}

void Audit::violate(std::string msg) {
    ++violations_;
    std::lock_guard lock(mu_);
    if (messages_.size() < 20) messages_.push_back(std::move(msg));
}

std::vector<std::string> Audit::violation_messages() const {
    std::lock_guard lock(mu_);
    return messages_;
}

nlohmann::json Audit::to_json() const {
    nlohmann::json j;
    for (int s = 0; s < static_cast<int>(Stage::count); ++s) {
        auto st = static_cast<Stage>(s);
        j["touches"][to_string(st)] = {{"train", touches(st, corpus::Partition::train)},
                                       {"validation", touches(st, corpus::Partition::validation)},
                                       {"test", touches(st, corpus::Partition::test)}};
    }
    j["history_checks"] = history_checks();
    j["violations"] = violations();
    j["violation_messages"] = violation_messages();
    return j;
}

}  // namespace triage
