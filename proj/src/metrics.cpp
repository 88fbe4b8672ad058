#include "triage/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace triage::eval {

void ScoredSet::validate() const {
    if (scores.size() != labels.size()) throw_data("scored set: score/label length mismatch");
    for (double s : scores)
        if (!std::isfinite(s)) throw_data("scored set: non-finite score");
    for (int l : labels)
        if (l != 0 && l != 1) throw_data("scored set: labels must be 0 or 1");
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw_data("auroc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l == 1 ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw_data("auroc undefined: single-class set");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Sum of 1-based average ranks of the positives.
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::size_t pos_in_group = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            pos_in_group += labels[order[j]] == 1 ? 1 : 0;
            ++j;
        }
        const double avg_rank = 0.5 * (double(i + 1) + double(j));
        rank_sum += avg_rank * double(pos_in_group);
        i = j;
    }
    const double np = double(n_pos);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * double(n_neg));
}

ScoredSet ensemble(const std::vector<ScoredSet>& members) {
    if (members.size() < 2) throw_usage("ensemble needs at least two members");
    const std::size_t n = members.front().scores.size();
    for (const auto& m : members) {
        m.validate();
        if (m.scores.size() != n) throw_data("ensemble: member length mismatch");
    }
    ScoredSet out = members.front();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (const auto& m : members) s += m.scores[i];
        out.scores[i] = s / double(members.size());
    }
    return out;
}

}  // namespace triage::eval
