#include "triage/userrep.hpp"

#include <algorithm>
#include <random>

namespace triage::user {

using nlohmann::json;

const char* to_string(HistoryMode m) {
    switch (m) {
        case HistoryMode::received: return "Received";
        case HistoryMode::pos: return "Pos";
        case HistoryMode::posneg: return "Pos+Neg";
    }
    return "?";
}

HistoryMode mode_from_string(const std::string& s) {
    std::string u;
    for (char c : s)
        if (std::isalnum(static_cast<unsigned char>(c))) u.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (u == "received") return HistoryMode::received;
    if (u == "pos") return HistoryMode::pos;
    if (u == "posneg") return HistoryMode::posneg;
    throw_usage("unknown user mode: " + s);
}

void HistoryConfig::validate() const {
    if (length < 1) throw_usage("history length must be >= 1");
}

History select_history(const corpus::MailboxIndex& index, const std::string& recipient, Timestamp t,
                       const HistoryConfig& cfg, Audit* audit) {
    cfg.validate();
    History h;
    if (!index.has_recipient(recipient)) return h;
    const auto& tl = index.timeline(recipient);
    // First element not strictly older than t.
    auto end = std::lower_bound(tl.begin(), tl.end(), t,
                                [&](std::size_t i, Timestamp q) { return index.email(i).timestamp < q; });
    const auto cap = static_cast<std::size_t>(cfg.length);
    for (auto it = end; it != tl.begin();) {
        --it;
        const auto& e = index.email(*it);
        const bool replied_before = e.replied && e.reply_timestamp && *e.reply_timestamp < t;
        switch (cfg.mode) {
            case HistoryMode::received:
                if (h.primary.size() < cap) {
                    h.primary.push_back(*it);
                    if (audit) audit->history(t, e.timestamp, std::nullopt, e.email_id);
                }
                break;
            case HistoryMode::pos:
            case HistoryMode::posneg:
                if (replied_before && h.primary.size() < cap) {
                    h.primary.push_back(*it);
                    if (audit) audit->history(t, e.timestamp, e.reply_timestamp, e.email_id);
                } else if (!replied_before && cfg.mode == HistoryMode::posneg && h.negative.size() < cap) {
                    h.negative.push_back(*it);
                    // The negative label only relies on the absence of a reply before t.
                    if (audit) audit->history(t, e.timestamp, std::nullopt, e.email_id);
                }
                break;
        }
        const bool full = h.primary.size() >= cap && (cfg.mode != HistoryMode::posneg || h.negative.size() >= cap);
        if (full) break;
    }
    return h;
}

const char* to_string(AggregationKind k) {
    switch (k) {
        case AggregationKind::uniform: return "uniform";
        case AggregationKind::learned_global: return "learned_global";
        case AggregationKind::dot: return "dot";
        case AggregationKind::concat: return "concat";
    }
    return "?";
}

AggregationKind aggregation_from_string(const std::string& s) {
    if (s == "uniform" || s == "mean") return AggregationKind::uniform;
    if (s == "learned_global" || s == "global") return AggregationKind::learned_global;
    if (s == "dot") return AggregationKind::dot;
    if (s == "concat") return AggregationKind::concat;
    throw_usage("unknown aggregation: " + s);
}

AttentionParams AttentionParams::make(AggregationKind kind, std::size_t history_length, std::size_t dim,
                                      std::size_t concat_hidden, double gamma, std::uint64_t seed) {
    if (!(gamma >= 0.0)) throw_usage("attention temperature must be >= 0");
    AttentionParams p;
    p.kind = kind;
    p.gamma = gamma;
    p.dim = dim;
    if (kind == AggregationKind::learned_global) p.global_logits.assign(history_length, 0.0);
    if (kind == AggregationKind::concat) {
        p.hidden = concat_hidden;
        std::mt19937_64 rng(seed);
        const double lw = std::sqrt(6.0 / double(2 * dim + concat_hidden));
        const double lv = std::sqrt(6.0 / double(concat_hidden + 1));
        std::uniform_real_distribution<double> uw(-lw, lw), uv(-lv, lv);
        p.W.resize(concat_hidden * 2 * dim);
        for (auto& x : p.W) x = uw(rng);
        p.v.resize(concat_hidden);
        for (auto& x : p.v) x = uv(rng);
    }
    return p;
}

AttentionParams AttentionParams::zeros_like() const {
    AttentionParams z = *this;
    std::fill(z.global_logits.begin(), z.global_logits.end(), 0.0);
    std::fill(z.v.begin(), z.v.end(), 0.0);
    std::fill(z.W.begin(), z.W.end(), 0.0);
    return z;
}

bool AttentionParams::all_finite() const {
    auto fin = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
    return std::isfinite(gamma) && fin(global_logits) && fin(v) && fin(W);
}

std::vector<std::span<double>> AttentionParams::blocks() {
    std::vector<std::span<double>> out;
    if (!global_logits.empty()) out.emplace_back(global_logits);
    if (!v.empty()) out.emplace_back(v);
    if (!W.empty()) out.emplace_back(W);
    return out;
}

json AttentionParams::to_json() const {
    return {{"kind", to_string(kind)}, {"gamma", gamma}, {"global_logits", global_logits},
            {"hidden", hidden},        {"dim", dim},     {"v", v},
            {"W", W}};
}

AttentionParams AttentionParams::from_json(const json& j) {
    AttentionParams p;
    p.kind = aggregation_from_string(j.at("kind").get<std::string>());
    p.gamma = j.at("gamma").get<double>();
    p.global_logits = j.at("global_logits").get<std::vector<double>>();
    p.hidden = j.at("hidden").get<std::size_t>();
    p.dim = j.at("dim").get<std::size_t>();
    p.v = j.at("v").get<std::vector<double>>();
    p.W = j.at("W").get<std::vector<double>>();
    if (p.W.size() != p.hidden * 2 * p.dim || p.v.size() != p.hidden) throw_data("attention checkpoint: shape mismatch");
    return p;
}

namespace {

// concat score for one (x, y) pair; fills the hidden pre-activation.
double concat_score(std::span<const double> x, std::span<const double> y, const AttentionParams& p,
                    std::vector<double>& pre) {
    const std::size_t D = p.dim;
    pre.assign(p.hidden, 0.0);
    double s = 0.0;
    for (std::size_t a = 0; a < p.hidden; ++a) {
        const double* row = p.W.data() + a * 2 * D;
        double z = 0.0;
        for (std::size_t j = 0; j < D; ++j) z += row[j] * x[j];
        for (std::size_t j = 0; j < D; ++j) z += row[D + j] * y[j];
        pre[a] = z;
        if (z > 0.0) s += p.v[a] * z;
    }
    return s;
}

std::vector<double> weights_from_scores(const std::vector<double>& scores, const AttentionParams& p) {
    const std::size_t m = scores.size();
    switch (p.kind) {
        case AggregationKind::uniform: return std::vector<double>(m, 1.0 / double(m));
        case AggregationKind::learned_global: {
            if (p.global_logits.size() < m) throw_data("learned_global: history longer than the logit table");
            return softmax(std::span<const double>(p.global_logits.data(), m));
        }
        case AggregationKind::dot:
        case AggregationKind::concat: return softmax(scores, p.gamma);
    }
    return {};
}

}  // namespace

std::vector<double> attention_weights(const repr::EmailVector& incoming,
                                      const std::vector<const repr::EmailVector*>& history,
                                      const AttentionParams& params) {
    const std::size_t m = history.size();
    if (m == 0) return {};
    std::vector<double> scores(m, 0.0);
    if (params.kind == AggregationKind::dot) {
        for (std::size_t t = 0; t < m; ++t) scores[t] = repr::dot(incoming, *history[t]);
    } else if (params.kind == AggregationKind::concat) {
        const auto x = incoming.is_sparse() ? incoming.sparse.to_dense() : incoming.dense;
        if (x.size() != params.dim) throw_data("concat attention: dimension mismatch");
        std::vector<double> pre;
        for (std::size_t t = 0; t < m; ++t) {
            const auto y = history[t]->is_sparse() ? history[t]->sparse.to_dense() : history[t]->dense;
            scores[t] = concat_score(x, y, params, pre);
        }
    }
    return weights_from_scores(scores, params);
}

repr::EmailVector aggregate(const repr::EmailVector& incoming, const std::vector<const repr::EmailVector*>& history,
                            const AttentionParams& params, std::size_t dim, std::vector<double>* weights_out) {
    for (const auto* h : history)
        if (h->dim() != dim || h->variant != incoming.variant) throw_data("aggregate: dimension mismatch");
    if (incoming.dim() != dim) throw_data("aggregate: dimension mismatch");

    repr::EmailVector g;
    g.variant = incoming.variant;
    const auto w = attention_weights(incoming, history, params);
    if (weights_out) *weights_out = w;
    if (incoming.is_sparse()) {
        g.sparse.dim = dim;
        if (history.empty()) return g;
        if (history.size() == 1 && w[0] == 1.0) {
            g.sparse = history[0]->sparse;
            return g;
        }
        std::vector<std::pair<std::uint32_t, double>> terms;
        for (std::size_t t = 0; t < history.size(); ++t) {
            const auto& s = history[t]->sparse;
            for (std::size_t k = 0; k < s.index.size(); ++k) terms.emplace_back(s.index[k], w[t] * s.value[k]);
        }
        // Stable sort keeps the summation order fixed per index.
        std::stable_sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [i, v] : terms) {
            if (!g.sparse.index.empty() && g.sparse.index.back() == i)
                g.sparse.value.back() += v;
            else {
                g.sparse.index.push_back(i);
                g.sparse.value.push_back(v);
            }
        }
    } else {
        g.dense.assign(dim, 0.0);
        if (history.size() == 1 && !w.empty() && w[0] == 1.0) {
            g.dense = history[0]->dense;
            return g;
        }
        for (std::size_t t = 0; t < history.size(); ++t) axpy(w[t], history[t]->dense, g.dense);
    }
    return g;
}

std::vector<double> aggregate_dense(std::span<const double> incoming, const std::vector<std::span<const double>>& history,
                                    const AttentionParams& params, AttentionCache* cache) {
    const std::size_t m = history.size();
    const std::size_t D = incoming.size();
    std::vector<double> out(D, 0.0);
    std::vector<double> scores(m, 0.0);
    std::vector<std::vector<double>> pres;
    if (params.kind == AggregationKind::dot) {
        for (std::size_t t = 0; t < m; ++t) scores[t] = dot(incoming, history[t]);
    } else if (params.kind == AggregationKind::concat) {
        if (params.dim != D) throw_data("concat attention: dimension mismatch");
        pres.resize(m);
        for (std::size_t t = 0; t < m; ++t) scores[t] = concat_score(incoming, history[t], params, pres[t]);
    }
    std::vector<double> w = m ? weights_from_scores(scores, params) : std::vector<double>{};
    if (m == 1 && w[0] == 1.0)
        std::copy(history[0].begin(), history[0].end(), out.begin());
    else
        for (std::size_t t = 0; t < m; ++t) axpy(w[t], history[t], out);
    if (cache) {
        cache->scores = std::move(scores);
        cache->weights = std::move(w);
        cache->concat_pre = std::move(pres);
    }
    return out;
}

void aggregate_dense_backward(std::span<const double> d_output, std::span<const double> incoming,
                              const std::vector<std::span<const double>>& history, const AttentionParams& params,
                              const AttentionCache& cache, std::span<double> d_incoming,
                              std::vector<std::span<double>>& d_history, AttentionParams& grad) {
    const std::size_t m = history.size();
    if (m == 0) return;
    if (cache.weights.size() != m || d_history.size() != m) throw_data("attention backward: cache mismatch");
    const std::size_t D = incoming.size();
    const auto& w = cache.weights;

    std::vector<double> d_alpha(m);
    for (std::size_t t = 0; t < m; ++t) {
        d_alpha[t] = dot(d_output, history[t]);
        axpy(w[t], d_output, d_history[t]);
    }
    if (params.kind == AggregationKind::uniform) return;

    // Softmax backward: d_arg_t = alpha_t (d_alpha_t - sum_u alpha_u d_alpha_u).
    double mean = 0.0;
    for (std::size_t t = 0; t < m; ++t) mean += w[t] * d_alpha[t];
    std::vector<double> d_arg(m);
    for (std::size_t t = 0; t < m; ++t) d_arg[t] = w[t] * (d_alpha[t] - mean);

    if (params.kind == AggregationKind::learned_global) {
        for (std::size_t t = 0; t < m; ++t) grad.global_logits[t] += d_arg[t];
        return;
    }
    for (std::size_t t = 0; t < m; ++t) {
        const double ds = params.gamma * d_arg[t];
        if (ds == 0.0) continue;
        if (params.kind == AggregationKind::dot) {
            axpy(ds, history[t], d_incoming);
            axpy(ds, incoming, d_history[t]);
            continue;
        }
        const auto& pre = cache.concat_pre[t];
        for (std::size_t a = 0; a < params.hidden; ++a) {
            if (pre[a] <= 0.0) continue;
            grad.v[a] += ds * pre[a];
            const double dz = ds * params.v[a];
            const double* row = params.W.data() + a * 2 * D;
            double* grow = grad.W.data() + a * 2 * D;
            for (std::size_t j = 0; j < D; ++j) {
                grow[j] += dz * incoming[j];
                grow[D + j] += dz * history[t][j];
                d_incoming[j] += dz * row[j];
                d_history[t][j] += dz * row[D + j];
            }
        }
    }
}

std::vector<double> SimilarityFeatures::values() const {
    if (paired) return {sim_pos, sim_neg, contrast};
    return {sim_pos};
}

SimilarityFeatures similarity(const repr::EmailVector& incoming, const UserRepresentation& user) {
    SimilarityFeatures s;
    s.sim_pos = user.primary_missing() ? 0.0 : repr::dot(incoming, user.primary);
    if (user.mode == HistoryMode::posneg) {
        s.paired = true;
        s.sim_neg = user.negative_missing() ? 0.0 : repr::dot(incoming, user.negative);
        s.contrast = s.sim_pos - s.sim_neg;
    }
    return s;
}

}  // namespace triage::user
