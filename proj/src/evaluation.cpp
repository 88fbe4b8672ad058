#include "triage/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>

namespace triage::eval {

using nlohmann::json;

namespace {

std::string fmt(double v, const char* f = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::pair<double, double> mean_stddev(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : xs) m += x;
    m /= double(xs.size());
    if (xs.size() < 2) return {m, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / double(xs.size() - 1))};
}

json CellResult::to_json() const {
    json j = cell.to_json();
    j["seed_count"] = seed_count();
    j["test_auroc"] = aurocs;
    j["val_auroc"] = val_aurocs;
    j["mean_auroc"] = mean_auroc;
    j["stddev"] = stddev;
    j["seconds"] = seconds;
    j["failed"] = failed;
    if (failed) j["error"] = error;
    if (!tuned.is_null()) j["tuned"] = tuned;
    return j;
}

void ExperimentReport::write_csv(std::ostream& out) const {
    out << "content,user_mode,classifier,similarity,history_len,aggregation,seed_count,mean_auroc,stddev,seconds\n";
    for (const auto& r : cells) {
        const auto& c = r.cell;
        out << repr::to_string(c.content) << ',' << user::to_string(c.mode) << ',' << to_string(c.classifier) << ','
            << (c.similarity ? "on" : "off") << ',' << c.history_len << ',' << user::to_string(c.aggregation) << ','
            << r.seed_count() << ',';
        if (r.failed)
            out << "failed,,";
        else
            out << fmt(r.mean_auroc) << ',' << fmt(r.stddev) << ',';
        out << fmt(r.seconds, "%.3f") << '\n';
    }
}

json ExperimentReport::to_json() const {
    json j;
    j["cells"] = json::array();
    for (const auto& c : cells) j["cells"].push_back(c.to_json());
    if (bayes_auroc) j["bayes_auroc"] = *bayes_auroc;
    if (!extra.empty()) j["extra"] = extra;
    return j;
}

Axis axis_from_string(const std::string& s) {
    if (s == "similarity") return Axis::similarity;
    if (s == "history" || s == "history_len") return Axis::history;
    if (s == "aggregation") return Axis::aggregation;
    if (s == "user_mode" || s == "mode") return Axis::user_mode;
    if (s == "content") return Axis::content;
    if (s == "classifier") return Axis::classifier;
    if (s == "matrix") return Axis::matrix;
    throw_usage("unknown ablation axis: " + s);
}

const char* to_string(Axis a) {
    switch (a) {
        case Axis::similarity: return "similarity";
        case Axis::history: return "history";
        case Axis::aggregation: return "aggregation";
        case Axis::user_mode: return "user_mode";
        case Axis::content: return "content";
        case Axis::classifier: return "classifier";
        case Axis::matrix: return "matrix";
    }
    return "?";
}

std::vector<CellSpec> ablation_cells(Axis axis, const CellSpec& base) {
    std::vector<CellSpec> out;
    auto with = [&](auto f) {
        CellSpec c = base;
        f(c);
        out.push_back(c);
    };
    using user::AggregationKind;
    using user::HistoryMode;
    switch (axis) {
        case Axis::similarity:
            for (bool s : {true, false}) with([&](CellSpec& c) { c.similarity = s; });
            break;
        case Axis::history:
            for (int h : {3, 5, 10, 20}) with([&](CellSpec& c) { c.history_len = h; });
            break;
        case Axis::aggregation:
            for (auto k : {AggregationKind::uniform, AggregationKind::learned_global, AggregationKind::dot,
                           AggregationKind::concat})
                with([&](CellSpec& c) { c.aggregation = k; });
            break;
        case Axis::user_mode:
            for (auto m : {HistoryMode::received, HistoryMode::pos, HistoryMode::posneg})
                with([&](CellSpec& c) { c.mode = m; });
            break;
        case Axis::content:
            for (auto k : {repr::Content::tfidf, repr::Content::embed, repr::Content::cnn})
                with([&](CellSpec& c) { c.content = k; });
            break;
        case Axis::classifier:
            for (auto k : {Classifier::lr, Classifier::mlp, Classifier::gbdt})
                with([&](CellSpec& c) { c.classifier = k; });
            break;
        case Axis::matrix:
            for (auto k : {repr::Content::tfidf, repr::Content::embed, repr::Content::cnn})
                for (auto m : {HistoryMode::received, HistoryMode::pos, HistoryMode::posneg})
                    for (auto cl : {Classifier::lr, Classifier::mlp, Classifier::gbdt})
                        with([&](CellSpec& c) {
                            c.content = k;
                            c.mode = m;
                            c.classifier = cl;
                        });
            break;
    }
    return out;
}

namespace {

int seeds_for(const CellSpec& c, const ExperimentConfig& cfg) { return c.is_deep() ? cfg.deep_seeds : 1; }

struct SeedRun {
    std::vector<double> scores;
    double val_auroc = 0.0;
};

}  // namespace

ExperimentReport run_matrix(const PreparedCorpus& pc, const std::vector<CellSpec>& cells, const ExperimentConfig& cfg,
                            Audit* audit, std::vector<learn::SearchResult>* search_logs) {
    ExperimentReport rep;
    for (const auto& cell : cells) {
        CellResult r;
        r.cell = cell;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            ExperimentConfig c = cfg;
            if (cfg.search_budget > 0) {
                auto [best, log] = tune_cell(pc, cell, cfg, static_cast<std::size_t>(cfg.search_budget), audit);
                c = best;
                if (log.best) r.tuned = log.best_config();
                if (search_logs) search_logs->push_back(std::move(log));
            }
            const user::HistoryConfig h{cell.mode, cell.history_len};
            const auto tr = build_examples(pc, corpus::Partition::train, h, audit);
            const auto va = build_examples(pc, corpus::Partition::validation, h, audit);
            const auto te = build_examples(pc, corpus::Partition::test, h, audit);
            const auto y = te.labels();
            for (int k = 0; k < seeds_for(cell, cfg); ++k) {
                const auto tc = train_cell(pc, cell, c, cfg.seed + static_cast<std::uint64_t>(k), audit, &tr, &va);
                r.aurocs.push_back(auroc(score_cell(tc, pc, te, cfg.exec), y));
                r.val_aurocs.push_back(tc.val_auroc);
            }
            std::tie(r.mean_auroc, r.stddev) = mean_stddev(r.aurocs);
        } catch (const Error& e) {
            r.failed = true;
            r.error = e.what();
            r.aurocs.clear();
            r.val_aurocs.clear();
        }
        r.seconds = cfg.exec.deterministic ? 0.0 : elapsed(t0);
        rep.cells.push_back(std::move(r));
    }
    return rep;
}

json EnsembleResult::to_json() const {
    json j;
    j["members"] = json::array();
    for (const auto& m : members) j["members"].push_back(m.to_json());
    j["ensemble_auroc"] = aurocs;
    j["mean_auroc"] = mean_auroc;
    j["stddev"] = stddev;
    return j;
}

EnsembleResult run_ensemble(const PreparedCorpus& pc, const std::vector<CellSpec>& cells, const ExperimentConfig& cfg,
                            Audit* audit) {
    if (cells.size() < 2) throw_usage("ensemble needs at least two cells");
    int seeds = 1;
    for (const auto& c : cells) seeds = std::max(seeds, seeds_for(c, cfg));
    EnsembleResult res;
    res.members.resize(cells.size());
    std::vector<std::vector<eval::ScoredSet>> per_seed(static_cast<std::size_t>(seeds));
    std::vector<int> y;
    for (std::size_t m = 0; m < cells.size(); ++m) {
        const auto& cell = cells[m];
        auto& r = res.members[m];
        r.cell = cell;
        const auto t0 = std::chrono::steady_clock::now();
        const user::HistoryConfig h{cell.mode, cell.history_len};
        const auto tr = build_examples(pc, corpus::Partition::train, h, audit);
        const auto va = build_examples(pc, corpus::Partition::validation, h, audit);
        const auto te = build_examples(pc, corpus::Partition::test, h, audit);
        // Example order depends only on the partition, not the cell.
        if (y.empty()) y = te.labels();
        std::vector<std::string> ids = te.ids;
        std::optional<ScoredSet> fixed;
        for (int k = 0; k < seeds; ++k) {
            ScoredSet s;
            if (fixed) {
                s = *fixed;
            } else {
                const auto tc = train_cell(pc, cell, cfg, cfg.seed + static_cast<std::uint64_t>(k), audit, &tr, &va);
                s.scores = score_cell(tc, pc, te, cfg.exec);
                s.labels = te.labels();
                s.partition = "test";
                s.ids = ids;
                r.aurocs.push_back(auroc(s));
                r.val_aurocs.push_back(tc.val_auroc);
                if (!cell.is_deep()) fixed = s;
            }
            per_seed[static_cast<std::size_t>(k)].push_back(std::move(s));
        }
        std::tie(r.mean_auroc, r.stddev) = mean_stddev(r.aurocs);
        r.seconds = cfg.exec.deterministic ? 0.0 : elapsed(t0);
    }
    for (const auto& members : per_seed) res.aurocs.push_back(auroc(ensemble(members)));
    std::tie(res.mean_auroc, res.stddev) = mean_stddev(res.aurocs);
    return res;
}

std::vector<HistogramBin> contrast_histogram(const std::vector<double>& contrast, const std::vector<int>& labels,
                                             int bins) {
    if (contrast.size() != labels.size()) throw_usage("contrast and label lengths differ");
    if (bins < 1) throw_usage("histogram needs at least one bin");
    std::vector<HistogramBin> out;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : contrast) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (contrast.empty()) lo = hi = 0.0;
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double w = (hi - lo) / bins;
    for (int cls : {0, 1})
        for (int b = 0; b < bins; ++b)
            out.push_back({cls, lo + b * w, b + 1 == bins ? hi : lo + (b + 1) * w, 0});
    for (std::size_t i = 0; i < contrast.size(); ++i) {
        int b = static_cast<int>((contrast[i] - lo) / w);
        b = std::clamp(b, 0, bins - 1);
        out[static_cast<std::size_t>((labels[i] ? bins : 0) + b)].count++;
    }
    return out;
}

void write_histogram_csv(const std::vector<HistogramBin>& h, std::ostream& out) {
    out << "class,bin_lo,bin_hi,count\n";
    for (const auto& b : h)
        out << (b.label ? "replied" : "not_replied") << ',' << fmt(b.lo, "%.9g") << ',' << fmt(b.hi, "%.9g") << ','
            << b.count << '\n';
}

std::array<double, 2> class_means(const std::vector<double>& values, const std::vector<int>& labels) {
    std::array<double, 2> sum{0, 0}, n{0, 0};
    for (std::size_t i = 0; i < values.size(); ++i) {
        sum[labels[i] ? 1 : 0] += values[i];
        n[labels[i] ? 1 : 0] += 1;
    }
    return {n[0] ? sum[0] / n[0] : 0.0, n[1] ? sum[1] / n[1] : 0.0};
}

}  // namespace triage::eval
