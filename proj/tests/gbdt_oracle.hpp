#pragma once

// Exhaustive first-tree split search for small dense GBDT fixtures.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "triage/gbdt.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline triage::learn::Dataset to_dataset(const Matrix& x, const std::vector<int>& y) {
    triage::learn::Dataset d(x.empty() ? 0 : x[0].size());
    for (std::size_t r = 0; r < x.size(); ++r) d.add(triage::SparseVector::from_dense(x[r]), y[r]);
    return d;
}

// Strictly positive features so every entry is stored.
inline void random_fixture(std::size_t n, std::size_t f, std::mt19937_64& rng, Matrix& x, std::vector<int>& y) {
    std::uniform_real_distribution<double> u(0.5, 2.0);
    std::uniform_int_distribution<int> small(1, 4);
    std::bernoulli_distribution coin(0.4);
    x.assign(n, std::vector<double>(f));
    y.assign(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        y[r] = r == 0 ? 1 : r == 1 ? 0 : coin(rng);
        for (std::size_t c = 0; c < f; ++c) {
            if (c == 1) x[r][c] = small(rng);
            else if (c == 2) x[r][c] = y[r] + u(rng);
            else x[r][c] = u(rng);
        }
    }
}

// Exhaustive split search: every (feature, observed value) threshold on the
// rows of a leaf, scored with the second-order gain.
struct Oracle {
    const Matrix& x;
    std::vector<double> g, h;
    int max_depth, min_n;
    double lambda = 1.0, min_hess = 1e-3;

    struct Leaf {
        std::vector<std::size_t> rows;
        int depth = 0;
        int node = 0;
    };
    struct Cand {
        int feature = -1;
        double threshold = 0.0;
        double gain = 0.0;
    };

    double score(double G, double H) const { return G * G / (H + lambda); }

    std::vector<Cand> candidates(const Leaf& leaf) const {
        std::vector<Cand> out;
        if (leaf.depth >= max_depth || static_cast<int>(leaf.rows.size()) < 2 * min_n) return out;
        double G = 0, H = 0;
        for (auto r : leaf.rows) {
            G += g[r];
            H += h[r];
        }
        for (std::size_t f = 0; f < x[0].size(); ++f) {
            std::vector<double> vals;
            for (const auto& row : x) vals.push_back(row[f]);
            std::sort(vals.begin(), vals.end());
            vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
            for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
                double GL = 0, HL = 0;
                int nl = 0;
                for (auto r : leaf.rows)
                    if (x[r][f] <= vals[k]) {
                        GL += g[r];
                        HL += h[r];
                        ++nl;
                    }
                const int nr = static_cast<int>(leaf.rows.size()) - nl;
                if (nl < min_n || nr < min_n) continue;
                if (HL < min_hess || H - HL < min_hess) continue;
                const double gain = score(GL, HL) + score(G - GL, H - HL) - score(G, H);
                if (gain > 0) out.push_back({static_cast<int>(f), vals[k], gain});
            }
        }
        return out;
    }

    static double best_gain(const std::vector<Cand>& c) {
        double b = 0;
        for (const auto& x : c) b = std::max(b, x.gain);
        return b;
    }
};

constexpr double kTol = 1e-9;

inline bool close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)}); }

// Replays the recorded first-tree splits of a one-iteration model against the
// oracle. Gains equal up to rounding may go either way; anything else must
// match. Returns an empty string on agreement.
inline std::string first_tree_mismatch(const Matrix& x, const std::vector<int>& y, int depth) {
    using namespace triage;
    using namespace triage::learn;
    const auto data = to_dataset(x, y);
    GbdtConfig cfg;
    cfg.iterations = 1;
    cfg.max_depth = depth;
    cfg.min_data_in_leaf = 3;
    cfg.pos_weight = {false, 1.0};
    const auto model = train_gbdt(data, cfg);

    const double p0 = sigmoid(model.prior);
    Oracle o{x, {}, {}, depth, 3};
    for (auto label : y) {
        o.g.push_back(p0 - label);
        o.h.push_back(p0 * (1 - p0));
    }
    std::vector<Oracle::Leaf> leaves(1);
    for (std::size_t r = 0; r < x.size(); ++r) leaves[0].rows.push_back(r);

    int next_node = 1;
    for (std::size_t k = 0; k < model.first_tree_splits.size(); ++k) {
        const auto& rec = model.first_tree_splits[k];
        const std::string at = "split " + std::to_string(k) + ": ";
        if (static_cast<int>(leaves.size()) >= cfg.max_leaves()) return at + "grew past the leaf cap";
        double top = 0;
        std::vector<std::vector<Oracle::Cand>> cands;
        for (const auto& l : leaves) {
            cands.push_back(o.candidates(l));
            top = std::max(top, Oracle::best_gain(cands.back()));
        }
        if (!(top > 0)) return at + "split recorded where no positive gain exists";
        std::size_t pick = leaves.size();
        for (std::size_t i = 0; i < leaves.size(); ++i)
            if (leaves[i].node == rec.leaf) pick = i;
        if (pick == leaves.size()) return at + "unknown leaf";
        const Oracle::Cand* chosen = nullptr;
        for (const auto& c : cands[pick])
            if (c.feature == rec.feature && c.threshold == rec.threshold) chosen = &c;
        if (!chosen) return at + "split is not an admissible candidate";
        if (chosen->gain < top - kTol)
            return at + "gain " + std::to_string(chosen->gain) + " below best " + std::to_string(top);
        if (!close(rec.gain, chosen->gain, 1e-9)) return at + "recorded gain differs";
        Oracle::Leaf left, right;
        for (auto r : leaves[pick].rows)
            (x[r][static_cast<std::size_t>(rec.feature)] <= rec.threshold ? left : right).rows.push_back(r);
        left.depth = right.depth = leaves[pick].depth + 1;
        left.node = next_node++;
        right.node = next_node++;
        leaves[pick] = left;
        leaves.push_back(right);
    }
    double top = 0;
    for (const auto& l : leaves) top = std::max(top, Oracle::best_gain(o.candidates(l)));
    if (static_cast<int>(leaves.size()) < cfg.max_leaves() && top > kTol) return "stopped with a positive-gain split left";

    // leaf values over the induced partition
    for (const auto& l : leaves) {
        double G = 0, H = 0;
        for (auto r : l.rows) {
            G += o.g[r];
            H += o.h[r];
        }
        const double v = -cfg.learning_rate * G / (H + cfg.lambda);
        for (auto r : l.rows)
            if (!close(model.logit(data, r), model.prior + v, 1e-12)) return "leaf value differs";
    }
    return {};
}

}  // namespace oracle
