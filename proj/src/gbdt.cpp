#include "triage/gbdt.hpp"

#include <algorithm>
#include <memory>

#include "triage/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace triage::learn {

using nlohmann::json;
using kernels::HistBin;

int GbdtConfig::max_leaves() const {
    if (max_depth < 1) throw_usage("gbdt: max_depth must be >= 1");
    const long full = (1L << std::min(max_depth, 30)) - 2;
    return static_cast<int>(std::max(2L, full));
}

json GbdtConfig::to_json() const {
    return {{"iterations", iterations},
            {"max_depth", max_depth},
            {"learning_rate", learning_rate},
            {"pos_weight", pos_weight.to_json()},
            {"max_bin", max_bin},
            {"lambda", lambda},
            {"min_data_in_leaf", min_data_in_leaf},
            {"min_sum_hessian", min_sum_hessian}};
}

GbdtConfig GbdtConfig::from_json(const json& j) {
    GbdtConfig c;
    c.iterations = j.value("iterations", c.iterations);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("pos_weight")) c.pos_weight = PositiveWeight::from_json(j.at("pos_weight"));
    c.max_bin = j.value("max_bin", c.max_bin);
    c.lambda = j.value("lambda", c.lambda);
    c.min_data_in_leaf = j.value("min_data_in_leaf", c.min_data_in_leaf);
    c.min_sum_hessian = j.value("min_sum_hessian", c.min_sum_hessian);
    if (c.iterations < 0) throw_usage("gbdt: iterations must be >= 0");
    if (c.max_bin < 2 || c.max_bin > 255) throw_usage("gbdt: max_bin must be in [2, 255]");
    if (c.learning_rate <= 0.0) throw_usage("gbdt: learning_rate must be positive");
    c.max_leaves();
    return c;
}

std::uint32_t FeatureBins::bin_of(double x) const {
    auto it = std::lower_bound(upper.begin(), upper.end(), x);
    if (it == upper.end()) return static_cast<std::uint32_t>(upper.size() - 1);
    return static_cast<std::uint32_t>(it - upper.begin());
}

std::vector<FeatureBins> compute_bins(const Dataset& data, int max_bin, int threads) {
    const std::size_t N = data.rows(), W = data.width();
    std::vector<std::size_t> start(W + 1, 0);
    for (std::size_t r = 0; r < N; ++r)
        for (auto c : data.indices(r)) ++start[c + 1];
    for (std::size_t f = 0; f < W; ++f) start[f + 1] += start[f];
    std::vector<double> col(start[W]);
    {
        std::vector<std::size_t> fill(start.begin(), start.end() - 1);
        for (std::size_t r = 0; r < N; ++r) {
            auto idx = data.indices(r);
            auto val = data.values(r);
            for (std::size_t k = 0; k < idx.size(); ++k) col[fill[idx[k]]++] = val[k];
        }
    }

    std::vector<FeatureBins> bins(W);
    const long nf = static_cast<long>(W);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 64)
    for (long fi = 0; fi < nf; ++fi) {
        const auto f = static_cast<std::size_t>(fi);
        auto first = col.begin() + static_cast<std::ptrdiff_t>(start[f]);
        auto last = col.begin() + static_cast<std::ptrdiff_t>(start[f + 1]);
        std::sort(first, last);
        const std::size_t zeros = N - (start[f + 1] - start[f]);

        // Distinct values with multiplicities, implicit zeros merged in.
        std::vector<std::pair<double, std::size_t>> distinct;
        bool zero_done = zeros == 0;
        auto push = [&](double v, std::size_t c) {
            if (!distinct.empty() && distinct.back().first == v)
                distinct.back().second += c;
            else
                distinct.emplace_back(v, c);
        };
        for (auto it = first; it != last; ++it) {
            if (!zero_done && *it >= 0.0) {
                push(0.0, zeros);
                zero_done = true;
            }
            push(*it, 1);
        }
        if (!zero_done) push(0.0, zeros);

        auto& fb = bins[f];
        if (distinct.size() <= static_cast<std::size_t>(max_bin)) {
            for (const auto& d : distinct) fb.upper.push_back(d.first);
        } else {
            const std::uint64_t n = N, mb = static_cast<std::uint64_t>(max_bin);
            std::uint64_t cum = 0;
            for (std::size_t i = 0; i < distinct.size(); ++i) {
                cum += distinct[i].second;
                const std::uint64_t b = fb.upper.size();
                if (cum * mb >= (b + 1) * n || i + 1 == distinct.size()) fb.upper.push_back(distinct[i].first);
            }
        }
        fb.zero_bin = zeros > 0 ? static_cast<int>(fb.bin_of(0.0)) : -1;
    }
    return bins;
}

namespace {

double value_of(std::span<const std::uint32_t> idx, std::span<const double> val, std::uint32_t f) {
    auto it = std::lower_bound(idx.begin(), idx.end(), f);
    if (it == idx.end() || *it != f) return 0.0;
    return val[static_cast<std::size_t>(it - idx.begin())];
}

}  // namespace

double Tree::predict(std::span<const std::uint32_t> idx, std::span<const double> val) const {
    int n = 0;
    while (!nodes[static_cast<std::size_t>(n)].is_leaf()) {
        const auto& node = nodes[static_cast<std::size_t>(n)];
        const double x = value_of(idx, val, static_cast<std::uint32_t>(node.feature));
        n = x <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(n)].value;
}

double Tree::predict(const Dataset& data, std::size_t row) const {
    return predict(data.indices(row), data.values(row));
}

int Tree::leaves() const {
    int n = 0;
    for (const auto& node : nodes) n += node.is_leaf() ? 1 : 0;
    return n;
}

int Tree::depth() const {
    int d = 0;
    for (const auto& node : nodes)
        if (node.is_leaf()) d = std::max(d, node.depth);
    return d;
}

double GbdtModel::logit(std::span<const std::uint32_t> idx, std::span<const double> val) const {
    double z = prior;
    for (const auto& t : trees) z += t.predict(idx, val);
    return z;
}

double GbdtModel::logit(const Dataset& data, std::size_t row) const { return logit(data.indices(row), data.values(row)); }

std::vector<double> GbdtModel::predict_proba(const Dataset& data, const ExecPolicy& exec) const {
    if (data.width() != width) throw_data("gbdt: dataset width does not match model");
    std::vector<double> p(data.rows());
    const long n = static_cast<long>(data.rows());
#pragma omp parallel for num_threads(exec.pure_threads()) schedule(static)
    for (long r = 0; r < n; ++r) p[static_cast<std::size_t>(r)] = sigmoid(logit(data, static_cast<std::size_t>(r)));
    return p;
}

json GbdtModel::to_json() const {
    json jt = json::array();
    for (const auto& t : trees) {
        json nodes = json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf())
                nodes.push_back({{"value", n.value}, {"depth", n.depth}});
            else
                nodes.push_back({{"feature", n.feature},
                                 {"bin", n.bin},
                                 {"threshold", n.threshold},
                                 {"left", n.left},
                                 {"right", n.right},
                                 {"gain", n.gain},
                                 {"depth", n.depth}});
        }
        jt.push_back(std::move(nodes));
    }
    json imp = json::object();
    for (std::size_t f = 0; f < gain_importance.size(); ++f)
        if (gain_importance[f] != 0.0) imp[std::to_string(f)] = gain_importance[f];
    return {{"prior", prior}, {"pos_weight", pos_weight}, {"width", width},
            {"prior_only", prior_only}, {"trees", std::move(jt)}, {"gain_importance", std::move(imp)}};
}

GbdtModel GbdtModel::from_json(const json& j) {
    GbdtModel m;
    m.prior = j.at("prior").get<double>();
    m.pos_weight = j.at("pos_weight").get<double>();
    m.width = j.at("width").get<std::size_t>();
    m.prior_only = j.value("prior_only", false);
    for (const auto& jt : j.at("trees")) {
        Tree t;
        for (const auto& jn : jt) {
            TreeNode n;
            n.depth = jn.value("depth", 0);
            if (jn.contains("feature")) {
                n.feature = jn.at("feature").get<int>();
                n.bin = jn.at("bin").get<std::uint32_t>();
                n.threshold = jn.at("threshold").get<double>();
                n.left = jn.at("left").get<int>();
                n.right = jn.at("right").get<int>();
                n.gain = jn.value("gain", 0.0);
                if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= m.width)
                    throw_data("gbdt checkpoint: split feature out of range");
            } else {
                n.value = jn.at("value").get<double>();
            }
            t.nodes.push_back(n);
        }
        const int nn = static_cast<int>(t.nodes.size());
        if (nn == 0) throw_data("gbdt checkpoint: empty tree");
        for (const auto& n : t.nodes)
            if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= nn || n.right >= nn))
                throw_data("gbdt checkpoint: bad child index");
        m.trees.push_back(std::move(t));
    }
    m.gain_importance.assign(m.width, 0.0);
    if (j.contains("gain_importance"))
        for (const auto& [k, v] : j.at("gain_importance").items()) {
            const auto f = std::stoul(k);
            if (f < m.width) m.gain_importance[f] = v.get<double>();
        }
    return m;
}

namespace {

struct Stats {
    double g = 0.0, h = 0.0, n = 0.0;
};

struct Candidate {
    int feature = -1;
    std::uint32_t bin = 0;
    double gain = 0.0;
};

struct Leaf {
    std::vector<std::uint32_t> rows;
    Stats total;
    int depth = 0;
    int node = 0;
    std::shared_ptr<std::vector<HistBin>> hist;
    Candidate best;
};

class TreeGrower {
public:
    TreeGrower(const GbdtConfig& cfg, const std::vector<FeatureBins>& bins, const kernels::BinnedRows& binned,
               const std::vector<std::uint32_t>& offset, std::size_t total_bins, const ExecPolicy& exec)
        : cfg_(cfg), bins_(bins), binned_(binned), offset_(offset), total_bins_(total_bins), exec_(exec) {
        for (std::uint32_t f = 0; f < bins.size(); ++f)
            if (bins[f].size() >= 2) usable_.push_back(f);
    }

    Tree grow(std::span<const double> g, std::span<const double> h, std::vector<double>& score,
              std::vector<double>& importance, std::vector<SplitRecord>* record) {
        g_ = g;
        h_ = h;
        cached_ = 0;
        Tree tree;
        std::vector<Leaf> leaves;
        Leaf root;
        root.rows.resize(score.size());
        for (std::uint32_t r = 0; r < root.rows.size(); ++r) root.rows[r] = r;
        root.total = totals(root.rows);
        root.hist = build(root.rows);
        tree.nodes.push_back(TreeNode{});
        find_best(root);
        if (root.best.feature < 0)
            root.hist.reset();
        else
            cached_ = 1;
        leaves.push_back(std::move(root));

        const int max_leaves = cfg_.max_leaves();
        while (static_cast<int>(leaves.size()) < max_leaves) {
            int pick = -1;
            for (int i = 0; i < static_cast<int>(leaves.size()); ++i) {
                const auto& c = leaves[static_cast<std::size_t>(i)].best;
                if (c.feature < 0 || c.gain <= 0.0) continue;
                if (pick < 0 || c.gain > leaves[static_cast<std::size_t>(pick)].best.gain) pick = i;
            }
            if (pick < 0) break;
            split(tree, leaves, static_cast<std::size_t>(pick), importance, record);
        }

        for (auto& leaf : leaves) {
            const double v = -cfg_.learning_rate * leaf.total.g / (leaf.total.h + cfg_.lambda);
            auto& node = tree.nodes[static_cast<std::size_t>(leaf.node)];
            node.value = v;
            node.depth = leaf.depth;
            for (auto r : leaf.rows) score[r] += v;
        }
        return tree;
    }

private:
    Stats totals(const std::vector<std::uint32_t>& rows) const {
        Stats s;
        for (auto r : rows) {
            s.g += g_[r];
            s.h += h_[r];
        }
        s.n = static_cast<double>(rows.size());
        return s;
    }

    std::shared_ptr<std::vector<HistBin>> build(const std::vector<std::uint32_t>& rows) {
        auto hist = std::make_shared<std::vector<HistBin>>(total_bins_);
        kernels::build_histogram_omp(binned_, rows, g_, h_, *hist, exec_.racy_threads());
        return hist;
    }

    bool can_cache() const {
        return (cached_ + 1) * total_bins_ * sizeof(HistBin) <= cfg_.histogram_budget_bytes;
    }

    double leaf_score(double g, double h) const { return g * g / (h + cfg_.lambda); }

    Candidate scan_feature(const Leaf& leaf, std::uint32_t f) const {
        const auto& fb = bins_[f];
        const auto nb = static_cast<std::uint32_t>(fb.size());
        const HistBin* hb = leaf.hist->data() + offset_[f];
        Stats zero;
        if (fb.zero_bin >= 0) {
            zero = leaf.total;
            for (std::uint32_t b = 0; b < nb; ++b) {
                if (static_cast<int>(b) == fb.zero_bin) continue;
                zero.g -= hb[b].g;
                zero.h -= hb[b].h;
                zero.n -= hb[b].n;
            }
        }
        const double parent = leaf_score(leaf.total.g, leaf.total.h);
        const double min_n = cfg_.min_data_in_leaf;
        Candidate best;
        Stats left;
        for (std::uint32_t b = 0; b + 1 < nb; ++b) {
            if (static_cast<int>(b) == fb.zero_bin) {
                left.g += zero.g;
                left.h += zero.h;
                left.n += zero.n;
            } else {
                left.g += hb[b].g;
                left.h += hb[b].h;
                left.n += hb[b].n;
            }
            const double rn = leaf.total.n - left.n;
            if (left.n < min_n) continue;
            if (rn < min_n) break;
            const double rh = leaf.total.h - left.h;
            if (left.h < cfg_.min_sum_hessian || rh < cfg_.min_sum_hessian) continue;
            const double rg = leaf.total.g - left.g;
            const double gain = leaf_score(left.g, left.h) + leaf_score(rg, rh) - parent;
            if (gain > best.gain) {
                best.feature = static_cast<int>(f);
                best.bin = b;
                best.gain = gain;
            }
        }
        return best;
    }

    void find_best(Leaf& leaf) const {
        leaf.best = {};
        if (leaf.depth >= cfg_.max_depth) return;
        if (leaf.total.n < 2.0 * cfg_.min_data_in_leaf) return;
        const int threads = exec_.pure_threads();
        std::vector<Candidate> per_thread(static_cast<std::size_t>(threads));
        const long nf = static_cast<long>(usable_.size());
#pragma omp parallel num_threads(threads)
        {
#ifdef _OPENMP
            const auto tid = static_cast<std::size_t>(omp_get_thread_num());
#else
            const std::size_t tid = 0;
#endif
            Candidate local;
#pragma omp for schedule(static)
            for (long i = 0; i < nf; ++i) {
                auto c = scan_feature(leaf, usable_[static_cast<std::size_t>(i)]);
                if (c.gain > local.gain) local = c;
            }
            per_thread[tid] = local;
        }
        // Static chunks are ordered by feature, so strict > keeps the lowest
        // feature among equal gains.
        for (const auto& c : per_thread)
            if (c.feature >= 0 && c.gain > leaf.best.gain) leaf.best = c;
    }

    std::uint32_t row_bin(std::uint32_t r, std::uint32_t f) const {
        auto row = binned_.row(r);
        const std::uint32_t lo = offset_[f];
        const std::uint32_t hi = lo + static_cast<std::uint32_t>(bins_[f].size());
        auto it = std::lower_bound(row.begin(), row.end(), lo);
        if (it != row.end() && *it < hi) return *it - lo;
        return static_cast<std::uint32_t>(std::max(bins_[f].zero_bin, 0));
    }

    void split(Tree& tree, std::vector<Leaf>& leaves, std::size_t pick, std::vector<double>& importance,
               std::vector<SplitRecord>* record) {
        Leaf parent = std::move(leaves[pick]);
        const auto f = static_cast<std::uint32_t>(parent.best.feature);
        const auto b = parent.best.bin;

        Leaf left, right;
        for (auto r : parent.rows) (row_bin(r, f) <= b ? left : right).rows.push_back(r);
        left.depth = right.depth = parent.depth + 1;
        left.total = totals(left.rows);
        right.total = totals(right.rows);

        if (parent.hist) {
            --cached_;
            Leaf& small = left.rows.size() <= right.rows.size() ? left : right;
            Leaf& large = &small == &left ? right : left;
            small.hist = build(small.rows);
            large.hist = parent.hist;
            auto& lh = *large.hist;
            const auto& sh = *small.hist;
            for (std::size_t i = 0; i < lh.size(); ++i) {
                lh[i].g -= sh[i].g;
                lh[i].h -= sh[i].h;
                lh[i].n -= sh[i].n;
            }
        } else {
            left.hist = build(left.rows);
            right.hist = build(right.rows);
        }
        parent.hist.reset();

        const int lnode = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        tree.nodes.push_back(TreeNode{});
        auto& node = tree.nodes[static_cast<std::size_t>(parent.node)];
        node.feature = static_cast<int>(f);
        node.bin = b;
        node.threshold = bins_[f].upper[b];
        node.left = lnode;
        node.right = lnode + 1;
        node.gain = parent.best.gain;
        node.depth = parent.depth;
        left.node = lnode;
        right.node = lnode + 1;
        importance[f] += parent.best.gain;
        if (record)
            record->push_back({parent.node, static_cast<int>(f), b, node.threshold, parent.best.gain});

        find_best(left);
        find_best(right);
        // Histograms are only needed again for leaves that can still split.
        for (Leaf* c : {&left, &right}) {
            if (c->best.feature < 0 || !can_cache())
                c->hist.reset();
            else
                ++cached_;
        }
        leaves[pick] = std::move(left);
        leaves.push_back(std::move(right));
    }

    const GbdtConfig& cfg_;
    const std::vector<FeatureBins>& bins_;
    const kernels::BinnedRows& binned_;
    const std::vector<std::uint32_t>& offset_;
    std::size_t total_bins_;
    ExecPolicy exec_;
    std::vector<std::uint32_t> usable_;
    std::span<const double> g_, h_;
    std::size_t cached_ = 0;
};

}  // namespace

GbdtModel train_gbdt(const Dataset& train, const GbdtConfig& cfg, const ExecPolicy& exec) {
    const std::size_t N = train.rows();
    const std::size_t n_pos = train.positives();
    const std::size_t n_neg = N - n_pos;
    if (n_pos == 0 || n_neg == 0) throw_training("gbdt: training data needs both classes");
    const double pw = cfg.pos_weight.resolve(n_pos, n_neg);
    if (!(pw > 0.0)) throw_usage("gbdt: positive weight must be positive");

    GbdtModel model;
    model.width = train.width();
    model.pos_weight = pw;
    model.prior = std::log(pw * double(n_pos) / double(n_neg));
    model.gain_importance.assign(train.width(), 0.0);
    if (cfg.iterations == 0) return model;

    const auto bins = compute_bins(train, cfg.max_bin, exec.pure_threads());
    std::vector<std::uint32_t> offset(bins.size() + 1, 0);
    for (std::size_t f = 0; f < bins.size(); ++f) offset[f + 1] = offset[f] + static_cast<std::uint32_t>(bins[f].size());
    const std::size_t total_bins = offset.back();

    kernels::BinnedRows binned;
    binned.row_ptr.reserve(N + 1);
    binned.bins.reserve(train.nnz());
    for (std::size_t r = 0; r < N; ++r) {
        auto idx = train.indices(r);
        auto val = train.values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto& fb = bins[idx[k]];
            if (fb.size() < 2) continue;
            const auto b = fb.bin_of(val[k]);
            if (static_cast<int>(b) == fb.zero_bin) continue;
            binned.bins.push_back(offset[idx[k]] + b);
        }
        binned.row_ptr.push_back(binned.bins.size());
    }

    std::vector<double> score(N, model.prior), g(N), h(N);
    TreeGrower grower(cfg, bins, binned, offset, total_bins, exec);
    for (int it = 0; it < cfg.iterations; ++it) {
        for (std::size_t r = 0; r < N; ++r) {
            const double p = sigmoid(score[r]);
            if (train.label(r) == 1) {
                g[r] = pw * (p - 1.0);
                h[r] = pw * p * (1.0 - p);
            } else {
                g[r] = p;
                h[r] = p * (1.0 - p);
            }
        }
        Tree tree = grower.grow(g, h, score, model.gain_importance, it == 0 ? &model.first_tree_splits : nullptr);
        if (tree.nodes.size() == 1) {
            if (it == 0) model.prior_only = true;
            break;
        }
        for (double s : score)
            if (!std::isfinite(s)) throw_training("gbdt: non-finite score");
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace triage::learn
