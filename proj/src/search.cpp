#include "triage/search.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "triage/common.hpp"

namespace triage::learn {

using nlohmann::json;

std::size_t SearchSpace::size() const {
    if (axes.empty()) return 0;
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.second.size();
    return n;
}

json SearchSpace::config_at(std::size_t index) const {
    if (index >= size()) throw_usage("search: config index out of range");
    json c = json::object();
    // Last axis varies fastest.
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
        const auto n = it->second.size();
        c[it->first] = it->second[index % n];
        index /= n;
    }
    return c;
}

SearchSpace SearchSpace::lr_grid() {
    return {{{"C", {0.01, 0.1, 1.0, 10.0, 100.0}}, {"pos_weight", {1.0, 5.0, 10.0, 15.0, "balanced"}}}};
}

SearchSpace SearchSpace::gbdt_grid() {
    return {{{"iterations", {50, 100, 200, 300, 500, 800}},
             {"max_depth", {2, 3, 4, 5}},
             {"pos_weight", {5.0, 10.0, 15.0, 20.0, "balanced"}},
             {"learning_rate", {0.01, 0.1, 1.0}}}};
}

SearchSpace SearchSpace::cnn_grid() {
    return {{{"filters", {64, 128, 256}},
             {"seq_len", {75, 100, 150}},
             {"embed_dim", {50, 100, 300}},
             {"aggregation", {"learned_global", "dot"}},
             {"batch_size", {32, 64, 128, 256}},
             {"learning_rate", {0.001, 0.0005, 0.0001}},
             {"keep_prob", {0.5, 1.0}},
             {"pos_weight", {5.0, 10.0, 15.0, 20.0}}}};
}

json Trial::to_json() const {
    json j = {{"trial", trial}, {"config", config}, {"status", status}};
    j["val_auroc"] = val_auroc ? json(*val_auroc) : json(nullptr);
    return j;
}

const json& SearchResult::best_config() const {
    if (!best) throw_training("search: no trial succeeded");
    return log[*best].config;
}

double SearchResult::best_auroc() const {
    if (!best) throw_training("search: no trial succeeded");
    return *log[*best].val_auroc;
}

void SearchResult::write_log(std::ostream& out) const {
    for (const auto& t : log) out << t.to_json().dump() << '\n';
}

SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                           const Objective& objective) {
    if (budget < 1) throw_usage("search: budget must be >= 1");
    const std::size_t n = space.size();
    if (n == 0) throw_usage("search: empty space");
    const std::size_t k = std::min(budget, n);

    // Partial Fisher-Yates: the first k slots are a uniform sample without replacement.
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }

    SearchResult res;
    for (std::size_t i = 0; i < k; ++i) {
        Trial t;
        t.trial = i;
        t.config = space.config_at(pool[i]);
        try {
            const double auc = objective(t.config);
            if (!std::isfinite(auc)) throw_training("objective returned a non-finite value");
            t.val_auroc = auc;
            t.status = "ok";
        } catch (const Error& e) {
            t.status = std::string("failed: ") + e.what();
        }
        if (t.val_auroc && (!res.best || *t.val_auroc > *res.log[*res.best].val_auroc)) res.best = res.log.size();
        res.log.push_back(std::move(t));
    }
    return res;
}

}  // namespace triage::learn
