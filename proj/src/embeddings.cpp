#include "triage/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace triage::embed {

using nlohmann::json;

bool EmbeddingTable::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

json EmbeddingTable::to_json() const { return {{"rows", rows_}, {"dim", dim_}, {"data", data_}}; }

EmbeddingTable EmbeddingTable::from_json(const json& j) {
    EmbeddingTable t(j.at("rows").get<std::size_t>(), j.at("dim").get<std::size_t>());
    t.data_ = j.at("data").get<std::vector<double>>();
    if (t.data_.size() != t.rows_ * t.dim_) throw_data("embedding table: size mismatch");
    return t;
}

void SkipGramConfig::validate() const {
    if (dimension <= 0) throw_usage("skip-gram dimension must be positive");
    if (window < 1) throw_usage("skip-gram window must be >= 1");
    if (negatives < 1) throw_usage("skip-gram negatives must be >= 1");
    if (epochs < 0) throw_usage("skip-gram epochs must be >= 0");
}

json SkipGramConfig::to_json() const {
    return {{"window", window}, {"dimension", dimension}, {"negatives", negatives}, {"epochs", epochs},
            {"learning_rate", learning_rate}, {"seed", seed}, {"learn_unk", learn_unk}};
}

SkipGramConfig SkipGramConfig::from_json(const json& j, SkipGramConfig c) {
    c.window = j.value("window", c.window);
    c.dimension = j.value("dimension", c.dimension);
    c.negatives = j.value("negatives", c.negatives);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.learn_unk = j.value("learn_unk", c.learn_unk);
    return c;
}

double sgns_loss(std::span<const double> center, std::span<const double> context,
                 const std::vector<std::span<const double>>& negatives) {
    double loss = -std::log(sigmoid(dot(context, center)));
    for (auto n : negatives) loss -= std::log(sigmoid(-dot(n, center)));
    return loss;
}

SgnsGradient sgns_gradient(std::span<const double> center, std::span<const double> context,
                           const std::vector<std::span<const double>>& negatives) {
    const std::size_t d = center.size();
    SgnsGradient g;
    g.center.assign(d, 0.0);
    const double gc = sigmoid(dot(context, center)) - 1.0;
    g.context.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        g.center[i] += gc * context[i];
        g.context[i] = gc * center[i];
    }
    for (auto n : negatives) {
        const double gn = sigmoid(dot(n, center));
        std::vector<double> gu(d);
        for (std::size_t i = 0; i < d; ++i) {
            g.center[i] += gn * n[i];
            gu[i] = gn * center[i];
        }
        g.negatives.push_back(std::move(gu));
    }
    return g;
}

EmbeddingTable initial_table(const text::UnigramTable& table, const SkipGramConfig& cfg) {
    cfg.validate();
    const auto d = static_cast<std::size_t>(cfg.dimension);
    EmbeddingTable t(table.rows(), d);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> uni(-0.5 / double(d), 0.5 / double(d));
    for (std::size_t r = 1; r < table.rows(); ++r) {
        if (r == table.unk_id() && !cfg.learn_unk) continue;
        for (auto& v : t.row(r)) v = uni(rng);
    }
    return t;
}

namespace {

// Cumulative unigram^0.75 distribution over word ids 1..n (plus unk when learned).
class NegativeSampler {
public:
    NegativeSampler(const text::UnigramTable& table, bool include_unk) {
        for (std::uint32_t id = 1; id <= table.words(); ++id) {
            ids_.push_back(id);
            acc_ += std::pow(static_cast<double>(std::max<std::size_t>(table.count(id), 1)), 0.75);
            cdf_.push_back(acc_);
        }
        if (include_unk || ids_.empty()) {
            ids_.push_back(table.unk_id());
            acc_ += 1.0;
            cdf_.push_back(acc_);
        }
    }

    template <class Rng>
    std::uint32_t draw(Rng& rng) const {
        const double u = std::uniform_real_distribution<double>(0.0, acc_)(rng);
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) --it;
        return ids_[static_cast<std::size_t>(it - cdf_.begin())];
    }

private:
    std::vector<std::uint32_t> ids_;
    std::vector<double> cdf_;
    double acc_ = 0.0;
};

// One SGD step on a (center, context) pair; mirrors sgns_gradient.
template <class Rng>
void sgd_pair(EmbeddingTable& in, std::vector<double>& out, std::size_t d, std::uint32_t center, std::uint32_t context,
              int negatives, const NegativeSampler& sampler, double lr, Rng& rng, std::vector<double>& grad_center) {
    auto v = in.row(center);
    std::fill(grad_center.begin(), grad_center.end(), 0.0);
    for (int k = 0; k <= negatives; ++k) {
        std::uint32_t target;
        double label;
        if (k == 0) {
            target = context;
            label = 1.0;
        } else {
            target = sampler.draw(rng);
            if (target == context) continue;
            label = 0.0;
        }
        double* u = out.data() + static_cast<std::size_t>(target) * d;
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += u[i] * v[i];
        // Gradient of the loss w.r.t. the score is (sigmoid - label).
        const double g = (sigmoid(s) - label) * lr;
        for (std::size_t i = 0; i < d; ++i) {
            grad_center[i] += g * u[i];
            u[i] -= g * v[i];
        }
    }
    for (std::size_t i = 0; i < d; ++i) v[i] -= grad_center[i];
}

}  // namespace

EmbeddingTable train_skipgram(const std::vector<std::vector<std::uint32_t>>& docs, const text::UnigramTable& table,
                              const SkipGramConfig& cfg, const ExecPolicy& exec) {
    cfg.validate();
    if (docs.empty()) throw_data("skip-gram: empty corpus");
    EmbeddingTable in = initial_table(table, cfg);
    if (cfg.epochs == 0) return in;

    const auto d = static_cast<std::size_t>(cfg.dimension);
    std::vector<double> out(table.rows() * d, 0.0);
    NegativeSampler sampler(table, cfg.learn_unk);
    const std::uint32_t unk = table.unk_id();

    auto usable = [&](std::uint32_t id) { return id != text::UnigramTable::pad_id && (cfg.learn_unk || id != unk); };
    std::size_t total_tokens = 0;
    for (const auto& doc : docs)
        for (auto id : doc) total_tokens += usable(id) ? 1 : 0;
    if (total_tokens == 0) return in;
    const double total_work = double(total_tokens) * cfg.epochs;

    const int threads = exec.racy_threads();
    const long n_docs = static_cast<long>(docs.size());
    std::vector<std::size_t> doc_offset(docs.size() + 1, 0);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        std::size_t c = 0;
        for (auto id : docs[i]) c += usable(id) ? 1 : 0;
        doc_offset[i + 1] = doc_offset[i] + c;
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
#pragma omp parallel num_threads(threads)
        {
#ifdef _OPENMP
            const auto tid = static_cast<std::uint64_t>(omp_get_thread_num());
#else
            const std::uint64_t tid = 0;
#endif
            std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(epoch) * 7919ULL + tid);
            std::vector<double> grad_center(d);
            std::vector<std::uint32_t> words;
#pragma omp for schedule(static)
            for (long di = 0; di < n_docs; ++di) {
                const auto& doc = docs[static_cast<std::size_t>(di)];
                words.clear();
                for (auto id : doc)
                    if (usable(id)) words.push_back(id);
                double done = double(epoch) * double(total_tokens) + double(doc_offset[static_cast<std::size_t>(di)]);
                const long n = static_cast<long>(words.size());
                for (long i = 0; i < n; ++i, done += 1.0) {
                    const double lr = cfg.learning_rate * std::max(1e-4, 1.0 - done / total_work);
                    const long lo = std::max(0L, i - cfg.window);
                    const long hi = std::min(n - 1, i + cfg.window);
                    for (long j = lo; j <= hi; ++j) {
                        if (j == i) continue;
                        sgd_pair(in, out, d, words[static_cast<std::size_t>(i)], words[static_cast<std::size_t>(j)],
                                 cfg.negatives, sampler, lr, rng, grad_center);
                    }
                }
            }
        }
    }
    return in;
}

// ---------------------------------------------------------------------------
// word2vec text format

EmbeddingTable load_embeddings(const std::string& path, const text::UnigramTable& table, LoadReport& report,
                               const LoadOptions& opts) {
    std::ifstream in(path);
    if (!in) throw_data("cannot open embeddings: " + path);
    std::string line;
    if (!std::getline(in, line)) throw_data("embeddings: empty file");
    std::size_t count = 0, dim = 0;
    {
        std::istringstream hs(line);
        if (!(hs >> count >> dim) || dim == 0) throw_data("embeddings: bad header");
    }
    EmbeddingTable t(table.rows(), dim);
    std::vector<bool> filled(table.rows(), false);
    filled[text::UnigramTable::pad_id] = true;

    std::vector<double> vals;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(' ') == std::string::npos) continue;
        std::size_t sp = line.find(' ');
        if (sp == std::string::npos || sp == 0) {
            ++report.malformed;
            continue;
        }
        std::string token = line.substr(0, sp);
        vals.clear();
        bool ok = true;
        const char* p = line.data() + sp;
        const char* end = line.data() + line.size();
        while (p < end) {
            while (p < end && *p == ' ') ++p;
            if (p >= end) break;
            double v = 0.0;
            auto [q, ec] = std::from_chars(p, end, v);
            if (ec != std::errc() || (q < end && *q != ' ')) {
                ok = false;
                break;
            }
            vals.push_back(v);
            p = q;
        }
        if (!ok) {
            ++report.malformed;
            continue;
        }
        if (vals.size() != dim) throw_data("embeddings: dimension mismatch for token '" + token + "'");
        ++report.vectors_read;
        std::uint32_t id;
        if (token == kUnkToken)
            id = table.unk_id();
        else if (table.contains(token))
            id = table.id(token);
        else {
            ++report.unmatched_tokens;
            continue;
        }
        std::copy(vals.begin(), vals.end(), t.row(id).begin());
        filled[id] = true;
        ++report.matched;
    }

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> uni(-0.5 / double(dim), 0.5 / double(dim));
    for (std::uint32_t id = 1; id <= table.words(); ++id) {
        if (filled[id]) continue;
        ++report.missing_words;
        if (opts.random_unmatched)
            for (auto& v : t.row(id)) v = uni(rng);
    }
    return t;
}

void save_embeddings(const std::string& path, const EmbeddingTable& emb, const text::UnigramTable& table) {
    std::ofstream out(path);
    if (!out) throw_data("cannot write embeddings: " + path);
    out << (table.words() + 1) << ' ' << emb.dim() << '\n';
    char buf[64];
    auto write_row = [&](const std::string& token, std::size_t id) {
        out << token;
        for (double v : emb.row(id)) {
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
            out << ' ' << std::string_view(buf, static_cast<std::size_t>(p - buf));
        }
        out << '\n';
    };
    for (std::uint32_t id = 1; id <= table.words(); ++id) write_row(table.word(id), id);
    write_row(kUnkToken, table.unk_id());
}

}  // namespace triage::embed
