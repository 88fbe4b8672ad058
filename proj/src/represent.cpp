#include "triage/represent.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

namespace triage::repr {

using nlohmann::json;

const char* to_string(Content c) {
    switch (c) {
        case Content::tfidf: return "TFIDF";
        case Content::embed: return "Embed";
        case Content::cnn: return "CNN";
    }
    return "?";
}

Content content_from_string(const std::string& s) {
    std::string u;
    for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (u == "TFIDF") return Content::tfidf;
    if (u == "EMBED") return Content::embed;
    if (u == "CNN") return Content::cnn;
    throw_usage("unknown content variant: " + s);
}

double EmailVector::norm() const { return is_sparse() ? sparse.norm() : std::sqrt(triage::dot(dense, dense)); }

double dot(const EmailVector& a, const EmailVector& b) {
    if (a.dim() != b.dim()) throw_data("email vector dimension mismatch");
    if (a.is_sparse() && b.is_sparse()) return triage::dot(a.sparse, b.sparse);
    if (!a.is_sparse() && !b.is_sparse()) return triage::dot(a.dense, b.dense);
    const auto& s = a.is_sparse() ? a.sparse : b.sparse;
    const auto& d = a.is_sparse() ? b.dense : a.dense;
    double acc = 0.0;
    for (std::size_t k = 0; k < s.index.size(); ++k) acc += s.value[k] * d[s.index[k]];
    return acc;
}

EmailVector tfidf_vector(const std::vector<std::string>& tokens, const text::Vocabulary& vocab) {
    std::map<std::uint32_t, double> counts;
    for (const auto& g : text::ngrams(tokens, vocab.max_order())) {
        long id = vocab.lookup(g);
        if (id >= 0) counts[static_cast<std::uint32_t>(id)] += 1.0;
    }
    EmailVector v;
    v.variant = Content::tfidf;
    v.sparse.dim = vocab.size();
    double ss = 0.0;
    for (auto [id, tf] : counts) {
        const double w = tf * vocab.term(id).idf;
        v.sparse.index.push_back(id);
        v.sparse.value.push_back(w);
        ss += w * w;
    }
    if (ss > 0.0) {
        const double inv = 1.0 / std::sqrt(ss);
        for (auto& w : v.sparse.value) w *= inv;
    }
    return v;
}

EmailVector embed_mean(std::span<const std::uint32_t> sequence, const embed::EmbeddingTable& table) {
    EmailVector v;
    v.variant = Content::embed;
    v.dense.assign(table.dim(), 0.0);
    std::size_t n = 0;
    for (auto id : sequence) {
        if (id == text::UnigramTable::pad_id) continue;
        axpy(1.0, table.row(id), v.dense);
        ++n;
    }
    if (n > 0)
        for (auto& x : v.dense) x /= static_cast<double>(n);
    return v;
}

// ---------------------------------------------------------------------------
// CNN

std::size_t CnnParams::output_dim() const {
    return static_cast<std::size_t>(std::accumulate(filters.begin(), filters.end(), 0));
}

int CnnParams::max_width() const { return widths.empty() ? 0 : *std::max_element(widths.begin(), widths.end()); }

std::size_t CnnParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
    return n;
}

bool CnnParams::all_finite() const {
    auto fin = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
    return std::all_of(weights.begin(), weights.end(), fin) && std::all_of(biases.begin(), biases.end(), fin);
}

bool CnnParams::same_shape(const CnnParams& o) const {
    if (widths != o.widths || filters != o.filters || dim != o.dim) return false;
    if (weights.size() != o.weights.size() || biases.size() != o.biases.size()) return false;
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (weights[i].size() != o.weights[i].size() || biases[i].size() != o.biases[i].size()) return false;
    return true;
}

CnnParams CnnParams::init(std::vector<int> widths, std::vector<int> filters, int dim, std::uint64_t seed) {
    if (widths.size() != filters.size() || widths.empty()) throw_usage("cnn: widths and filter counts must align");
    CnnParams p;
    p.widths = std::move(widths);
    p.filters = std::move(filters);
    p.dim = dim;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < p.widths.size(); ++i) {
        if (p.widths[i] < 1 || p.filters[i] < 1) throw_usage("cnn: widths and filter counts must be positive");
        const std::size_t fan_in = static_cast<std::size_t>(p.widths[i] * dim);
        const double limit = std::sqrt(6.0 / double(fan_in + static_cast<std::size_t>(p.filters[i])));
        std::uniform_real_distribution<double> uni(-limit, limit);
        std::vector<double> w(fan_in * static_cast<std::size_t>(p.filters[i]));
        for (auto& x : w) x = uni(rng);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(static_cast<std::size_t>(p.filters[i]), 0.0);
    }
    return p;
}

CnnParams CnnParams::zeros_like() const {
    CnnParams z;
    z.widths = widths;
    z.filters = filters;
    z.dim = dim;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        z.weights.emplace_back(weights[i].size(), 0.0);
        z.biases.emplace_back(biases[i].size(), 0.0);
    }
    return z;
}

std::vector<std::span<double>> CnnParams::blocks() {
    std::vector<std::span<double>> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out.emplace_back(weights[i]);
        out.emplace_back(biases[i]);
    }
    return out;
}

json CnnParams::to_json() const {
    return {{"widths", widths}, {"filters", filters}, {"dim", dim}, {"weights", weights}, {"biases", biases}};
}

CnnParams CnnParams::from_json(const json& j) {
    CnnParams p;
    p.widths = j.at("widths").get<std::vector<int>>();
    p.filters = j.at("filters").get<std::vector<int>>();
    p.dim = j.at("dim").get<int>();
    p.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    p.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    if (p.weights.size() != p.widths.size() || p.biases.size() != p.widths.size())
        throw_data("cnn checkpoint: block count mismatch");
    for (std::size_t i = 0; i < p.widths.size(); ++i) {
        if (p.weights[i].size() != static_cast<std::size_t>(p.widths[i] * p.dim * p.filters[i]) ||
            p.biases[i].size() != static_cast<std::size_t>(p.filters[i]))
            throw_data("cnn checkpoint: block shape mismatch");
    }
    return p;
}

namespace {

std::vector<double> embed_matrix(std::span<const std::uint32_t> seq, const embed::EmbeddingTable& table) {
    const std::size_t d = table.dim();
    std::vector<double> x(seq.size() * d);
    for (std::size_t t = 0; t < seq.size(); ++t) {
        auto r = table.row(seq[t]);
        std::copy(r.begin(), r.end(), x.begin() + static_cast<long>(t * d));
    }
    return x;
}

}  // namespace

std::vector<double> cnn_forward(std::span<const std::uint32_t> sequence, const embed::EmbeddingTable& table,
                                const CnnParams& params, CnnCache* cache) {
    if (static_cast<int>(table.dim()) != params.dim) throw_data("cnn: embedding dimension mismatch");
    if (static_cast<int>(sequence.size()) < params.max_width()) throw_data("cnn: sequence shorter than widest filter");
    if (!params.all_finite()) throw_training("cnn: non-finite parameter");

    const std::size_t d = table.dim();
    const std::size_t L = sequence.size();
    const std::vector<double> x = embed_matrix(sequence, table);
    std::vector<double> out;
    out.reserve(params.output_dim());
    if (cache) {
        cache->argmax.assign(params.widths.size(), {});
        cache->pooled_pre.assign(params.widths.size(), {});
    }
    for (std::size_t b = 0; b < params.widths.size(); ++b) {
        const auto w = static_cast<std::size_t>(params.widths[b]);
        const auto nf = static_cast<std::size_t>(params.filters[b]);
        const std::size_t span = w * d;
        const std::size_t positions = L - w + 1;
        const double* W = params.weights[b].data();
        std::vector<double> best(nf, 0.0);
        std::vector<std::uint32_t> arg(nf, 0);
        for (std::size_t f = 0; f < nf; ++f) {
            const double* wf = W + f * span;
            double mx = 0.0;
            std::uint32_t am = 0;
            for (std::size_t t = 0; t < positions; ++t) {
                const double* xt = x.data() + t * d;
                double a = params.biases[b][f];
                for (std::size_t k = 0; k < span; ++k) a += wf[k] * xt[k];
                // Strict comparison keeps the first maximizer.
                if (t == 0 || a > mx) {
                    mx = a;
                    am = static_cast<std::uint32_t>(t);
                }
            }
            best[f] = mx;
            arg[f] = am;
            out.push_back(mx > 0.0 ? mx : 0.0);
        }
        if (cache) {
            cache->argmax[b] = std::move(arg);
            cache->pooled_pre[b] = std::move(best);
        }
    }
    return out;
}

void cnn_backward(std::span<const double> upstream, std::span<const std::uint32_t> sequence,
                  const embed::EmbeddingTable& table, const CnnParams& params, const CnnCache& cache, CnnParams& grad) {
    if (upstream.size() != params.output_dim()) throw_data("cnn_backward: upstream size mismatch");
    if (!grad.same_shape(params)) throw_data("cnn_backward: gradient buffer shape mismatch");
    if (cache.argmax.size() != params.widths.size()) throw_data("cnn_backward: cache does not match parameters");
    const std::size_t d = table.dim();
    std::size_t o = 0;
    std::vector<double> x;
    for (std::size_t b = 0; b < params.widths.size(); ++b) {
        const auto w = static_cast<std::size_t>(params.widths[b]);
        const auto nf = static_cast<std::size_t>(params.filters[b]);
        const std::size_t span = w * d;
        if (cache.argmax[b].size() != nf) throw_data("cnn_backward: cache does not match parameters");
        for (std::size_t f = 0; f < nf; ++f, ++o) {
            const double g = upstream[o];
            if (g == 0.0 || cache.pooled_pre[b][f] <= 0.0) continue;
            if (x.empty()) x = embed_matrix(sequence, table);
            const double* xt = x.data() + static_cast<std::size_t>(cache.argmax[b][f]) * d;
            double* gw = grad.weights[b].data() + f * span;
            for (std::size_t k = 0; k < span; ++k) gw[k] += g * xt[k];
            grad.biases[b][f] += g;
        }
    }
}

}  // namespace triage::repr
