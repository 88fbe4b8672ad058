#include "triage/textproc.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace triage::text {

using nlohmann::json;

namespace {

unsigned char lower(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c + 32) : c; }

bool word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool local_part_char(unsigned char c) { return std::isalnum(c) || c == '.' || c == '_' || c == '%' || c == '+' || c == '-'; }

bool domain_char(unsigned char c) { return std::isalnum(c) || c == '.' || c == '-'; }

std::size_t find_marker(const std::string& text) {
    const auto m = kQuoteMarker;
    if (text.size() < m.size()) return std::string::npos;
    for (std::size_t i = 0; i + m.size() <= text.size(); ++i) {
        std::size_t k = 0;
        while (k < m.size() && lower(static_cast<unsigned char>(text[i + k])) == m[k]) ++k;
        if (k == m.size()) return i;
    }
    return std::string::npos;
}

// Blanks out every local@domain span.
void blank_addresses(std::string& text) {
    for (std::size_t at = text.find('@'); at != std::string::npos; at = text.find('@', at + 1)) {
        std::size_t lo = at;
        while (lo > 0 && local_part_char(static_cast<unsigned char>(text[lo - 1]))) --lo;
        std::size_t hi = at + 1;
        while (hi < text.size() && domain_char(static_cast<unsigned char>(text[hi]))) ++hi;
        if (lo == at || hi == at + 1) continue;
        std::fill(text.begin() + static_cast<long>(lo), text.begin() + static_cast<long>(hi), ' ');
    }
}

bool all_digits(const std::string& t) {
    return std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

std::unordered_set<std::string> load_blocklist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_data("cannot open blocklist: " + path);
    std::unordered_set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        std::string tok = line.substr(start);
        for (auto& c : tok) c = static_cast<char>(lower(static_cast<unsigned char>(c)));
        out.insert(std::move(tok));
    }
    return out;
}

std::vector<std::string> clean(std::string_view subject, std::string_view body, const CleanOptions& opts) {
    std::string text;
    text.reserve(subject.size() + body.size() + 1);
    if (opts.include_subject) {
        text.append(subject);
        text.push_back('\n');
    }
    text.append(body);
    if (auto cut = find_marker(text); cut != std::string::npos) text.resize(cut);
    blank_addresses(text);

    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        if (!all_digits(cur) && !opts.blocklist.count(cur)) tokens.push_back(cur);
        cur.clear();
    };
    for (unsigned char c : text) {
        if (word_char(c))
            cur.push_back(static_cast<char>(lower(c)));
        else
            flush();
    }
    flush();
    return tokens;
}

std::vector<std::string> ngrams(const std::vector<std::string>& tokens, int max_order) {
    std::vector<std::string> out;
    const std::size_t n = tokens.size();
    for (int order = 1; order <= max_order; ++order) {
        const auto k = static_cast<std::size_t>(order);
        for (std::size_t i = 0; i + k <= n; ++i) {
            std::string g = tokens[i];
            for (std::size_t j = 1; j < k; ++j) {
                g.push_back(' ');
                g += tokens[i + j];
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

double Vocabulary::idf(std::size_t n_docs, std::size_t df) {
    return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df))) + 1.0;
}

long Vocabulary::lookup(const std::string& t) const {
    auto it = pos_.find(t);
    return it == pos_.end() ? -1 : static_cast<long>(it->second);
}

void Vocabulary::reindex() {
    pos_.clear();
    for (std::size_t i = 0; i < terms_.size(); ++i) pos_[terms_[i].text] = i;
}

json Vocabulary::to_json() const {
    json terms = json::array();
    for (const auto& t : terms_) terms.push_back({{"t", t.text}, {"df", t.df}, {"idf", t.idf}});
    return {{"terms", terms}, {"n_docs", n_docs_}, {"max_order", max_order_}};
}

Vocabulary Vocabulary::from_json(const json& j) {
    Vocabulary v;
    v.n_docs_ = j.at("n_docs").get<std::size_t>();
    v.max_order_ = j.value("max_order", 3);
    for (const auto& t : j.at("terms"))
        v.terms_.push_back({t.at("t").get<std::string>(), t.at("df").get<std::size_t>(), t.at("idf").get<double>()});
    v.reindex();
    return v;
}

Vocabulary build_vocabulary(const std::vector<const std::vector<std::string>*>& docs, const VocabularyOptions& opts,
                            const ExecPolicy& exec) {
    if (docs.size() < 2) throw_data("vocabulary needs at least 2 documents");
    using Counts = std::unordered_map<std::string, std::size_t>;

    // Map: per-thread document frequency tables. Reduce: single-threaded merge.
    const int threads = exec.pure_threads();
    std::vector<Counts> partial(static_cast<std::size_t>(threads));
    const long n = static_cast<long>(docs.size());
#pragma omp parallel for num_threads(threads) schedule(static)
    for (long d = 0; d < n; ++d) {
#ifdef _OPENMP
        auto& counts = partial[static_cast<std::size_t>(omp_get_thread_num())];
#else
        auto& counts = partial[0];
#endif
        auto grams = ngrams(*docs[static_cast<std::size_t>(d)], opts.max_order);
        std::sort(grams.begin(), grams.end());
        grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
        for (auto& g : grams) ++counts[g];
    }
    Counts df = std::move(partial[0]);
    for (std::size_t t = 1; t < partial.size(); ++t)
        for (auto& [k, c] : partial[t]) df[k] += c;

    const double limit = opts.stop_df_fraction * static_cast<double>(docs.size());
    std::vector<std::pair<std::string, std::size_t>> cand;
    cand.reserve(df.size());
    for (auto& [k, c] : df)
        if (static_cast<double>(c) <= limit) cand.emplace_back(k, c);
    auto better = [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; };
    if (cand.size() > opts.max_size) {
        std::nth_element(cand.begin(), cand.begin() + static_cast<long>(opts.max_size), cand.end(), better);
        cand.resize(opts.max_size);
    }
    std::sort(cand.begin(), cand.end(), better);

    Vocabulary v;
    v.n_docs_ = docs.size();
    v.max_order_ = opts.max_order;
    for (auto& [k, c] : cand) v.terms_.push_back({k, c, Vocabulary::idf(docs.size(), c)});
    v.reindex();
    return v;
}

// ---------------------------------------------------------------------------
// UnigramTable

UnigramTable::UnigramTable(std::vector<std::string> words, std::vector<std::size_t> counts)
    : words_(std::move(words)), counts_(std::move(counts)) {
    if (counts_.empty()) counts_.assign(words_.size(), 1);
    if (counts_.size() != words_.size()) throw_data("unigram table: counts/words size mismatch");
    for (std::size_t i = 0; i < words_.size(); ++i) pos_[words_[i]] = static_cast<std::uint32_t>(i + 1);
}

std::uint32_t UnigramTable::id(const std::string& w) const {
    auto it = pos_.find(w);
    return it == pos_.end() ? unk_id() : it->second;
}

json UnigramTable::to_json() const { return {{"words", words_}, {"counts", counts_}}; }

UnigramTable UnigramTable::from_json(const json& j) {
    return UnigramTable(j.at("words").get<std::vector<std::string>>(), j.at("counts").get<std::vector<std::size_t>>());
}

UnigramTable UnigramTable::build(const std::vector<const std::vector<std::string>*>& docs, std::size_t min_count,
                                 std::size_t max_words) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto* d : docs)
        for (const auto& t : *d) ++counts[t];
    std::vector<std::pair<std::string, std::size_t>> items;
    for (auto& [w, c] : counts)
        if (c >= min_count) items.emplace_back(w, c);
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
    if (items.size() > max_words) items.resize(max_words);
    std::vector<std::string> words;
    std::vector<std::size_t> cs;
    for (auto& [w, c] : items) {
        words.push_back(w);
        cs.push_back(c);
    }
    return UnigramTable(std::move(words), std::move(cs));
}

std::vector<std::uint32_t> to_sequence(const std::vector<std::string>& tokens, const UnigramTable& table,
                                       std::size_t length) {
    std::vector<std::uint32_t> ids(length, UnigramTable::pad_id);
    const std::size_t n = std::min(length, tokens.size());
    for (std::size_t i = 0; i < n; ++i) ids[i] = table.id(tokens[i]);
    return ids;
}

}  // namespace triage::text
