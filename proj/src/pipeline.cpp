#include "triage/pipeline.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

namespace triage {

using nlohmann::json;
using corpus::Partition;

const char* to_string(Classifier c) {
    switch (c) {
        case Classifier::lr: return "LR";
        case Classifier::mlp: return "MLP";
        case Classifier::gbdt: return "GBDT";
    }
    return "?";
}

Classifier classifier_from_string(const std::string& s) {
    std::string u;
    for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (u == "LR") return Classifier::lr;
    if (u == "MLP") return Classifier::mlp;
    if (u == "GBDT") return Classifier::gbdt;
    throw_usage("unknown classifier: " + s);
}

namespace {

bool trainable(user::AggregationKind k) {
    return k == user::AggregationKind::learned_global || k == user::AggregationKind::concat;
}

}  // namespace

bool CellSpec::uses_network() const {
    if (content == repr::Content::cnn) return true;
    if (content == repr::Content::embed) return classifier == Classifier::mlp || trainable(aggregation);
    return false;
}

std::string CellSpec::label() const {
    return std::string(repr::to_string(content)) + "-" + to_string(classifier) + " " + user::to_string(mode) +
           (similarity ? " +sim" : " -sim") + " h=" + std::to_string(history_len) + " " + user::to_string(aggregation);
}

json CellSpec::to_json() const {
    return {{"content", repr::to_string(content)},
            {"mode", user::to_string(mode)},
            {"classifier", to_string(classifier)},
            {"similarity", similarity},
            {"history_len", history_len},
            {"aggregation", user::to_string(aggregation)}};
}

CellSpec CellSpec::from_json(const json& j, CellSpec c) {
    if (j.contains("content")) c.content = repr::content_from_string(j.at("content").get<std::string>());
    if (j.contains("mode")) c.mode = user::mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("classifier")) c.classifier = classifier_from_string(j.at("classifier").get<std::string>());
    c.similarity = j.value("similarity", c.similarity);
    c.history_len = j.value("history_len", c.history_len);
    if (j.contains("aggregation")) c.aggregation = user::aggregation_from_string(j.at("aggregation").get<std::string>());
    if (c.history_len < 1) throw_usage("history_len must be >= 1");
    if (c.content == repr::Content::tfidf && trainable(c.aggregation))
        throw_usage("aggregation " + std::string(user::to_string(c.aggregation)) + " needs dense email vectors");
    return c;
}

json TextConfig::to_json() const {
    return {{"include_subject", clean.include_subject},
            {"blocklist", blocklist_path},
            {"vocab_size", vocab.max_size},
            {"max_order", vocab.max_order},
            {"stop_df_fraction", vocab.stop_df_fraction},
            {"seq_len", seq_len},
            {"unigram_min_count", unigram_min_count},
            {"unigram_max", unigram_max}};
}

json ExperimentConfig::to_json() const {
    json j = {{"seed", seed},
              {"text", text.to_json()},
              {"embeddings", text.skipgram.to_json()},
              {"cell", cell.to_json()},
              {"lr", lr.to_json()},
              {"mlp", mlp.to_json()},
              {"gbdt", gbdt.to_json()},
              {"network", network.to_json()},
              {"gamma", gamma},
              {"deep_seeds", deep_seeds},
              {"search_budget", search_budget},
              {"histogram_bins", histogram_bins}};
    j["embeddings"]["path"] = text.embeddings_path;
    if (split)
        j["split"] = {{"train_end", split->train_end},
                      {"validation_end", split->validation_end},
                      {"test_end", split->test_end}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    c.exec.threads = j.value("threads", c.exec.threads);
    c.exec.deterministic = j.value("deterministic", c.exec.deterministic);
    if (j.contains("split")) {
        const auto& s = j.at("split");
        corpus::SplitSpec sp{s.at("train_end").get<Timestamp>(), s.at("validation_end").get<Timestamp>(),
                             s.at("test_end").get<Timestamp>()};
        sp.validate();
        c.split = sp;
    }
    if (j.contains("text")) {
        const auto& t = j.at("text");
        c.text.clean.include_subject = t.value("include_subject", true);
        c.text.blocklist_path = t.value("blocklist", std::string());
        c.text.vocab.max_size = t.value("vocab_size", c.text.vocab.max_size);
        c.text.vocab.max_order = t.value("max_order", c.text.vocab.max_order);
        c.text.vocab.stop_df_fraction = t.value("stop_df_fraction", c.text.vocab.stop_df_fraction);
        c.text.seq_len = t.value("seq_len", c.text.seq_len);
        c.text.unigram_min_count = t.value("unigram_min_count", c.text.unigram_min_count);
        c.text.unigram_max = t.value("unigram_max", c.text.unigram_max);
        if (c.text.seq_len < 1) throw_usage("text.seq_len must be >= 1");
    }
    if (!c.text.blocklist_path.empty()) c.text.clean.blocklist = text::load_blocklist(c.text.blocklist_path);
    if (j.contains("embeddings")) {
        c.text.skipgram = embed::SkipGramConfig::from_json(j.at("embeddings"));
        c.text.embeddings_path = j.at("embeddings").value("path", std::string());
    }
    if (j.contains("cell")) c.cell = CellSpec::from_json(j.at("cell"));
    if (j.contains("lr")) c.lr = learn::LrConfig::from_json(j.at("lr"));
    if (j.contains("mlp")) c.mlp = learn::MlpConfig::from_json(j.at("mlp"));
    if (j.contains("gbdt")) c.gbdt = learn::GbdtConfig::from_json(j.at("gbdt"));
    if (j.contains("network")) c.network = learn::NetworkConfig::from_json(j.at("network"));
    c.gamma = j.value("gamma", c.gamma);
    c.deep_seeds = j.value("deep_seeds", c.deep_seeds);
    c.search_budget = j.value("search_budget", c.search_budget);
    c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
    if (c.deep_seeds < 1) throw_usage("deep_seeds must be >= 1");
    if (c.histogram_bins < 1) throw_usage("histogram_bins must be >= 1");
    if (!(c.gamma >= 0.0)) throw_usage("gamma must be >= 0");
    return c;
}

// ---------------------------------------------------------------------------

text::CleanOptions TextArtifacts::clean_options() const {
    text::CleanOptions o;
    o.include_subject = include_subject;
    o.blocklist.insert(blocklist.begin(), blocklist.end());
    return o;
}

double TextArtifacts::rate(const std::string& recipient) const {
    auto it = reply_rate.find(recipient);
    return it == reply_rate.end() ? 0.0 : it->second;
}

json TextArtifacts::to_json() const {
    json j = {{"vocabulary", vocab.to_json()},
              {"unigrams", unigrams.to_json()},
              {"reply_rate", reply_rate},
              {"seq_len", seq_len},
              {"include_subject", include_subject},
              {"blocklist", blocklist}};
    if (embeddings) j["embeddings"] = embeddings->to_json();
    return j;
}

TextArtifacts TextArtifacts::from_json(const json& j) {
    TextArtifacts a;
    a.vocab = text::Vocabulary::from_json(j.at("vocabulary"));
    a.unigrams = text::UnigramTable::from_json(j.at("unigrams"));
    a.reply_rate = j.at("reply_rate").get<std::map<std::string, double>>();
    a.seq_len = j.at("seq_len").get<std::size_t>();
    a.max_order = a.vocab.max_order();
    a.include_subject = j.value("include_subject", true);
    a.blocklist = j.value("blocklist", std::vector<std::string>{});
    if (j.contains("embeddings")) {
        a.embeddings = embed::EmbeddingTable::from_json(j.at("embeddings"));
        if (a.embeddings->rows() != a.unigrams.rows()) throw_data("checkpoint: embedding rows do not match unigram table");
    }
    return a;
}

std::map<std::string, double> reply_rates(const corpus::MailboxIndex& index, const corpus::Splits& splits,
                                          const corpus::SplitSpec& spec, Audit* audit) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    for (auto i : splits.train) {
        const auto& e = index.email(i);
        if (audit) audit->touch(Audit::Stage::reply_rate, e.timestamp, e.email_id);
        auto& c = counts[e.recipient_id];
        ++c.first;
        if (e.replied && e.reply_timestamp && *e.reply_timestamp <= spec.train_end) ++c.second;
    }
    std::map<std::string, double> out;
    for (const auto& [r, c] : counts) out[r] = double(c.second) / double(c.first);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Encoded {
    std::vector<std::string> tokens;
    repr::EmailVector tfidf;
    repr::EmailVector embed;
    std::vector<std::uint32_t> sequence;
};

Encoded encode_text(const std::string& subject, const std::string& body, const TextArtifacts& art,
                    const text::CleanOptions& opts) {
    Encoded e;
    e.tokens = text::clean(subject, body, opts);
    e.tfidf = repr::tfidf_vector(e.tokens, art.vocab);
    e.sequence = text::to_sequence(e.tokens, art.unigrams, art.seq_len);
    if (art.embeddings) {
        const auto full = text::to_sequence(e.tokens, art.unigrams, e.tokens.size());
        e.embed = repr::embed_mean(full, *art.embeddings);
    }
    return e;
}

void store(EmailBank& bank, std::size_t i, Encoded&& e) {
    bank.tokens[i] = std::move(e.tokens);
    bank.tfidf[i] = std::move(e.tfidf);
    bank.sequences[i] = std::move(e.sequence);
    bank.embed_dense[i] = e.embed.dense;
    bank.embed[i] = std::move(e.embed);
}

void resize(EmailBank& bank, std::size_t n) {
    bank.tokens.resize(n);
    bank.tfidf.resize(n);
    bank.embed.resize(n);
    bank.embed_dense.resize(n);
    bank.sequences.resize(n);
}

EmailBank build_bank(const corpus::MailboxIndex& index, const TextArtifacts& art, const ExecPolicy& exec) {
    EmailBank bank;
    resize(bank, index.size());
    const auto opts = art.clean_options();
    const long n = static_cast<long>(index.size());
#pragma omp parallel for num_threads(exec.pure_threads()) schedule(dynamic, 64)
    for (long i = 0; i < n; ++i) {
        const auto& e = index.email(static_cast<std::size_t>(i));
        store(bank, static_cast<std::size_t>(i), encode_text(e.subject, e.body, art, opts));
    }
    return bank;
}

}  // namespace

void EmailBank::add(const std::string& subject, const std::string& body, const TextArtifacts& art) {
    const std::size_t i = size();
    resize(*this, i + 1);
    store(*this, i, encode_text(subject, body, art, art.clean_options()));
}

PreparedCorpus PreparedCorpus::fit(corpus::IngestResult data, const corpus::SplitSpec& spec, const TextConfig& cfg,
                                   bool need_embeddings, std::uint64_t seed, const ExecPolicy& exec, Audit* audit) {
    spec.validate();
    PreparedCorpus pc;
    pc.data = std::move(data);
    pc.spec = spec;
    pc.splits = corpus::split(pc.data.index, spec, &pc.data.report);
    const auto& index = pc.data.index;

    // Train+validation documents, one per source message.
    std::vector<std::size_t> doc_emails;
    {
        std::unordered_set<std::string> seen;
        std::vector<std::size_t> tv(pc.splits.train);
        tv.insert(tv.end(), pc.splits.validation.begin(), pc.splits.validation.end());
        std::sort(tv.begin(), tv.end());
        for (auto i : tv)
            if (seen.insert(index.email(i).source_message_id).second) doc_emails.push_back(i);
    }
    std::vector<std::vector<std::string>> doc_tokens(doc_emails.size());
    const long nd = static_cast<long>(doc_emails.size());
#pragma omp parallel for num_threads(exec.pure_threads()) schedule(dynamic, 64)
    for (long k = 0; k < nd; ++k) {
        const auto& e = index.email(doc_emails[static_cast<std::size_t>(k)]);
        doc_tokens[static_cast<std::size_t>(k)] = text::clean(e.subject, e.body, cfg.clean);
    }
    std::vector<const std::vector<std::string>*> docs;
    for (const auto& d : doc_tokens) docs.push_back(&d);
    if (audit)
        for (auto i : doc_emails) audit->touch(Audit::Stage::vocabulary, index.email(i).timestamp, index.email(i).email_id);

    auto& art = pc.art;
    art.vocab = text::build_vocabulary(docs, cfg.vocab, exec);
    art.unigrams = text::UnigramTable::build(docs, cfg.unigram_min_count, cfg.unigram_max);
    art.seq_len = cfg.seq_len;
    art.max_order = cfg.vocab.max_order;
    art.include_subject = cfg.clean.include_subject;
    art.blocklist.assign(cfg.clean.blocklist.begin(), cfg.clean.blocklist.end());
    std::sort(art.blocklist.begin(), art.blocklist.end());

    if (need_embeddings) {
        if (!cfg.embeddings_path.empty()) {
            embed::LoadReport rep;
            art.embeddings = embed::load_embeddings(cfg.embeddings_path, art.unigrams, rep);
        } else {
            std::vector<std::vector<std::uint32_t>> ids;
            ids.reserve(docs.size());
            for (const auto* d : docs) ids.push_back(text::to_sequence(*d, art.unigrams, d->size()));
            if (audit)
                for (auto i : doc_emails)
                    audit->touch(Audit::Stage::embedding, index.email(i).timestamp, index.email(i).email_id);
            auto sg = cfg.skipgram;
            sg.seed = seed;
            art.embeddings = embed::train_skipgram(ids, art.unigrams, sg, exec);
        }
    }
    art.reply_rate = reply_rates(index, pc.splits, spec, audit);
    pc.bank = build_bank(index, art, exec);
    return pc;
}

PreparedCorpus PreparedCorpus::with_artifacts(corpus::IngestResult data, const corpus::SplitSpec& spec,
                                              TextArtifacts art) {
    PreparedCorpus pc;
    pc.data = std::move(data);
    pc.spec = spec;
    pc.splits = corpus::split(pc.data.index, spec, &pc.data.report);
    pc.art = std::move(art);
    pc.bank = build_bank(pc.data.index, pc.art, ExecPolicy{});
    return pc;
}

// ---------------------------------------------------------------------------

std::vector<int> ExampleSet::labels() const {
    std::vector<int> y;
    y.reserve(examples.size());
    for (const auto& e : examples) y.push_back(e.label);
    return y;
}

namespace {

learn::NetExample make_example(const corpus::MailboxIndex& index, std::uint32_t bank_id, const std::string& recipient,
                               Timestamp t, double reply_rate, int label, const user::HistoryConfig& hcfg,
                               Audit* audit) {
    learn::NetExample ex;
    ex.email = bank_id;
    const auto h = user::select_history(index, recipient, t, hcfg, audit);
    for (auto i : h.primary) ex.primary.push_back(static_cast<std::uint32_t>(i));
    for (auto i : h.negative) ex.negative.push_back(static_cast<std::uint32_t>(i));
    ex.reply_rate = reply_rate;
    ex.label = label;
    return ex;
}

}  // namespace

ExampleSet build_examples(const PreparedCorpus& pc, Partition part, const user::HistoryConfig& hcfg, Audit* audit) {
    hcfg.validate();
    const auto& index = pc.index();
    std::vector<std::size_t> order(pc.splits[part]);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ea = index.email(a);
        const auto& eb = index.email(b);
        return std::tie(ea.recipient_id, ea.timestamp, ea.email_id) < std::tie(eb.recipient_id, eb.timestamp, eb.email_id);
    });
    ExampleSet set;
    set.examples.reserve(order.size());
    for (auto i : order) {
        const auto& e = index.email(i);
        set.examples.push_back(make_example(index, static_cast<std::uint32_t>(i), e.recipient_id, e.timestamp,
                                            pc.art.rate(e.recipient_id), e.replied ? 1 : 0, hcfg, audit));
        set.ids.push_back(e.email_id);
    }
    return set;
}

learn::FeatureLayout layout_for(const CellSpec& cell, const TextArtifacts& art, const learn::NetworkConfig& net) {
    learn::FeatureLayout l;
    l.content = cell.content;
    l.mode = cell.mode;
    l.similarity = cell.similarity;
    switch (cell.content) {
        case repr::Content::tfidf: l.email_dim = art.vocab.size(); break;
        case repr::Content::embed:
            if (!art.embeddings) throw_usage("Embed content needs an embedding table");
            l.email_dim = art.embeddings->dim();
            break;
        case repr::Content::cnn: {
            std::size_t d = 0;
            for (int f : net.filters) d += static_cast<std::size_t>(f);
            l.email_dim = d;
            break;
        }
    }
    if (l.email_dim == 0) throw_data("email representation has zero width");
    return l;
}

learn::Dataset build_dataset(const EmailBank& bank, const ExampleSet& set, const CellSpec& cell,
                             const learn::FeatureLayout& layout, const user::AttentionParams& attention,
                             std::vector<double>* contrast, const ExecPolicy& exec) {
    if (cell.content == repr::Content::cnn) throw_usage("CNN content has no fixed feature rows");
    const auto& vecs = cell.content == repr::Content::tfidf ? bank.tfidf : bank.embed;
    const std::size_t n = set.examples.size();
    std::vector<SparseVector> rows(n);
    std::vector<double> con(n, 0.0);
    const bool paired = cell.mode == user::HistoryMode::posneg;
    const long nl = static_cast<long>(n);
#pragma omp parallel for num_threads(exec.pure_threads()) schedule(dynamic, 32)
    for (long k = 0; k < nl; ++k) {
        const auto& ex = set.examples[static_cast<std::size_t>(k)];
        const auto& F = vecs[ex.email];
        auto ptrs = [&](const std::vector<std::uint32_t>& ids) {
            std::vector<const repr::EmailVector*> out;
            for (auto i : ids) out.push_back(&vecs[i]);
            return out;
        };
        user::UserRepresentation ur;
        ur.mode = cell.mode;
        ur.primary = user::aggregate(F, ptrs(ex.primary), attention, layout.email_dim);
        ur.primary_count = ex.primary.size();
        if (paired) {
            ur.negative = user::aggregate(F, ptrs(ex.negative), attention, layout.email_dim);
            ur.negative_count = ex.negative.size();
        }
        const auto sims = user::similarity(F, ur);
        con[static_cast<std::size_t>(k)] = sims.contrast;
        rows[static_cast<std::size_t>(k)] =
            learn::assemble(layout, F, ur, cell.similarity ? std::optional(sims) : std::nullopt, ex.reply_rate);
    }
    std::size_t nnz = 0;
    for (const auto& r : rows) nnz += r.nnz();
    learn::Dataset d(layout.width());
    d.reserve(n, nnz);
    for (std::size_t k = 0; k < n; ++k) {
        d.add(rows[k], set.examples[k].label, set.ids[k]);
        SparseVector().index.swap(rows[k].index);
        std::vector<double>().swap(rows[k].value);
    }
    if (contrast) *contrast = std::move(con);
    return d;
}

// ---------------------------------------------------------------------------

namespace {

learn::EncoderBank encoder_bank(const EmailBank& bank, const TextArtifacts& art, bool cnn) {
    learn::EncoderBank b;
    if (cnn) {
        if (!art.embeddings) throw_usage("CNN content needs an embedding table");
        b.sequences = &bank.sequences;
        b.table = &*art.embeddings;
    } else {
        b.fixed = &bank.embed_dense;
    }
    return b;
}

// Network-derived rows for a downstream GBDT or LR.
learn::Dataset network_rows(const learn::NetworkModel& net, const std::vector<std::vector<double>>& enc,
                            const ExampleSet& set, std::vector<double>* contrast, const ExecPolicy& exec) {
    const std::size_t n = set.examples.size();
    std::vector<SparseVector> rows(n);
    std::vector<double> con(n);
    const long nl = static_cast<long>(n);
#pragma omp parallel for num_threads(exec.pure_threads()) schedule(static)
    for (long k = 0; k < nl; ++k) {
        auto f = learn::network_forward(net, enc, set.examples[static_cast<std::size_t>(k)]);
        rows[static_cast<std::size_t>(k)] = SparseVector::from_dense(f.input);
        con[static_cast<std::size_t>(k)] = f.sims.contrast;
    }
    learn::Dataset d(net.layout.width());
    for (std::size_t k = 0; k < n; ++k) d.add(rows[k], set.examples[k].label, set.ids[k]);
    if (contrast) *contrast = std::move(con);
    return d;
}

double safe_auroc(const std::vector<double>& p, const std::vector<int>& y) {
    const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    if (pos == 0 || pos == y.size()) return 0.0;
    return eval::auroc(p, y);
}

}  // namespace

std::vector<double> TrainedCell::predict(const EmailBank& bank, const ExampleSet& set, const ExecPolicy& exec,
                                         std::vector<double>* contrast) const {
    // Network-based cells need the encoder bank; artifacts are carried by the caller.
    if (network) throw_usage("network cells are scored through predict_with_artifacts");
    const auto d = build_dataset(bank, set, cell, layout, attention, contrast, exec);
    if (lr) return lr->predict_proba(d, exec);
    if (mlp) return mlp->predict_proba(d, exec);
    if (gbdt) return gbdt->predict_proba(d, exec);
    throw_usage("cell has no trained model");
}

namespace {

std::vector<double> predict_cell(const TrainedCell& tc, const EmailBank& bank, const TextArtifacts& art,
                                 const ExampleSet& set, const ExecPolicy& exec, std::vector<double>* contrast) {
    if (!tc.network) return tc.predict(bank, set, exec, contrast);
    const auto eb = encoder_bank(bank, art, tc.network->cnn_encoder);
    if (tc.cell.classifier == Classifier::mlp && !contrast)
        return learn::network_predict(*tc.network, eb, set.examples, exec);
    const auto enc = learn::encode_all(*tc.network, eb, exec);
    if (tc.cell.classifier == Classifier::mlp) {
        std::vector<double> p(set.examples.size());
        contrast->assign(set.examples.size(), 0.0);
        for (std::size_t k = 0; k < set.examples.size(); ++k) {
            auto f = learn::network_forward(*tc.network, enc, set.examples[k]);
            p[k] = sigmoid(f.logit);
            (*contrast)[k] = f.sims.contrast;
        }
        return p;
    }
    const auto d = network_rows(*tc.network, enc, set, contrast, exec);
    if (tc.gbdt) return tc.gbdt->predict_proba(d, exec);
    if (tc.lr) return tc.lr->predict_proba(d, exec);
    throw_usage("network cell has no downstream model");
}

}  // namespace

TrainedCell train_cell(const PreparedCorpus& pc, const CellSpec& cell, const ExperimentConfig& cfg, std::uint64_t seed,
                       Audit* audit, const ExampleSet* train, const ExampleSet* val) {
    const user::HistoryConfig hcfg{cell.mode, cell.history_len};
    ExampleSet tr_own, va_own;
    if (!train) {
        tr_own = build_examples(pc, Partition::train, hcfg, audit);
        train = &tr_own;
    }
    if (!val) {
        va_own = build_examples(pc, Partition::validation, hcfg, audit);
        val = &va_own;
    }
    if (audit) {
        for (const auto& ex : train->examples)
            audit->touch(Audit::Stage::fitting, pc.index().email(ex.email).timestamp, pc.index().email(ex.email).email_id);
        for (const auto& ex : val->examples)
            audit->touch(Audit::Stage::tuning, pc.index().email(ex.email).timestamp, pc.index().email(ex.email).email_id);
    }

    TrainedCell tc;
    tc.cell = cell;
    tc.seed = seed;
    tc.layout = layout_for(cell, pc.art, cfg.network);
    const auto y_val = val->labels();

    if (cell.uses_network()) {
        const bool cnn = cell.content == repr::Content::cnn;
        const auto eb = encoder_bank(pc.bank, pc.art, cnn);
        auto init = learn::NetworkModel::init(tc.layout, cnn, static_cast<int>(pc.art.embeddings->dim()), cell.aggregation,
                                              cell.history_len, cfg.gamma, cfg.network, seed);
        tc.network = learn::train_network(std::move(init), eb, train->examples, val->examples, cfg.network, seed, cfg.exec);
        tc.effective_config = cfg.network.to_json();
        if (cell.classifier != Classifier::mlp) {
            const auto enc = learn::encode_all(*tc.network, eb, cfg.exec);
            const auto dtr = network_rows(*tc.network, enc, *train, nullptr, cfg.exec);
            const auto dva = network_rows(*tc.network, enc, *val, nullptr, cfg.exec);
            if (cell.classifier == Classifier::gbdt) {
                tc.gbdt = learn::train_gbdt(dtr, cfg.gbdt, cfg.exec);
                tc.effective_config = {{"network", cfg.network.to_json()}, {"gbdt", cfg.gbdt.to_json()}};
            } else {
                auto lc = cfg.lr;
                lc.seed = seed;
                tc.lr = learn::train_lr(dtr, &dva, lc, cfg.exec);
                tc.effective_config = {{"network", cfg.network.to_json()}, {"lr", lc.to_json()}};
            }
        }
    } else {
        if (trainable(cell.aggregation))
            throw_usage("aggregation " + std::string(user::to_string(cell.aggregation)) +
                        " needs a jointly trained network");
        tc.attention = user::AttentionParams::make(cell.aggregation, static_cast<std::size_t>(cell.history_len),
                                                   tc.layout.email_dim, 0, cfg.gamma, seed);
        const auto dtr = build_dataset(pc.bank, *train, cell, tc.layout, tc.attention, nullptr, cfg.exec);
        const auto dva = build_dataset(pc.bank, *val, cell, tc.layout, tc.attention, nullptr, cfg.exec);
        switch (cell.classifier) {
            case Classifier::lr: {
                auto lc = cfg.lr;
                lc.seed = seed;
                tc.lr = learn::train_lr(dtr, &dva, lc, cfg.exec);
                tc.effective_config = lc.to_json();
                break;
            }
            case Classifier::mlp: {
                auto mc = cfg.mlp;
                mc.seed = seed;
                tc.mlp = learn::train_mlp(dtr, &dva, mc, cfg.exec);
                tc.effective_config = mc.to_json();
                break;
            }
            case Classifier::gbdt:
                tc.gbdt = learn::train_gbdt(dtr, cfg.gbdt, cfg.exec);
                tc.effective_config = cfg.gbdt.to_json();
                break;
        }
    }
    tc.val_auroc = safe_auroc(predict_cell(tc, pc.bank, pc.art, *val, cfg.exec, nullptr), y_val);
    return tc;
}

std::vector<double> score_cell(const TrainedCell& tc, const PreparedCorpus& pc, const ExampleSet& set,
                               const ExecPolicy& exec, std::vector<double>* contrast) {
    return predict_cell(tc, pc.bank, pc.art, set, exec, contrast);
}

ExperimentConfig apply_overrides(ExperimentConfig cfg, const CellSpec& cell, const json& o) {
    auto pw = [&](learn::PositiveWeight& w) {
        if (o.contains("pos_weight")) w = learn::PositiveWeight::from_json(o.at("pos_weight"));
    };
    if (cell.uses_network() || cell.classifier == Classifier::mlp) {
        if (o.contains("filters")) {
            const int f = o.at("filters").get<int>();
            std::fill(cfg.network.filters.begin(), cfg.network.filters.end(), f);
        }
        cfg.network.batch_size = o.value("batch_size", cfg.network.batch_size);
        cfg.network.learning_rate = o.value("learning_rate", cfg.network.learning_rate);
        cfg.network.keep_prob = o.value("keep_prob", cfg.network.keep_prob);
        pw(cfg.network.pos_weight);
        cfg.mlp.batch_size = o.value("batch_size", cfg.mlp.batch_size);
        cfg.mlp.learning_rate = o.value("learning_rate", cfg.mlp.learning_rate);
        cfg.mlp.keep_prob = o.value("keep_prob", cfg.mlp.keep_prob);
        pw(cfg.mlp.pos_weight);
        return cfg;
    }
    if (cell.classifier == Classifier::gbdt) {
        cfg.gbdt.iterations = o.value("iterations", cfg.gbdt.iterations);
        cfg.gbdt.max_depth = o.value("max_depth", cfg.gbdt.max_depth);
        cfg.gbdt.learning_rate = o.value("learning_rate", cfg.gbdt.learning_rate);
        pw(cfg.gbdt.pos_weight);
    } else {
        cfg.lr.C = o.value("C", cfg.lr.C);
        pw(cfg.lr.pos_weight);
    }
    return cfg;
}

std::pair<ExperimentConfig, learn::SearchResult> tune_cell(const PreparedCorpus& pc, const CellSpec& cell,
                                                           const ExperimentConfig& cfg, std::size_t budget,
                                                           Audit* audit) {
    learn::SearchSpace space;
    if (cell.uses_network() || cell.classifier == Classifier::mlp) {
        // Sequence length and embedding size change the fitted text artifacts,
        // and the aggregation is a cell axis, so neither is searched here.
        for (auto& axis : learn::SearchSpace::cnn_grid().axes) {
            if (axis.first == "seq_len" || axis.first == "embed_dim" || axis.first == "aggregation") continue;
            if (axis.first == "filters" && cell.content != repr::Content::cnn) continue;
            space.axes.push_back(axis);
        }
    } else if (cell.classifier == Classifier::gbdt) {
        space = learn::SearchSpace::gbdt_grid();
    } else {
        space = learn::SearchSpace::lr_grid();
    }
    const user::HistoryConfig hcfg{cell.mode, cell.history_len};
    const auto tr = build_examples(pc, Partition::train, hcfg, audit);
    const auto va = build_examples(pc, Partition::validation, hcfg, audit);
    auto objective = [&](const json& o) {
        const auto c = apply_overrides(cfg, cell, o);
        return train_cell(pc, cell, c, cfg.seed, audit, &tr, &va).val_auroc;
    };
    auto res = learn::random_search(space, budget, cfg.seed, objective);
    ExperimentConfig best = cfg;
    if (res.best) best = apply_overrides(cfg, cell, res.best_config());
    return {best, std::move(res)};
}

// ---------------------------------------------------------------------------

json Checkpoint::to_json() const {
    const auto& m = model;
    json j = {{"format", "triage-checkpoint"},
              {"version", 1},
              {"cell", m.cell.to_json()},
              {"seed", m.seed},
              {"split", {{"train_end", split.train_end}, {"validation_end", split.validation_end}, {"test_end", split.test_end}}},
              {"config", config.to_json()},
              {"layout", m.layout.to_json()},
              {"val_auroc", m.val_auroc},
              {"effective_config", m.effective_config},
              {"artifacts", art.to_json()}};
    if (!m.network) j["attention"] = m.attention.to_json();
    if (m.network) j["network"] = m.network->to_json();
    if (m.lr) j["lr"] = m.lr->to_json();
    if (m.mlp) j["mlp"] = m.mlp->to_json();
    if (m.gbdt) j["gbdt"] = m.gbdt->to_json();
    return j;
}

Checkpoint Checkpoint::from_json(const json& j) {
    if (j.value("format", std::string()) != "triage-checkpoint") throw_data("not a triage checkpoint");
    Checkpoint c;
    auto& m = c.model;
    m.cell = CellSpec::from_json(j.at("cell"));
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& s = j.at("split");
    c.split = {s.at("train_end").get<Timestamp>(), s.at("validation_end").get<Timestamp>(), s.at("test_end").get<Timestamp>()};
    c.split.validate();
    c.config = ExperimentConfig::from_json(j.at("config"));
    m.layout = learn::FeatureLayout::from_json(j.at("layout"));
    m.val_auroc = j.value("val_auroc", 0.0);
    m.effective_config = j.value("effective_config", json::object());
    c.art = TextArtifacts::from_json(j.at("artifacts"));
    if (j.contains("attention")) m.attention = user::AttentionParams::from_json(j.at("attention"));
    if (j.contains("network")) m.network = learn::NetworkModel::from_json(j.at("network"));
    if (j.contains("lr")) m.lr = learn::LrModel::from_json(j.at("lr"));
    if (j.contains("mlp")) m.mlp = learn::MlpModel::from_json(j.at("mlp"));
    if (j.contains("gbdt")) m.gbdt = learn::GbdtModel::from_json(j.at("gbdt"));
    if (!m.network && !m.lr && !m.mlp && !m.gbdt) throw_data("checkpoint holds no model");
    const std::size_t width = m.layout.width();
    if ((m.lr && m.lr->w.size() != width && !m.network) || (m.gbdt && m.gbdt->width != width) ||
        (m.mlp && m.mlp->params.input != width))
        throw_data("checkpoint: model width does not match layout metadata");
    if (m.network && !(m.network->layout == m.layout)) throw_data("checkpoint: network layout mismatch");
    return c;
}

std::vector<Prediction> predict_messages(const Checkpoint& ck, const corpus::IngestResult& history,
                                         const std::vector<corpus::RawMessage>& messages, const ExecPolicy& exec) {
    EmailBank bank = build_bank(history.index, ck.art, exec);
    const user::HistoryConfig hcfg{ck.model.cell.mode, ck.model.cell.history_len};
    ExampleSet set;
    std::vector<Prediction> out;
    for (const auto& m : messages) {
        if (m.reply_to || !m.timestamp) continue;
        std::vector<std::string> rcpt;
        std::set<std::string> seen;
        for (const auto& r : m.recipients)
            if (r != m.sender && seen.insert(r).second) rcpt.push_back(r);
        if (rcpt.empty()) continue;
        const auto bank_id = static_cast<std::uint32_t>(bank.size());
        bank.add(m.subject, m.body, ck.art);
        for (const auto& r : rcpt) {
            set.examples.push_back(
                make_example(history.index, bank_id, r, *m.timestamp, ck.art.rate(r), 0, hcfg, nullptr));
            set.ids.push_back(m.message_id + "/" + r);
            out.push_back({m.message_id + "/" + r, r, 0.0});
        }
    }
    if (set.examples.empty()) return out;
    const auto p = predict_cell(ck.model, bank, ck.art, set, exec, nullptr);
    for (std::size_t k = 0; k < out.size(); ++k) out[k].probability = p[k];
    return out;
}

}  // namespace triage
