#include "triage/synthgen.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "triage/metrics.hpp"

namespace triage::synth {

using nlohmann::json;

void GeneratorConfig::validate() const {
    if (n_topics <= 0) throw_usage("synth: n_topics must be positive");
    if (n_users < 2) throw_usage("synth: need at least two users");
    if (vocab_size - background_words < n_topics) throw_usage("synth: too few topic words for the topic count");
    if (background_words < 1) throw_usage("synth: background_words must be positive");
    if (emails_per_user < 1 || span_days < 1) throw_usage("synth: emails_per_user and span_days must be positive");
    if (min_body_words < 1 || max_body_words < min_body_words) throw_usage("synth: bad body length range");
    if (max_recipients < 1 || max_recipients > n_users) throw_usage("synth: max_recipients out of range");
    if (n_external_senders < 1) throw_usage("synth: need at least one external sender");
    if (!(primary_mass >= 0.0 && primary_mass <= 1.0)) throw_usage("synth: primary_mass must be in [0, 1]");
    if (!(background_rate >= 0.0 && background_rate < 1.0)) throw_usage("synth: background_rate must be in [0, 1)");
    if (!(user_topic_concentration > 0.0 && topic_word_concentration > 0.0)) throw_usage("synth: concentrations must be positive");
    if (!(reply_delay_hours > 0.0)) throw_usage("synth: reply_delay_hours must be positive");
}

json GeneratorConfig::to_json() const {
    return {{"n_users", n_users},
            {"n_topics", n_topics},
            {"vocab_size", vocab_size},
            {"background_words", background_words},
            {"emails_per_user", emails_per_user},
            {"span_days", span_days},
            {"start", start},
            {"user_topic_concentration", user_topic_concentration},
            {"topic_word_concentration", topic_word_concentration},
            {"primary_mass", primary_mass},
            {"background_rate", background_rate},
            {"min_body_words", min_body_words},
            {"max_body_words", max_body_words},
            {"max_recipients", max_recipients},
            {"n_external_senders", n_external_senders},
            {"affinity_scale", affinity_scale},
            {"w_match", w_match},
            {"bias", bias},
            {"reply_delay_hours", reply_delay_hours},
            {"seed", seed}};
}

GeneratorConfig GeneratorConfig::from_json(const json& j) {
    GeneratorConfig c;
#define TRIAGE_FIELD(name) c.name = j.value(#name, c.name)
    TRIAGE_FIELD(n_users);
    TRIAGE_FIELD(n_topics);
    TRIAGE_FIELD(vocab_size);
    TRIAGE_FIELD(background_words);
    TRIAGE_FIELD(emails_per_user);
    TRIAGE_FIELD(span_days);
    TRIAGE_FIELD(start);
    TRIAGE_FIELD(user_topic_concentration);
    TRIAGE_FIELD(topic_word_concentration);
    TRIAGE_FIELD(primary_mass);
    TRIAGE_FIELD(background_rate);
    TRIAGE_FIELD(min_body_words);
    TRIAGE_FIELD(max_body_words);
    TRIAGE_FIELD(max_recipients);
    TRIAGE_FIELD(n_external_senders);
    TRIAGE_FIELD(affinity_scale);
    TRIAGE_FIELD(w_match);
    TRIAGE_FIELD(bias);
    TRIAGE_FIELD(reply_delay_hours);
    TRIAGE_FIELD(seed);
#undef TRIAGE_FIELD
    c.validate();
    return c;
}

double SynthCorpus::positive_ratio() const {
    if (hidden.empty()) return 0.0;
    std::size_t pos = 0;
    for (const auto& h : hidden) pos += static_cast<std::size_t>(h.replied);
    return double(pos) / double(hidden.size());
}

corpus::SplitSpec default_split(const GeneratorConfig& cfg) {
    constexpr Timestamp day = 86400;
    const Timestamp span = Timestamp{cfg.span_days} * day;
    // 245 / 28 / 92 days on the default one-year span, scaled for other spans.
    const Timestamp train = span * 245 / 365;
    const Timestamp val = span * 273 / 365;
    return {cfg.start + train - 1, cfg.start + val - 1, cfg.start + span - 1};
}

namespace {

std::vector<double> dirichlet(std::mt19937_64& rng, std::size_t k, double alpha) {
    std::gamma_distribution<double> g(alpha, 1.0);
    std::vector<double> v(k);
    double s = 0.0;
    for (auto& x : v) {
        x = g(rng);
        s += x;
    }
    if (s <= 0.0) {
        std::fill(v.begin(), v.end(), 1.0 / double(k));
        return v;
    }
    for (auto& x : v) x /= s;
    return v;
}

std::string word(int i) {
    static const char* cons = "bdfgklmnprstvz";
    static const char* vow = "aeiou";
    std::string w;
    int x = i;
    // Three consonant-vowel syllables give 70^3 distinct alphabetic tokens.
    for (int s = 0; s < 3; ++s) {
        w.push_back(cons[x % 14]);
        x /= 14;
        w.push_back(vow[x % 5]);
        x /= 5;
    }
    if (x > 0) w += std::string(static_cast<std::size_t>(x), 'x');
    return w;
}

std::string id(const char* prefix, std::size_t n, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, n);
    return buf;
}

struct World {
    std::vector<std::vector<double>> user_prior;  // pi_u
    std::vector<std::vector<double>> affinity;    // a_u
    std::vector<std::discrete_distribution<int>> topic_words;
    std::discrete_distribution<int> background;
    std::vector<int> topic_offset;
};

World make_world(const GeneratorConfig& cfg, std::mt19937_64& rng) {
    World w;
    const auto K = static_cast<std::size_t>(cfg.n_topics);
    std::normal_distribution<double> normal(0.0, cfg.affinity_scale);
    for (int u = 0; u < cfg.n_users; ++u) {
        w.user_prior.push_back(dirichlet(rng, K, cfg.user_topic_concentration));
        std::vector<double> a(K);
        for (auto& x : a) x = normal(rng);
        w.affinity.push_back(std::move(a));
    }
    const int topic_vocab = cfg.vocab_size - cfg.background_words;
    for (int k = 0; k <= cfg.n_topics; ++k) w.topic_offset.push_back(cfg.background_words + topic_vocab * k / cfg.n_topics);
    for (int k = 0; k < cfg.n_topics; ++k) {
        const auto n = static_cast<std::size_t>(w.topic_offset[static_cast<std::size_t>(k) + 1] -
                                                w.topic_offset[static_cast<std::size_t>(k)]);
        auto p = dirichlet(rng, n, cfg.topic_word_concentration);
        w.topic_words.emplace_back(p.begin(), p.end());
    }
    std::vector<double> zipf(static_cast<std::size_t>(cfg.background_words));
    for (std::size_t i = 0; i < zipf.size(); ++i) zipf[i] = 1.0 / double(i + 1);
    w.background = std::discrete_distribution<int>(zipf.begin(), zipf.end());
    return w;
}

std::string sample_text(const GeneratorConfig& cfg, World& w, const std::vector<double>& theta, int n_words,
                        std::mt19937_64& rng) {
    std::discrete_distribution<int> topic(theta.begin(), theta.end());
    std::bernoulli_distribution bg(cfg.background_rate);
    std::string out;
    for (int i = 0; i < n_words; ++i) {
        int wi;
        if (bg(rng)) {
            wi = w.background(rng);
        } else {
            const auto k = static_cast<std::size_t>(topic(rng));
            wi = w.topic_offset[k] + w.topic_words[k](rng);
        }
        if (!out.empty()) out.push_back(' ');
        out += word(wi);
    }
    return out;
}

SynthCorpus generate_once(const GeneratorConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    World world = make_world(cfg, rng);
    const auto K = static_cast<std::size_t>(cfg.n_topics);

    SynthCorpus out;
    out.config = cfg;
    out.split = default_split(cfg);

    const double mean_recipients = (1.0 + cfg.max_recipients) / 2.0;
    const auto n_roots = static_cast<std::size_t>(double(cfg.n_users) * cfg.emails_per_user / mean_recipients + 0.5);
    const Timestamp span = Timestamp{cfg.span_days} * 86400;
    std::uniform_int_distribution<Timestamp> when(cfg.start, cfg.start + span - 1);
    std::uniform_int_distribution<int> pick_user(0, cfg.n_users - 1);
    std::uniform_int_distribution<int> pick_sender(0, cfg.n_external_senders - 1);
    std::uniform_int_distribution<int> n_rcpt(1, cfg.max_recipients);
    std::uniform_int_distribution<int> body_len(cfg.min_body_words, cfg.max_body_words);
    std::uniform_int_distribution<int> subject_len(2, 5);
    std::exponential_distribution<double> delay(1.0 / (cfg.reply_delay_hours * 3600.0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::size_t n_replies = 0;
    for (std::size_t m = 0; m < n_roots; ++m) {
        corpus::RawMessage root;
        root.message_id = id("m", m, 6);
        root.timestamp = when(rng);
        root.sender = id("x", static_cast<std::size_t>(pick_sender(rng)), 3);
        const int primary = pick_user(rng);
        std::vector<int> rcpt{primary};
        const int extra = n_rcpt(rng) - 1;
        while (static_cast<int>(rcpt.size()) < extra + 1) {
            const int u = pick_user(rng);
            if (std::find(rcpt.begin(), rcpt.end(), u) == rcpt.end()) rcpt.push_back(u);
        }
        for (int u : rcpt) root.recipients.push_back(id("u", static_cast<std::size_t>(u), 3));

        const auto& prior = world.user_prior[static_cast<std::size_t>(primary)];
        std::discrete_distribution<int> pick_topic(prior.begin(), prior.end());
        const auto z = static_cast<std::size_t>(pick_topic(rng));
        auto theta = dirichlet(rng, K, 1.0);
        for (auto& t : theta) t *= 1.0 - cfg.primary_mass;
        theta[z] += cfg.primary_mass;

        root.subject = sample_text(cfg, world, theta, subject_len(rng), rng);
        root.body = sample_text(cfg, world, theta, body_len(rng), rng);

        for (int u : rcpt) {
            const auto& a = world.affinity[static_cast<std::size_t>(u)];
            double match = 0.0;
            for (std::size_t k = 0; k < K; ++k) match += theta[k] * a[k];
            const double p = sigmoid(cfg.w_match * match + cfg.bias);
            const int replied = unit(rng) < p ? 1 : 0;
            const std::string rid = id("u", static_cast<std::size_t>(u), 3);
            out.hidden.push_back({root.message_id + "/" + rid, *root.timestamp, p, replied});
            if (!replied) continue;
            corpus::RawMessage reply;
            reply.message_id = id("r", n_replies++, 6);
            reply.timestamp = *root.timestamp + std::max<Timestamp>(60, static_cast<Timestamp>(delay(rng)));
            reply.sender = rid;
            reply.recipients = {root.sender};
            reply.subject = "re " + root.subject;
            reply.body = "thanks noted\n-----Original Message-----\n" + root.body;
            reply.reply_to = root.message_id;
            out.messages.push_back(std::move(reply));
        }
        out.messages.push_back(std::move(root));
    }
    std::sort(out.messages.begin(), out.messages.end(), [](const auto& a, const auto& b) {
        return std::tie(*a.timestamp, a.message_id) < std::tie(*b.timestamp, b.message_id);
    });
    std::sort(out.hidden.begin(), out.hidden.end(), [](const auto& a, const auto& b) {
        return std::tie(a.timestamp, a.email_id) < std::tie(b.timestamp, b.email_id);
    });
    return out;
}

}  // namespace

SynthCorpus generate(GeneratorConfig cfg) {
    cfg.validate();
    for (int attempt = 0; attempt < 20; ++attempt) {
        SynthCorpus c = generate_once(cfg);
        c.regenerations = attempt;
        const double r = c.positive_ratio();
        if (r > 0.0 && r < 1.0) return c;
        cfg.bias += r == 0.0 ? 1.0 : -1.0;
    }
    throw_data("synth: could not produce both classes");
}

double bayes_auroc(const std::vector<HiddenRecord>& hidden) {
    std::vector<double> p;
    std::vector<int> y;
    for (const auto& h : hidden) {
        p.push_back(h.probability);
        y.push_back(h.replied);
    }
    return eval::auroc(p, y);
}

double bayes_auroc(const SynthCorpus& c, corpus::Partition part) {
    std::vector<HiddenRecord> sel;
    for (const auto& h : c.hidden)
        if (h.timestamp <= c.split.test_end && corpus::partition_of(h.timestamp, c.split) == part) sel.push_back(h);
    return bayes_auroc(sel);
}

json manifest(const SynthCorpus& c) {
    json split = {{"train_end", c.split.train_end},
                  {"validation_end", c.split.validation_end},
                  {"test_end", c.split.test_end}};
    json m = {{"config", c.config.to_json()},
              {"seed", c.config.seed},
              {"split", split},
              {"messages", c.messages.size()},
              {"emails", c.hidden.size()},
              {"positive_ratio", c.positive_ratio()},
              {"regenerations", c.regenerations},
              {"bayes_auroc", bayes_auroc(c.hidden)}};
    json per = json::object();
    for (auto p : {corpus::Partition::train, corpus::Partition::validation, corpus::Partition::test}) {
        try {
            per[corpus::to_string(p)] = bayes_auroc(c, p);
        } catch (const Error&) {
            per[corpus::to_string(p)] = nullptr;
        }
    }
    m["bayes_auroc_by_partition"] = std::move(per);
    return m;
}

void write_jsonl(const SynthCorpus& c, std::ostream& out) {
    for (const auto& m : c.messages) out << corpus::message_to_json(m).dump() << '\n';
}

void write_hidden_csv(const SynthCorpus& c, std::ostream& out) {
    out << "email_id,timestamp,probability,replied\n";
    char buf[64];
    for (const auto& h : c.hidden) {
        std::snprintf(buf, sizeof buf, "%.17g", h.probability);
        out << h.email_id << ',' << h.timestamp << ',' << buf << ',' << h.replied << '\n';
    }
}

}  // namespace triage::synth
