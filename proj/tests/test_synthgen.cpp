#include <cmath>
#include <sstream>

#include <doctest.h>

#include "triage/corpus.hpp"
#include "triage/synthgen.hpp"

using namespace triage;
using namespace triage::synth;

namespace {

GeneratorConfig small() {
    GeneratorConfig c;
    c.n_users = 10;
    c.emails_per_user = 80;
    c.n_external_senders = 30;
    return c;
}

std::string jsonl(const SynthCorpus& c) {
    std::ostringstream out;
    write_jsonl(c, out);
    return out.str();
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
    const auto a = jsonl(generate(small()));
    const auto b = jsonl(generate(small()));
    CHECK(a == b);
    auto other = small();
    other.seed = 8;
    CHECK(jsonl(generate(other)) != a);
}

TEST_CASE("reply probabilities are valid and labels follow them") {
    const auto c = generate(small());
    REQUIRE_FALSE(c.hidden.empty());
    double expected = 0;
    int observed = 0;
    for (const auto& h : c.hidden) {
        CHECK(h.probability > 0.0);
        CHECK(h.probability < 1.0);
        expected += h.probability;
        observed += h.replied;
    }
    double var = 0;
    for (const auto& h : c.hidden) var += h.probability * (1 - h.probability);
    CHECK(std::abs(observed - expected) <= 4 * std::sqrt(var));
}

TEST_CASE("no topic match gives a flat reply rate") {
    auto cfg = small();
    cfg.w_match = 0.0;
    cfg.bias = -1.0;
    const auto c = generate(cfg);
    const double p = 1.0 / (1.0 + std::exp(1.0));
    const double n = static_cast<double>(c.hidden.size());
    int replied = 0;
    for (const auto& h : c.hidden) {
        CHECK(h.probability == doctest::Approx(p).epsilon(1e-12));
        replied += h.replied;
    }
    CHECK(std::abs(replied / n - p) <= 3 * std::sqrt(p * (1 - p) / n));
    CHECK(bayes_auroc(c.hidden) == 0.5);
}

TEST_CASE("bayes auroc edge cases") {
    std::vector<HiddenRecord> perfect{{"a", 0, 0.9, 1}, {"b", 0, 0.1, 0}, {"c", 0, 0.8, 1}};
    CHECK(bayes_auroc(perfect) == 1.0);
    std::vector<HiddenRecord> reversed{{"a", 0, 0.1, 1}, {"b", 0, 0.9, 0}};
    CHECK(bayes_auroc(reversed) == 0.0);
    std::vector<HiddenRecord> one_class{{"a", 0, 0.1, 1}, {"b", 0, 0.9, 1}};
    CHECK_THROWS_AS(bayes_auroc(one_class), Error);
}

TEST_CASE("default fixture has a realistic positive ratio") {
    const auto c = generate(GeneratorConfig{});
    CHECK(c.positive_ratio() >= 0.05);
    CHECK(c.positive_ratio() <= 0.12);
    CHECK(bayes_auroc(c, corpus::Partition::test) > 0.8);
}

TEST_CASE("generated corpus ingests cleanly") {
    const auto c = generate(small());
    std::istringstream in(jsonl(c));
    corpus::IngestReport rep;
    auto msgs = corpus::read_jsonl(in, rep);
    CHECK(rep.malformed == 0);
    CHECK(msgs.size() == c.messages.size());
    auto res = corpus::ingest(msgs, c.split, rep);
    CHECK(res.report.malformed == 0);
    CHECK(res.report.duplicates == 0);
    CHECK(res.report.missing_fields == 0);
    CHECK(res.report.unknown_reply_to == 0);
    CHECK(res.report.out_of_window == 0);
    for (int p = 0; p < 3; ++p) CHECK(res.report.partitions[p].emails > 0);
    // every replied email in the index is a hidden positive
    std::size_t pos = 0;
    for (const auto& e : res.index.emails()) pos += e.replied ? 1 : 0;
    std::size_t hidden_pos = 0;
    for (const auto& h : c.hidden) hidden_pos += static_cast<std::size_t>(h.replied);
    CHECK(pos == hidden_pos);
}

TEST_CASE("invalid generator configs are rejected") {
    auto cfg = small();
    cfg.n_topics = 0;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small();
    cfg.n_users = 0;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small();
    cfg.min_body_words = 50;
    cfg.max_body_words = 10;
    CHECK_THROWS_AS(generate(cfg), Error);
}

TEST_CASE("config and manifest round trip") {
    auto cfg = small();
    cfg.bias = -2.25;
    CHECK(GeneratorConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
    const auto m = manifest(generate(small()));
    CHECK(m.contains("bayes_auroc_by_partition"));
    CHECK(m["bayes_auroc_by_partition"].contains("test"));
}
