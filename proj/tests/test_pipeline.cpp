#include <doctest.h>

#include "triage/evaluation.hpp"
#include "triage/pipeline.hpp"
#include "triage/synthgen.hpp"

using namespace triage;

namespace {

struct Fixture {
    synth::SynthCorpus synth;
    ExperimentConfig cfg;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture f;
        synth::GeneratorConfig g;
        g.n_users = 12;
        g.emails_per_user = 120;
        g.n_external_senders = 40;
        f.synth = synth::generate(g);
        auto& c = f.cfg;
        c.seed = 3;
        c.split = f.synth.split;
        c.text.vocab.max_size = 1500;
        c.text.seq_len = 32;
        c.text.skipgram.dimension = 12;
        c.text.skipgram.epochs = 1;
        c.gbdt.iterations = 30;
        c.gbdt.max_depth = 3;
        c.lr.max_epochs = 5;
        c.mlp.hidden = 16;
        c.mlp.max_epochs = 3;
        c.network.filters = {6, 6, 6};
        c.network.hidden = 16;
        c.network.max_epochs = 2;
        c.network.batch_size = 64;
        c.deep_seeds = 1;
        return f;
    }();
    return f;
}

corpus::IngestResult ingested() { return corpus::ingest(fixture().synth.messages, fixture().synth.split); }

PreparedCorpus prepare(bool embeddings, Audit* audit = nullptr) {
    const auto& f = fixture();
    return PreparedCorpus::fit(ingested(), f.synth.split, f.cfg.text, embeddings, f.cfg.seed, f.cfg.exec, audit);
}

}  // namespace

TEST_CASE("cell specs") {
    CellSpec c;
    CHECK_FALSE(c.uses_network());
    c.content = repr::Content::cnn;
    CHECK(c.uses_network());
    CHECK(c.is_deep());
    CellSpec e;
    e.content = repr::Content::embed;
    e.aggregation = user::AggregationKind::dot;
    e.classifier = Classifier::mlp;
    CHECK(e.uses_network());
    auto back = CellSpec::from_json(e.to_json());
    CHECK(back.label() == e.label());
    CellSpec bad;
    bad.aggregation = user::AggregationKind::concat;
    CHECK_THROWS_AS(CellSpec::from_json(bad.to_json()), Error);
    CHECK(classifier_from_string("gbdt") == Classifier::gbdt);
    CHECK_THROWS_AS(classifier_from_string("svm"), Error);
}

TEST_CASE("experiment config round trip") {
    const auto& cfg = fixture().cfg;
    const auto back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    auto j = cfg.to_json();
    j["gbdt"]["iterations"] = 7;
    CHECK(ExperimentConfig::from_json(j).gbdt.iterations == 7);
}

TEST_CASE("fitting and training never read the test partition") {
    const auto& f = fixture();
    Audit audit(f.synth.split);
    auto pc = prepare(true, &audit);
    CellSpec cell;
    auto tc = train_cell(pc, cell, f.cfg, f.cfg.seed, &audit);
    CellSpec deep;
    deep.content = repr::Content::cnn;
    deep.classifier = Classifier::mlp;
    deep.aggregation = user::AggregationKind::dot;
    auto td = train_cell(pc, deep, f.cfg, f.cfg.seed, &audit);
    auto test = build_examples(pc, corpus::Partition::test, {cell.mode, cell.history_len}, &audit);
    score_cell(tc, pc, test, f.cfg.exec);
    score_cell(td, pc, test, f.cfg.exec);

    using S = Audit::Stage;
    for (auto s : {S::vocabulary, S::embedding, S::reply_rate, S::fitting, S::tuning})
        CHECK(audit.touches(s, corpus::Partition::test) == 0);
    CHECK(audit.touches(S::vocabulary, corpus::Partition::train) > 0);
    CHECK(audit.touches(S::vocabulary, corpus::Partition::validation) > 0);
    CHECK(audit.touches(S::reply_rate, corpus::Partition::validation) == 0);
    CHECK(audit.touches(S::fitting, corpus::Partition::validation) == 0);
    CHECK(audit.history_checks() > 0);
    CHECK(audit.violations() == 0);
}

TEST_CASE("training is deterministic and checkpoints round trip") {
    const auto& f = fixture();
    auto pc = prepare(false);
    CellSpec cell;
    auto a = train_cell(pc, cell, f.cfg, f.cfg.seed, nullptr);
    auto b = train_cell(pc, cell, f.cfg, f.cfg.seed, nullptr);
    Checkpoint ca{a, pc.art, pc.spec, f.cfg}, cb{b, pc.art, pc.spec, f.cfg};
    const auto dump = ca.to_json().dump();
    CHECK(dump == cb.to_json().dump());

    const auto back = Checkpoint::from_json(nlohmann::json::parse(dump));
    CHECK(back.to_json().dump() == dump);
    auto test = build_examples(pc, corpus::Partition::test, {cell.mode, cell.history_len}, nullptr);
    auto pc2 = PreparedCorpus::with_artifacts(ingested(), pc.spec, back.art);
    CHECK(score_cell(back.model, pc2, test, f.cfg.exec) == score_cell(a, pc, test, f.cfg.exec));
    CHECK(a.val_auroc > 0.5);
}

TEST_CASE("network cells train, score and round trip") {
    const auto& f = fixture();
    auto pc = prepare(true);
    CellSpec cell;
    cell.content = repr::Content::cnn;
    cell.classifier = Classifier::mlp;
    auto tc = train_cell(pc, cell, f.cfg, f.cfg.seed, nullptr);
    REQUIRE(tc.network);
    auto test = build_examples(pc, corpus::Partition::test, {cell.mode, cell.history_len}, nullptr);
    std::vector<double> contrast;
    const auto p = score_cell(tc, pc, test, f.cfg.exec, &contrast);
    CHECK(p.size() == test.examples.size());
    CHECK(contrast.size() == p.size());
    for (double x : p) CHECK((x > 0.0 && x < 1.0));

    Checkpoint ck{tc, pc.art, pc.spec, f.cfg};
    const auto back = Checkpoint::from_json(nlohmann::json::parse(ck.to_json().dump()));
    CHECK(score_cell(back.model, pc, test, f.cfg.exec) == p);
}

TEST_CASE("similarity ablation changes the layout width") {
    const auto& f = fixture();
    auto pc = prepare(false);
    CellSpec on, off;
    off.similarity = false;
    CHECK(layout_for(on, pc.art, f.cfg.network).width() == layout_for(off, pc.art, f.cfg.network).width() + 3);
    on.mode = off.mode = user::HistoryMode::pos;
    CHECK(layout_for(on, pc.art, f.cfg.network).width() == layout_for(off, pc.art, f.cfg.network).width() + 1);
}

TEST_CASE("examples are causal and ordered") {
    auto pc = prepare(false);
    for (auto mode : {user::HistoryMode::received, user::HistoryMode::pos, user::HistoryMode::posneg}) {
        Audit audit(pc.spec);
        auto set = build_examples(pc, corpus::Partition::validation, {mode, 5}, &audit);
        CHECK(audit.violations() == 0);
        for (std::size_t i = 0; i < set.examples.size(); ++i) {
            const auto& ex = set.examples[i];
            CHECK(ex.primary.size() <= 5);
            CHECK(ex.negative.size() <= 5);
            if (mode != user::HistoryMode::posneg) CHECK(ex.negative.empty());
            CHECK(ex.reply_rate >= 0.0);
            CHECK(ex.reply_rate <= 1.0);
        }
    }
}

TEST_CASE("matrix runs record every cell") {
    const auto& f = fixture();
    auto pc = prepare(false);
    CellSpec lr;
    lr.classifier = Classifier::lr;
    CellSpec broken;
    broken.history_len = 0;  // invalid history length
    auto report = eval::run_matrix(pc, {lr, broken}, f.cfg, nullptr);
    REQUIRE(report.cells.size() == 2);
    CHECK_FALSE(report.cells[0].failed);
    CHECK(report.cells[0].seed_count() == 1);
    CHECK(report.cells[1].failed);
    CHECK_FALSE(report.cells[1].error.empty());
}

TEST_CASE("predicting new messages") {
    const auto& f = fixture();
    auto pc = prepare(false);
    CellSpec cell;
    auto tc = train_cell(pc, cell, f.cfg, f.cfg.seed, nullptr);
    Checkpoint ck{tc, pc.art, pc.spec, f.cfg};
    const auto hist = ingested();
    const auto& r0 = hist.index.emails().front().recipient_id;
    corpus::RawMessage m;
    m.message_id = "new";
    m.timestamp = f.synth.split.test_end;
    m.sender = r0;
    m.recipients = {r0, hist.index.emails().back().recipient_id, "someone-else", "someone-else"};
    m.subject = "hello";
    m.body = "a short body";
    corpus::RawMessage reply = m;
    reply.message_id = "re";
    reply.reply_to = "new";
    const auto out = predict_messages(ck, hist, {m, reply}, f.cfg.exec);
    // sender and duplicate recipients dropped, replies skipped
    REQUIRE(out.size() == (r0 == hist.index.emails().back().recipient_id ? 1u : 2u));
    for (const auto& p : out) {
        CHECK(p.recipient != r0);
        CHECK(p.probability > 0.0);
        CHECK(p.probability < 1.0);
    }
}
