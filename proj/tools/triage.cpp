// triage: command-line front end.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "triage/evaluation.hpp"
#include "triage/pipeline.hpp"
#include "triage/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace triage;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool deterministic = false;
    std::vector<std::string> sets;  // dotted.key=value overrides
};

struct CellFlags {
    std::string content, mode, classifier, similarity, aggregation;
    std::optional<int> history_len;

    void add(CLI::App* app) {
        app->add_option("--content", content, "TFIDF | Embed | CNN");
        app->add_option("--mode", mode, "Received | Pos | PosNeg");
        app->add_option("--classifier", classifier, "LR | MLP | GBDT");
        app->add_option("--similarity", similarity, "on | off");
        app->add_option("--history-len", history_len);
        app->add_option("--aggregation", aggregation, "uniform | learned_global | dot | concat");
    }
    void apply(json& cell) const {
        if (!content.empty()) cell["content"] = content;
        if (!mode.empty()) cell["mode"] = mode;
        if (!classifier.empty()) cell["classifier"] = classifier;
        if (!similarity.empty()) {
            if (similarity != "on" && similarity != "off") throw_usage("--similarity expects on or off");
            cell["similarity"] = similarity == "on";
        }
        if (history_len) cell["history_len"] = *history_len;
        if (!aggregation.empty()) cell["aggregation"] = aggregation;
    }
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_usage("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw_data(path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& body) {
    if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_usage("cannot write " + path);
    out << body;
    if (!out) throw_data("write failed: " + path);
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json parse_scalar(const std::string& v) {
    try {
        return json::parse(v);
    } catch (const json::exception&) {
        return v;
    }
}

// Applies `a.b.c=value` onto the raw config document.
void apply_set(json& raw, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw_usage("--set expects key=value, got " + kv);
    json* node = &raw;
    std::stringstream path(kv.substr(0, eq));
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(path, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) (*node)[parts[i]] = json::object();
        node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = parse_scalar(kv.substr(eq + 1));
}

struct Loaded {
    json raw;
    ExperimentConfig cfg;
};

Loaded load_config(const Globals& g, const CellFlags* cell) {
    Loaded l;
    l.raw = g.config_path.empty() ? json::object() : read_json_file(g.config_path);
    for (const auto& s : g.sets) apply_set(l.raw, s);
    if (cell) {
        if (!l.raw.contains("cell")) l.raw["cell"] = json::object();
        cell->apply(l.raw["cell"]);
    }
    if (g.seed) l.raw["seed"] = *g.seed;
    try {
        l.cfg = ExperimentConfig::from_json(l.raw);
    } catch (const json::exception& e) {
        throw_usage(std::string("config: ") + e.what());
    }
    l.cfg.exec.deterministic = l.raw.value("deterministic", false) || g.deterministic;
    int threads = l.raw.value("threads", 1);
    if (const char* env = std::getenv("TRIAGE_REC_THREADS"); env && *env) {
        try {
            threads = std::stoi(env);
        } catch (const std::exception&) {
            throw_usage(std::string("TRIAGE_REC_THREADS is not an integer: ") + env);
        }
    }
    if (g.threads) threads = *g.threads;
    if (threads < 1) throw_usage("threads must be >= 1");
    l.cfg.exec.threads = threads;
    return l;
}

corpus::SplitSpec resolve_split(const ExperimentConfig& cfg, const std::string& manifest) {
    if (!manifest.empty()) {
        const auto m = read_json_file(manifest);
        const auto& s = m.at("split");
        corpus::SplitSpec sp{s.at("train_end").get<Timestamp>(), s.at("validation_end").get<Timestamp>(),
                             s.at("test_end").get<Timestamp>()};
        sp.validate();
        return sp;
    }
    if (!cfg.split) throw_usage("no split: pass --manifest or set \"split\" in the config");
    return *cfg.split;
}

corpus::IngestResult load_corpus(const std::string& path, const corpus::SplitSpec& split) {
    corpus::IngestReport rep;
    auto msgs = corpus::read_jsonl_file(path, rep);
    return corpus::ingest(std::move(msgs), split, rep);
}

bool needs_embeddings(const std::vector<CellSpec>& cells) {
    for (const auto& c : cells)
        if (c.content != repr::Content::tfidf) return true;
    return false;
}

PreparedCorpus prepare(const std::string& corpus_path, const corpus::SplitSpec& split, const ExperimentConfig& cfg,
                       const std::vector<CellSpec>& cells, const std::string& artifacts_path, Audit* audit) {
    auto data = load_corpus(corpus_path, split);
    if (!artifacts_path.empty())
        return PreparedCorpus::with_artifacts(std::move(data), split,
                                              TextArtifacts::from_json(read_json_file(artifacts_path)));
    return PreparedCorpus::fit(std::move(data), split, cfg.text, needs_embeddings(cells), cfg.seed, cfg.exec, audit);
}

void write_report(const std::string& dir, const eval::ExperimentReport& rep) {
    std::ostringstream csv;
    rep.write_csv(csv);
    write_text((fs::path(dir) / "report.csv").string(), csv.str());
    write_json((fs::path(dir) / "report.json").string(), rep.to_json());
}

void write_search_logs(const std::string& path, const std::vector<learn::SearchResult>& logs) {
    if (path.empty() || logs.empty()) return;
    std::ostringstream out;
    for (const auto& l : logs) l.write_log(out);
    write_text(path, out.str());
}

int run(int argc, char** argv) {
    CLI::App app{"Content-based email reply prediction"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "root seed");
    app.add_option("--threads", g.threads, "worker threads (fallback: TRIAGE_REC_THREADS)");
    app.add_flag("--deterministic", g.deterministic, "single-threaded reductions");
    app.add_option("--set", g.sets, "config override, dotted.key=value");

    std::string corpus_path, manifest, out, model, report_dir, artifacts, search_log, input, axis, histogram;

    auto* synth = app.add_subcommand("synth", "generate a synthetic mailbox");
    synth->add_option("--out-dir", out, "output directory")->required();

    auto* ingest = app.add_subcommand("ingest", "validate and split a corpus");
    ingest->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
    ingest->add_option("--manifest", manifest);
    ingest->add_option("--report", out, "ingestion report JSON")->required();

    auto* vocab = app.add_subcommand("vocab", "fit vocabulary, unigram table and reply rates");
    vocab->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
    vocab->add_option("--manifest", manifest);
    vocab->add_option("--out", out, "artifacts JSON")->required();
    bool vocab_embed = false;
    vocab->add_flag("--with-embeddings", vocab_embed, "also train or load word embeddings");

    auto* embedc = app.add_subcommand("embed", "train skip-gram word embeddings");
    embedc->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
    embedc->add_option("--manifest", manifest);
    embedc->add_option("--out", out, "word2vec text file")->required();

    CellFlags cell_flags;
    auto* train = app.add_subcommand("train", "train one cell and write a checkpoint");
    train->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
    train->add_option("--manifest", manifest);
    train->add_option("--model", model, "checkpoint JSON")->required();
    train->add_option("--artifacts", artifacts, "reuse artifacts from the vocab command");
    train->add_option("--search-log", search_log, "JSONL search log");
    cell_flags.add(train);

    auto* evalc = app.add_subcommand("eval", "test AUROC of a checkpoint, or of the configured cell over seeds");
    evalc->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
    evalc->add_option("--manifest", manifest);
    evalc->add_option("--model", model, "checkpoint JSON");
    evalc->add_option("--report-dir", report_dir)->required();
    evalc->add_option("--histogram", histogram, "contrast histogram CSV (PosNeg cells)");
    evalc->add_option("--search-log", search_log);
    cell_flags.add(evalc);

    auto* ablate = app.add_subcommand("ablate", "sweep one axis around the configured cell");
    ablate->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
    ablate->add_option("--manifest", manifest);
    ablate->add_option("--axis", axis, "similarity | history | aggregation | user_mode | content | classifier | matrix")
        ->required();
    ablate->add_option("--report-dir", report_dir)->required();
    ablate->add_option("--search-log", search_log);
    cell_flags.add(ablate);

    auto* ens = app.add_subcommand("ensemble", "average member probabilities per seed");
    ens->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
    ens->add_option("--manifest", manifest);
    ens->add_option("--report-dir", report_dir)->required();

    auto* pred = app.add_subcommand("predict", "score new messages against a checkpoint");
    pred->add_option("--model", model)->required()->check(CLI::ExistingFile);
    pred->add_option("--history", corpus_path, "mailbox JSONL for user histories")->required()->check(CLI::ExistingFile);
    pred->add_option("--input", input, "JSONL of new messages")->required()->check(CLI::ExistingFile);
    pred->add_option("--out", out, "CSV of email_id,recipient,probability")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        return 1;
    }

    const bool cell_cmd = train->parsed() || evalc->parsed() || ablate->parsed();
    auto L = load_config(g, cell_cmd ? &cell_flags : nullptr);
    auto& cfg = L.cfg;

    if (synth->parsed()) {
        auto gc = synth::GeneratorConfig::from_json(L.raw.value("generator", json::object()));
        if (g.seed) gc.seed = *g.seed;
        const auto c = synth::generate(gc);
        std::ostringstream jl, hid;
        synth::write_jsonl(c, jl);
        synth::write_hidden_csv(c, hid);
        write_text((fs::path(out) / "corpus.jsonl").string(), jl.str());
        write_text((fs::path(out) / "hidden.csv").string(), hid.str());
        write_json((fs::path(out) / "manifest.json").string(), synth::manifest(c));
        return 0;
    }
    if (ingest->parsed()) {
        const auto data = load_corpus(corpus_path, resolve_split(cfg, manifest));
        write_json(out, data.report.to_json());
        return 0;
    }
    if (vocab->parsed() || embedc->parsed()) {
        const auto split = resolve_split(cfg, manifest);
        const bool need = embedc->parsed() || vocab_embed;
        const auto pc = PreparedCorpus::fit(load_corpus(corpus_path, split), split, cfg.text, need, cfg.seed, cfg.exec,
                                            nullptr);
        if (vocab->parsed())
            write_json(out, pc.art.to_json());
        else
            embed::save_embeddings(out, *pc.art.embeddings, pc.art.unigrams);
        return 0;
    }
    if (train->parsed()) {
        const auto split = resolve_split(cfg, manifest);
        auto pc = prepare(corpus_path, split, cfg, {cfg.cell}, artifacts, nullptr);
        ExperimentConfig used = cfg;
        std::vector<learn::SearchResult> logs;
        if (cfg.search_budget > 0) {
            auto [best, log] = tune_cell(pc, cfg.cell, cfg, static_cast<std::size_t>(cfg.search_budget), nullptr);
            used = best;
            logs.push_back(std::move(log));
        }
        Checkpoint ck;
        ck.model = train_cell(pc, cfg.cell, used, cfg.seed, nullptr);
        ck.art = pc.art;
        ck.split = split;
        ck.config = used;
        write_json(model, ck.to_json());
        write_search_logs(search_log, logs);
        std::cout << "val_auroc " << ck.model.val_auroc << '\n';
        return 0;
    }
    if (evalc->parsed()) {
        eval::ExperimentReport rep;
        std::vector<double> contrast;
        std::vector<int> labels;
        bool posneg = false;
        if (!model.empty()) {
            const auto ck = Checkpoint::from_json(read_json_file(model));
            const auto split = manifest.empty() ? ck.split : resolve_split(cfg, manifest);
            auto pc = PreparedCorpus::with_artifacts(load_corpus(corpus_path, split), split, ck.art);
            const user::HistoryConfig h{ck.model.cell.mode, ck.model.cell.history_len};
            const auto te = build_examples(pc, corpus::Partition::test, h, nullptr);
            labels = te.labels();
            const auto p = score_cell(ck.model, pc, te, cfg.exec, &contrast);
            eval::CellResult r;
            r.cell = ck.model.cell;
            r.aurocs = {eval::auroc(p, labels)};
            r.val_aurocs = {ck.model.val_auroc};
            r.mean_auroc = r.aurocs[0];
            rep.cells.push_back(r);
            posneg = ck.model.cell.mode == user::HistoryMode::posneg;
        } else {
            const auto split = resolve_split(cfg, manifest);
            Audit audit(split);
            auto pc = prepare(corpus_path, split, cfg, {cfg.cell}, "", &audit);
            std::vector<learn::SearchResult> logs;
            rep = eval::run_matrix(pc, {cfg.cell}, cfg, &audit, &logs);
            rep.extra["audit"] = audit.to_json();
            write_search_logs(search_log, logs);
            if (!histogram.empty() && cfg.cell.mode == user::HistoryMode::posneg) {
                const auto tc = train_cell(pc, cfg.cell, cfg, cfg.seed, nullptr);
                const auto te = build_examples(pc, corpus::Partition::test, {cfg.cell.mode, cfg.cell.history_len}, nullptr);
                labels = te.labels();
                score_cell(tc, pc, te, cfg.exec, &contrast);
                posneg = true;
            }
        }
        if (!manifest.empty()) {
            const auto m = read_json_file(manifest);
            if (m.contains("bayes_auroc_by_partition") && m["bayes_auroc_by_partition"]["test"].is_number())
                rep.bayes_auroc = m["bayes_auroc_by_partition"]["test"].get<double>();
        }
        if (!histogram.empty()) {
            if (!posneg) throw_usage("--histogram needs a PosNeg cell");
            const auto h = eval::contrast_histogram(contrast, labels, cfg.histogram_bins);
            std::ostringstream csv;
            eval::write_histogram_csv(h, csv);
            write_text(histogram, csv.str());
            const auto means = eval::class_means(contrast, labels);
            rep.extra["contrast_mean"] = {{"replied", means[1]}, {"not_replied", means[0]}};
        }
        write_report(report_dir, rep);
        return 0;
    }
    if (ablate->parsed()) {
        const auto split = resolve_split(cfg, manifest);
        const auto cells = eval::ablation_cells(eval::axis_from_string(axis), cfg.cell);
        auto pc = prepare(corpus_path, split, cfg, cells, "", nullptr);
        std::vector<learn::SearchResult> logs;
        auto rep = eval::run_matrix(pc, cells, cfg, nullptr, &logs);
        write_search_logs(search_log, logs);
        write_report(report_dir, rep);
        return 0;
    }
    if (ens->parsed()) {
        const auto split = resolve_split(cfg, manifest);
        std::vector<CellSpec> cells;
        if (L.raw.contains("ensemble")) {
            for (const auto& c : L.raw.at("ensemble")) cells.push_back(CellSpec::from_json(c, cfg.cell));
        } else {
            CellSpec a = cfg.cell, b = cfg.cell;
            a.content = repr::Content::tfidf;
            a.classifier = Classifier::gbdt;
            b.content = repr::Content::cnn;
            b.classifier = Classifier::mlp;
            cells = {a, b};
        }
        auto pc = prepare(corpus_path, split, cfg, cells, "", nullptr);
        const auto res = eval::run_ensemble(pc, cells, cfg, nullptr);
        eval::ExperimentReport rep;
        rep.cells = res.members;
        rep.extra["ensemble"] = res.to_json();
        write_report(report_dir, rep);
        return 0;
    }
    if (pred->parsed()) {
        const auto ck = Checkpoint::from_json(read_json_file(model));
        const auto history = load_corpus(corpus_path, ck.split);
        corpus::IngestReport rep;
        const auto msgs = corpus::read_jsonl_file(input, rep);
        const auto preds = predict_messages(ck, history, msgs, cfg.exec);
        std::ostringstream csv;
        csv << "email_id,recipient,probability\n";
        for (const auto& p : preds) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.9f", p.probability);
            csv << p.email_id << ',' << p.recipient << ',' << buf << '\n';
        }
        write_text(out, csv.str());
        return 0;
    }
    return 1;
}

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        static const char* names[] = {"", "usage", "data", "training"};
        const int code = static_cast<int>(e.kind());
        std::cerr << "error: " << names[code] << ": " << one_line(e.what()) << '\n';
        return code;
    } catch (const json::exception& e) {
        std::cerr << "error: data: " << one_line(e.what()) << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: usage: " << one_line(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: data: " << one_line(e.what()) << '\n';
        return 2;
    }
}
