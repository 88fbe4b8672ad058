#include "triage/network.hpp"

#include <algorithm>
#include <numeric>

#include "triage/kernels.hpp"
#include "triage/metrics.hpp"

namespace triage::learn {

using nlohmann::json;

json NetworkConfig::to_json() const {
    return {{"widths", widths},
            {"filters", filters},
            {"hidden", hidden},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"keep_prob", keep_prob},
            {"pos_weight", pos_weight.to_json()},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"concat_hidden", concat_hidden},
            {"chunk", chunk}};
}

NetworkConfig NetworkConfig::from_json(const json& j) {
    NetworkConfig c;
    c.widths = j.value("widths", c.widths);
    c.filters = j.value("filters", c.filters);
    c.hidden = j.value("hidden", c.hidden);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.keep_prob = j.value("keep_prob", c.keep_prob);
    if (j.contains("pos_weight")) c.pos_weight = PositiveWeight::from_json(j.at("pos_weight"));
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.concat_hidden = j.value("concat_hidden", c.concat_hidden);
    c.chunk = j.value("chunk", c.chunk);
    if (c.widths.size() != c.filters.size() || c.widths.empty()) throw_usage("network: widths and filters must pair up");
    if (!(c.keep_prob > 0.0 && c.keep_prob <= 1.0)) throw_usage("network: keep_prob must be in (0, 1]");
    if (c.batch_size < 1 || c.max_epochs < 1 || c.chunk < 1) throw_usage("network: batch_size, max_epochs, chunk >= 1");
    return c;
}

NetworkModel NetworkModel::init(const FeatureLayout& layout, bool cnn_encoder, int embed_dim,
                                user::AggregationKind kind, int history_length, double gamma,
                                const NetworkConfig& cfg, std::uint64_t seed) {
    NetworkModel m;
    m.layout = layout;
    m.cnn_encoder = cnn_encoder;
    if (cnn_encoder) {
        m.cnn = repr::CnnParams::init(cfg.widths, cfg.filters, embed_dim, seed);
        if (m.cnn.output_dim() != layout.email_dim) throw_usage("network: layout email_dim must equal CNN output");
    } else {
        m.cnn.widths.clear();
        m.cnn.filters.clear();
        m.cnn.dim = embed_dim;
    }
    m.attention = user::AttentionParams::make(kind, static_cast<std::size_t>(history_length), layout.email_dim,
                                              cfg.concat_hidden, gamma, seed + 1);
    m.head = MlpParams::init(layout.width(), cfg.hidden, seed + 2);
    return m;
}

NetworkModel NetworkModel::zeros_like() const {
    NetworkModel z = *this;
    if (cnn_encoder) z.cnn = cnn.zeros_like();
    z.attention = attention.zeros_like();
    z.head = head.zeros_like();
    return z;
}

std::vector<std::span<double>> NetworkModel::blocks() {
    std::vector<std::span<double>> out;
    if (cnn_encoder)
        for (auto b : cnn.blocks()) out.push_back(b);
    for (auto b : attention.blocks()) out.push_back(b);
    for (auto b : head.blocks()) out.push_back(b);
    return out;
}

bool NetworkModel::all_finite() const {
    return (!cnn_encoder || cnn.all_finite()) && attention.all_finite() && head.all_finite();
}

json NetworkModel::to_json() const {
    json j = {{"layout", layout.to_json()},
              {"cnn_encoder", cnn_encoder},
              {"attention", attention.to_json()},
              {"head", head.to_json()},
              {"pos_weight", pos_weight},
              {"epochs_run", epochs_run}};
    if (cnn_encoder) j["cnn"] = cnn.to_json();
    return j;
}

NetworkModel NetworkModel::from_json(const json& j) {
    NetworkModel m;
    m.layout = FeatureLayout::from_json(j.at("layout"));
    m.cnn_encoder = j.at("cnn_encoder").get<bool>();
    if (m.cnn_encoder) m.cnn = repr::CnnParams::from_json(j.at("cnn"));
    m.attention = user::AttentionParams::from_json(j.at("attention"));
    m.head = MlpParams::from_json(j.at("head"));
    m.pos_weight = j.value("pos_weight", 1.0);
    m.epochs_run = j.value("epochs_run", 0);
    if (m.head.input != m.layout.width()) throw_data("network checkpoint: head width does not match layout");
    return m;
}

namespace {

std::vector<std::uint32_t> unique_ids(std::span<const NetExample> batch) {
    std::vector<std::uint32_t> ids;
    for (const auto& ex : batch) {
        ids.push_back(ex.email);
        ids.insert(ids.end(), ex.primary.begin(), ex.primary.end());
        ids.insert(ids.end(), ex.negative.begin(), ex.negative.end());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::size_t slot_of(const std::vector<std::uint32_t>& ids, std::uint32_t id) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
}

std::vector<std::vector<double>> encode(const NetworkModel& m, const EncoderBank& bank,
                                        const std::vector<std::uint32_t>& ids, std::vector<repr::CnnCache>* caches,
                                        const ExecPolicy& exec) {
    for (auto id : ids)
        if (id >= bank.size()) throw_data("network: email id outside the encoder bank");
    if (!m.cnn_encoder) {
        if (!bank.fixed) throw_usage("network: fixed encoder needs precomputed vectors");
        std::vector<std::vector<double>> out;
        out.reserve(ids.size());
        for (auto id : ids) out.push_back((*bank.fixed)[id]);
        return out;
    }
    if (!bank.sequences || !bank.table) throw_usage("network: CNN encoder needs sequences and an embedding table");
    std::vector<std::span<const std::uint32_t>> seqs;
    seqs.reserve(ids.size());
    for (auto id : ids) seqs.emplace_back((*bank.sequences)[id]);
    return kernels::cnn_encode_omp(seqs, *bank.table, m.cnn, caches, exec.pure_threads());
}

struct ExampleState {
    std::vector<double> x;  // assembled input
    std::vector<double> gp, gn;
    user::AttentionCache ap, an;
    user::SimilarityFeatures sims;
    MlpCache head;
};

template <class Lookup>
double forward_one(const NetworkModel& m, Lookup&& enc, const NetExample& ex, ExampleState& st) {
    const auto& L = m.layout;
    const std::size_t D = L.email_dim;
    std::span<const double> e = enc(ex.email);
    auto hist = [&](const std::vector<std::uint32_t>& ids) {
        std::vector<std::span<const double>> h;
        h.reserve(ids.size());
        for (auto id : ids) h.push_back(enc(id));
        return h;
    };
    const bool paired = L.mode == user::HistoryMode::posneg;
    st.gp = ex.primary.empty() ? std::vector<double>(D, 0.0) : user::aggregate_dense(e, hist(ex.primary), m.attention, &st.ap);
    if (paired)
        st.gn = ex.negative.empty() ? std::vector<double>(D, 0.0)
                                    : user::aggregate_dense(e, hist(ex.negative), m.attention, &st.an);
    st.sims = {};
    st.sims.paired = paired;
    st.sims.sim_pos = ex.primary.empty() ? 0.0 : dot(e, st.gp);
    if (paired) {
        st.sims.sim_neg = ex.negative.empty() ? 0.0 : dot(e, st.gn);
        st.sims.contrast = st.sims.sim_pos - st.sims.sim_neg;
    }
    st.x.assign(L.width(), 0.0);
    assemble_dense(L, e, st.gp, paired ? std::span<const double>(st.gn) : std::span<const double>(), st.sims,
                   ex.reply_rate, ex.primary.empty(), ex.negative.empty(), st.x);
    return mlp_forward_dense(m.head, st.x, &st.head);
}

}  // namespace

double network_loss(const NetworkModel& m, const EncoderBank& bank, std::span<const NetExample> batch, NetworkModel* grad,
                    double keep, std::mt19937_64* rng, const ExecPolicy& exec) {
    if (batch.empty()) return 0.0;
    const auto ids = unique_ids(batch);
    std::vector<repr::CnnCache> caches;
    auto enc = encode(m, bank, ids, grad && m.cnn_encoder ? &caches : nullptr, exec);
    const std::size_t D = m.layout.email_dim;
    for (const auto& v : enc)
        if (v.size() != D) throw_data("network: encoder output does not match layout");

    std::vector<std::vector<double>> mask;
    if (keep < 1.0) {
        if (!rng) throw_usage("network: dropout needs a random source");
        std::bernoulli_distribution keep_unit(keep);
        mask.assign(ids.size(), std::vector<double>(D));
        for (std::size_t s = 0; s < ids.size(); ++s)
            for (std::size_t j = 0; j < D; ++j) {
                mask[s][j] = keep_unit(*rng) ? 1.0 / keep : 0.0;
                enc[s][j] *= mask[s][j];
            }
    }
    auto lookup = [&](std::uint32_t id) { return std::span<const double>(enc[slot_of(ids, id)]); };

    std::vector<std::vector<double>> d_enc;
    if (grad) d_enc.assign(ids.size(), std::vector<double>(D, 0.0));
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const auto& L = m.layout;
    const bool paired = L.mode == user::HistoryMode::posneg;
    double loss = 0.0;
    ExampleState st;
    std::vector<double> dx, d_email;
    for (const auto& ex : batch) {
        const double z = forward_one(m, lookup, ex, st);
        const double p = sigmoid(z);
        loss += weighted_logloss(p, ex.label, m.pos_weight) * inv_b;
        if (!grad) continue;

        const double dz = weighted_logloss_grad(p, ex.label, m.pos_weight) * inv_b;
        dx.assign(L.width(), 0.0);
        mlp_backward_dense(m.head, st.x, st.head, dz, grad->head, dx);

        const auto e = lookup(ex.email);
        d_email.assign(dx.begin(), dx.begin() + static_cast<long>(D));
        std::vector<double> d_gp(dx.begin() + static_cast<long>(L.user_offset()),
                                 dx.begin() + static_cast<long>(L.user_offset() + D));
        std::vector<double> d_gn;
        if (paired)
            d_gn.assign(dx.begin() + static_cast<long>(L.user_offset() + D),
                        dx.begin() + static_cast<long>(L.user_offset() + 2 * D));
        if (L.similarity) {
            const std::size_t s = L.similarity_offset();
            const double dsp = paired ? dx[s] + dx[s + 2] : dx[s];
            if (!ex.primary.empty()) {
                axpy(dsp, st.gp, d_email);
                axpy(dsp, e, d_gp);
            }
            if (paired && !ex.negative.empty()) {
                const double dsn = dx[s + 1] - dx[s + 2];
                axpy(dsn, st.gn, d_email);
                axpy(dsn, e, d_gn);
            }
        }
        auto back = [&](const std::vector<std::uint32_t>& hist_ids, const user::AttentionCache& cache,
                        const std::vector<double>& d_g) {
            if (hist_ids.empty()) return;
            std::vector<std::span<const double>> h;
            std::vector<std::span<double>> dh;
            for (auto id : hist_ids) {
                h.push_back(lookup(id));
                dh.emplace_back(d_enc[slot_of(ids, id)]);
            }
            user::aggregate_dense_backward(d_g, e, h, m.attention, cache, d_email, dh, grad->attention);
        };
        back(ex.primary, st.ap, d_gp);
        if (paired) back(ex.negative, st.an, d_gn);
        axpy(1.0, d_email, d_enc[slot_of(ids, ex.email)]);
    }

    if (grad && m.cnn_encoder) {
        for (std::size_t s = 0; s < ids.size(); ++s) {
            auto& up = d_enc[s];
            if (!mask.empty())
                for (std::size_t j = 0; j < D; ++j) up[j] *= mask[s][j];
            repr::cnn_backward(up, (*bank.sequences)[ids[s]], *bank.table, m.cnn, caches[s], grad->cnn);
        }
    }
    return loss;
}

std::vector<std::vector<double>> encode_all(const NetworkModel& m, const EncoderBank& bank, const ExecPolicy& exec) {
    std::vector<std::uint32_t> ids(bank.size());
    std::iota(ids.begin(), ids.end(), 0u);
    return encode(m, bank, ids, nullptr, exec);
}

NetForward network_forward(const NetworkModel& m, const std::vector<std::vector<double>>& enc, const NetExample& ex) {
    ExampleState st;
    auto lookup = [&](std::uint32_t id) { return std::span<const double>(enc.at(id)); };
    NetForward out;
    out.logit = forward_one(m, lookup, ex, st);
    out.input = std::move(st.x);
    out.sims = st.sims;
    return out;
}

std::vector<double> network_predict(const NetworkModel& m, const EncoderBank& bank, std::span<const NetExample> examples,
                                    const ExecPolicy& exec) {
    const auto ids = unique_ids(examples);
    const auto enc = encode(m, bank, ids, nullptr, exec);
    std::vector<double> p(examples.size());
    const long n = static_cast<long>(examples.size());
#pragma omp parallel for num_threads(exec.pure_threads()) schedule(static)
    for (long i = 0; i < n; ++i) {
        ExampleState st;
        auto lookup = [&](std::uint32_t id) { return std::span<const double>(enc[slot_of(ids, id)]); };
        p[static_cast<std::size_t>(i)] = sigmoid(forward_one(m, lookup, examples[static_cast<std::size_t>(i)], st));
    }
    return p;
}

NetworkModel train_network(NetworkModel m, const EncoderBank& bank, std::span<const NetExample> train,
                           std::span<const NetExample> val, const NetworkConfig& cfg, std::uint64_t seed,
                           const ExecPolicy& exec) {
    std::size_t n_pos = 0;
    for (const auto& ex : train) n_pos += ex.label == 1 ? 1 : 0;
    if (n_pos == 0 || n_pos == train.size()) throw_training("network: training data needs both classes");
    m.pos_weight = cfg.pos_weight.resolve(n_pos, train.size() - n_pos);

    std::vector<int> val_labels;
    for (const auto& ex : val) val_labels.push_back(ex.label);
    const auto val_pos = static_cast<std::size_t>(std::count(val_labels.begin(), val_labels.end(), 1));
    const bool early = val_pos > 0 && val_pos < val_labels.size();

    // Chunks of consecutive examples; callers order examples by recipient and time.
    std::vector<std::pair<std::size_t, std::size_t>> chunks;
    const auto C = static_cast<std::size_t>(cfg.chunk);
    for (std::size_t s = 0; s < train.size(); s += C) chunks.emplace_back(s, std::min(train.size(), s + C));

    Adam adam(cfg.learning_rate);
    std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
    NetworkModel best = m;
    double best_auc = -1.0;
    int since_best = 0;
    std::vector<NetExample> batch;
    const auto B = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(chunks.begin(), chunks.end(), rng);
        std::size_t c = 0;
        while (c < chunks.size()) {
            batch.clear();
            while (c < chunks.size() && batch.size() < B) {
                for (std::size_t i = chunks[c].first; i < chunks[c].second; ++i) batch.push_back(train[i]);
                ++c;
            }
            NetworkModel grad = m.zeros_like();
            const double loss = network_loss(m, bank, batch, &grad, cfg.keep_prob, &rng, exec);
            if (!std::isfinite(loss)) throw_training("network: loss diverged");
            auto pb = m.blocks();
            auto gb = grad.blocks();
            adam.step(pb, std::vector<std::span<const double>>(gb.begin(), gb.end()));
            if (!m.all_finite()) throw_training("network: parameters diverged");
        }
        m.epochs_run = epoch + 1;
        if (!early) continue;
        const double auc = eval::auroc(network_predict(m, bank, val, exec), val_labels);
        if (auc > best_auc) {
            best_auc = auc;
            best = m;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    if (!early) return m;
    best.epochs_run = m.epochs_run;
    best.best_val_auroc = best_auc;
    return best;
}

}  // namespace triage::learn
