#include "triage/lr.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "triage/metrics.hpp"

namespace triage::learn {

using nlohmann::json;

json LrConfig::to_json() const {
    return {{"C", C},
            {"pos_weight", pos_weight.to_json()},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"seed", seed}};
}

LrConfig LrConfig::from_json(const json& j) {
    LrConfig c;
    c.C = j.value("C", c.C);
    if (j.contains("pos_weight")) c.pos_weight = PositiveWeight::from_json(j.at("pos_weight"));
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    if (!(c.C > 0.0)) throw_usage("lr: C must be positive");
    if (c.batch_size < 1 || c.max_epochs < 1) throw_usage("lr: batch_size and max_epochs must be >= 1");
    return c;
}

double LrModel::logit(std::span<const std::uint32_t> idx, std::span<const double> val) const {
    double z = bias;
    for (std::size_t k = 0; k < idx.size(); ++k) z += w[idx[k]] * val[k];
    return z;
}

std::vector<double> LrModel::predict_proba(const Dataset& data, const ExecPolicy& exec) const {
    if (data.width() != w.size()) throw_data("lr: dataset width does not match model");
    std::vector<double> z(data.rows());
    const long n = static_cast<long>(data.rows());
#pragma omp parallel for num_threads(exec.pure_threads()) schedule(static)
    for (long r = 0; r < n; ++r) z[static_cast<std::size_t>(r)] = logit(data, static_cast<std::size_t>(r));
    for (double& v : z) v = sigmoid(v);
    return z;
}

json LrModel::to_json() const {
    return {{"w", w}, {"bias", bias}, {"C", C}, {"pos_weight", pos_weight}, {"epochs_run", epochs_run}};
}

LrModel LrModel::from_json(const json& j) {
    LrModel m;
    m.w = j.at("w").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.C = j.value("C", 1.0);
    m.pos_weight = j.value("pos_weight", 1.0);
    m.epochs_run = j.value("epochs_run", 0);
    return m;
}

double lr_objective(const LrModel& m, const Dataset& data, std::span<const std::uint32_t> rows, std::size_t n_train,
                    std::vector<double>* grad_w, double* grad_b) {
    const double inv_b = 1.0 / static_cast<double>(rows.size());
    const double reg = 1.0 / (m.C * static_cast<double>(n_train));
    if (grad_w) grad_w->assign(m.w.size(), 0.0);
    if (grad_b) *grad_b = 0.0;
    double loss = 0.0;
    for (auto r : rows) {
        const double p = sigmoid(m.logit(data, r));
        const int y = data.label(r);
        loss += weighted_logloss(p, y, m.pos_weight) * inv_b;
        const double dz = weighted_logloss_grad(p, y, m.pos_weight) * inv_b;
        if (grad_w) {
            auto idx = data.indices(r);
            auto val = data.values(r);
            for (std::size_t k = 0; k < idx.size(); ++k) (*grad_w)[idx[k]] += dz * val[k];
        }
        if (grad_b) *grad_b += dz;
    }
    double sq = 0.0;
    for (double x : m.w) sq += x * x;
    loss += 0.5 * reg * sq;
    if (grad_w)
        for (std::size_t i = 0; i < m.w.size(); ++i) (*grad_w)[i] += reg * m.w[i];
    return loss;
}

namespace {

bool has_both_classes(const Dataset& d) {
    const auto p = d.positives();
    return p > 0 && p < d.rows();
}

}  // namespace

LrModel train_lr(const Dataset& train, const Dataset* val, const LrConfig& cfg, const ExecPolicy& exec) {
    const std::size_t N = train.rows();
    const std::size_t n_pos = train.positives();
    if (n_pos == 0 || n_pos == N) throw_training("lr: training data needs both classes");
    if (val && val->width() != train.width()) throw_data("lr: validation width differs from training width");

    LrModel m;
    m.w.assign(train.width(), 0.0);
    m.C = cfg.C;
    m.pos_weight = cfg.pos_weight.resolve(n_pos, N - n_pos);

    const bool early = val && has_both_classes(*val);
    LrModel best = m;
    double best_auc = -1.0;
    int since_best = 0;

    Adam adam(cfg.learning_rate);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::uint32_t> order(N);
    std::iota(order.begin(), order.end(), 0u);
    std::vector<double> gw;
    std::vector<double> gb(1);
    std::vector<double> bias_block(1);
    const auto B = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < N; s += B) {
            std::span<const std::uint32_t> batch(order.data() + s, std::min(B, N - s));
            const double loss = lr_objective(m, train, batch, N, &gw, &gb[0]);
            if (!std::isfinite(loss)) throw_training("lr: loss diverged");
            bias_block[0] = m.bias;
            adam.step({std::span<double>(m.w), std::span<double>(bias_block)},
                      {std::span<const double>(gw), std::span<const double>(gb)});
            m.bias = bias_block[0];
        }
        m.epochs_run = epoch + 1;
        if (!early) continue;
        const auto p = m.predict_proba(*val, exec);
        const double auc = eval::auroc(p, val->labels());
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
