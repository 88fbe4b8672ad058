#include "triage/mlp.hpp"

#include <algorithm>
#include <numeric>

#include "triage/metrics.hpp"

namespace triage::learn {

using nlohmann::json;

MlpParams MlpParams::init(std::size_t input, std::size_t hidden, std::uint64_t seed) {
    if (input == 0) throw_usage("mlp: input width must be positive");
    MlpParams p;
    p.input = input;
    p.hidden = hidden;
    std::mt19937_64 rng(seed);
    if (hidden == 0) {
        p.w2.assign(input, 0.0);
        return p;
    }
    const double l1 = std::sqrt(6.0 / double(input + hidden));
    std::uniform_real_distribution<double> u1(-l1, l1);
    p.w1.resize(input * hidden);
    for (double& w : p.w1) w = u1(rng);
    p.b1.assign(hidden, 0.0);
    const double l2 = std::sqrt(6.0 / double(hidden + 1));
    std::uniform_real_distribution<double> u2(-l2, l2);
    p.w2.resize(hidden);
    for (double& w : p.w2) w = u2(rng);
    return p;
}

MlpParams MlpParams::zeros_like() const {
    MlpParams z;
    z.input = input;
    z.hidden = hidden;
    z.w1.assign(w1.size(), 0.0);
    z.b1.assign(b1.size(), 0.0);
    z.w2.assign(w2.size(), 0.0);
    z.b2.assign(1, 0.0);
    return z;
}

std::vector<std::span<double>> MlpParams::blocks() {
    if (hidden == 0) return {std::span<double>(w2), std::span<double>(b2)};
    return {std::span<double>(w1), std::span<double>(b1), std::span<double>(w2), std::span<double>(b2)};
}

bool MlpParams::all_finite() const {
    auto ok = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return ok(w1) && ok(b1) && ok(w2) && ok(b2);
}

json MlpParams::to_json() const {
    return {{"input", input}, {"hidden", hidden}, {"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2[0]}};
}

MlpParams MlpParams::from_json(const json& j) {
    MlpParams p;
    p.input = j.at("input").get<std::size_t>();
    p.hidden = j.at("hidden").get<std::size_t>();
    p.w1 = j.at("w1").get<std::vector<double>>();
    p.b1 = j.at("b1").get<std::vector<double>>();
    p.w2 = j.at("w2").get<std::vector<double>>();
    p.b2 = {j.at("b2").get<double>()};
    const bool ok = p.hidden == 0 ? (p.w1.empty() && p.b1.empty() && p.w2.size() == p.input)
                                  : (p.w1.size() == p.input * p.hidden && p.b1.size() == p.hidden &&
                                     p.w2.size() == p.hidden);
    if (!ok) throw_data("mlp checkpoint: parameter shapes do not match");
    return p;
}

namespace {

// Shared body of the sparse and dense forward passes. `each(f)` calls
// f(j, x_j) for every input entry.
template <class Each>
double forward_impl(const MlpParams& p, Each&& each, MlpCache* cache, double keep, std::mt19937_64* rng) {
    if (p.hidden == 0) {
        double z = p.b2[0];
        each([&](std::size_t j, double x) { z += p.w2[j] * x; });
        return z;
    }
    const std::size_t H = p.hidden;
    std::vector<double> pre(p.b1);
    each([&](std::size_t j, double x) {
        const double* col = p.w1.data() + j * H;
        for (std::size_t k = 0; k < H; ++k) pre[k] += x * col[k];
    });
    std::vector<double> act(H), mask(H, 1.0);
    if (keep < 1.0) {
        if (!rng) throw_usage("mlp: dropout needs a random source");
        std::bernoulli_distribution keep_unit(keep);
        for (auto& m : mask) m = keep_unit(*rng) ? 1.0 / keep : 0.0;
    }
    double z = p.b2[0];
    for (std::size_t k = 0; k < H; ++k) {
        act[k] = (pre[k] > 0.0 ? pre[k] : 0.0) * mask[k];
        z += p.w2[k] * act[k];
    }
    if (cache) {
        cache->pre = std::move(pre);
        cache->act = std::move(act);
        cache->mask = std::move(mask);
    }
    return z;
}

template <class Each>
void backward_impl(const MlpParams& p, Each&& each, const MlpCache& cache, double dlogit, MlpParams& g,
                   std::span<double> dx) {
    g.b2[0] += dlogit;
    if (p.hidden == 0) {
        each([&](std::size_t j, double x) {
            g.w2[j] += dlogit * x;
            if (!dx.empty()) dx[j] += dlogit * p.w2[j];
        });
        return;
    }
    const std::size_t H = p.hidden;
    std::vector<double> delta(H);
    for (std::size_t k = 0; k < H; ++k) {
        g.w2[k] += dlogit * cache.act[k];
        delta[k] = cache.pre[k] > 0.0 ? dlogit * p.w2[k] * cache.mask[k] : 0.0;
        g.b1[k] += delta[k];
    }
    each([&](std::size_t j, double x) {
        double* gcol = g.w1.data() + j * H;
        const double* col = p.w1.data() + j * H;
        double s = 0.0;
        for (std::size_t k = 0; k < H; ++k) {
            gcol[k] += x * delta[k];
            s += col[k] * delta[k];
        }
        if (!dx.empty()) dx[j] += s;
    });
}

auto sparse_each(std::span<const std::uint32_t> idx, std::span<const double> val) {
    return [idx, val](auto&& f) {
        for (std::size_t k = 0; k < idx.size(); ++k) f(idx[k], val[k]);
    };
}

auto dense_each(std::span<const double> x) {
    return [x](auto&& f) {
        for (std::size_t j = 0; j < x.size(); ++j) f(j, x[j]);
    };
}

}  // namespace

double mlp_forward(const MlpParams& p, std::span<const std::uint32_t> idx, std::span<const double> val,
                   MlpCache* cache, double keep, std::mt19937_64* rng) {
    return forward_impl(p, sparse_each(idx, val), cache, keep, rng);
}

double mlp_forward_dense(const MlpParams& p, std::span<const double> x, MlpCache* cache, double keep,
                         std::mt19937_64* rng) {
    if (x.size() != p.input) throw_data("mlp: input width mismatch");
    return forward_impl(p, dense_each(x), cache, keep, rng);
}

void mlp_backward(const MlpParams& p, std::span<const std::uint32_t> idx, std::span<const double> val,
                  const MlpCache& cache, double dlogit, MlpParams& grad) {
    backward_impl(p, sparse_each(idx, val), cache, dlogit, grad, {});
}

void mlp_backward_dense(const MlpParams& p, std::span<const double> x, const MlpCache& cache, double dlogit,
                        MlpParams& grad, std::span<double> dx) {
    backward_impl(p, dense_each(x), cache, dlogit, grad, dx);
}

json MlpConfig::to_json() const {
    return {{"hidden", hidden},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"keep_prob", keep_prob},
            {"pos_weight", pos_weight.to_json()},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"seed", seed}};
}

MlpConfig MlpConfig::from_json(const json& j) {
    MlpConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.keep_prob = j.value("keep_prob", c.keep_prob);
    if (j.contains("pos_weight")) c.pos_weight = PositiveWeight::from_json(j.at("pos_weight"));
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    if (!(c.keep_prob > 0.0 && c.keep_prob <= 1.0)) throw_usage("mlp: keep_prob must be in (0, 1]");
    if (c.batch_size < 1 || c.max_epochs < 1) throw_usage("mlp: batch_size and max_epochs must be >= 1");
    return c;
}

std::vector<double> MlpModel::predict_proba(const Dataset& data, const ExecPolicy& exec) const {
    if (data.width() != params.input) throw_data("mlp: dataset width does not match model");
    std::vector<double> p(data.rows());
    const long n = static_cast<long>(data.rows());
#pragma omp parallel for num_threads(exec.pure_threads()) schedule(static)
    for (long r = 0; r < n; ++r) {
        const auto rr = static_cast<std::size_t>(r);
        p[rr] = sigmoid(mlp_forward(params, data.indices(rr), data.values(rr), nullptr));
    }
    return p;
}

json MlpModel::to_json() const {
    return {{"params", params.to_json()}, {"pos_weight", pos_weight}, {"epochs_run", epochs_run}};
}

MlpModel MlpModel::from_json(const json& j) {
    MlpModel m;
    m.params = MlpParams::from_json(j.at("params"));
    m.pos_weight = j.value("pos_weight", 1.0);
    m.epochs_run = j.value("epochs_run", 0);
    return m;
}

MlpModel train_mlp(const Dataset& train, const Dataset* val, const MlpConfig& cfg, const ExecPolicy& exec) {
    const std::size_t N = train.rows();
    const std::size_t n_pos = train.positives();
    if (n_pos == 0 || n_pos == N) throw_training("mlp: training data needs both classes");
    if (val && val->width() != train.width()) throw_data("mlp: validation width differs from training width");

    MlpModel m;
    m.params = MlpParams::init(train.width(), cfg.hidden, cfg.seed);
    m.pos_weight = cfg.pos_weight.resolve(n_pos, N - n_pos);
    const bool early = val && val->positives() > 0 && val->positives() < val->rows();
    MlpModel best = m;
    double best_auc = -1.0;
    int since_best = 0;

    Adam adam(cfg.learning_rate);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::uint32_t> order(N);
    std::iota(order.begin(), order.end(), 0u);
    const auto B = static_cast<std::size_t>(cfg.batch_size);
    MlpCache cache;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < N; s += B) {
            const std::size_t bn = std::min(B, N - s);
            MlpParams grad = m.params.zeros_like();
            for (std::size_t i = s; i < s + bn; ++i) {
                const auto r = order[i];
                const double z = mlp_forward(m.params, train.indices(r), train.values(r), &cache, cfg.keep_prob, &rng);
                const double p = sigmoid(z);
                const double d = weighted_logloss_grad(p, train.label(r), m.pos_weight) / double(bn);
                mlp_backward(m.params, train.indices(r), train.values(r), cache, d, grad);
            }
            auto pb = m.params.blocks();
            auto gb = grad.blocks();
            std::vector<std::span<const double>> gconst(gb.begin(), gb.end());
            adam.step(pb, gconst);
            if (!m.params.all_finite()) throw_training("mlp: parameters diverged");
        }
        m.epochs_run = epoch + 1;
        if (!early) continue;
        const double auc = eval::auroc(m.predict_proba(*val, exec), val->labels());
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
