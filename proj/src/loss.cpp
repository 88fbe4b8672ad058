#include "triage/loss.hpp"

#include <algorithm>

namespace triage::learn {

double weighted_logloss(double p, int y, double pw) {
    p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return y ? -pw * std::log(p) : -std::log(1.0 - p);
}

double weighted_logloss_grad(double p, int y, double pw) { return y ? pw * (p - 1.0) : p; }

double weighted_logloss_mean(std::span<const double> p, std::span<const int> y, double pw) {
    if (p.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += weighted_logloss(p[i], y[i], pw);
    return s / static_cast<double>(p.size());
}

double PositiveWeight::resolve(std::size_t n_pos, std::size_t n_neg) const {
    if (!balanced) return value;
    if (n_pos == 0) throw_training("balanced positive weight needs at least one positive");
    return static_cast<double>(n_neg) / static_cast<double>(n_pos);
}

nlohmann::json PositiveWeight::to_json() const {
    if (balanced) return "balanced";
    return value;
}

PositiveWeight PositiveWeight::from_json(const nlohmann::json& j) {
    PositiveWeight w;
    if (j.is_string()) {
        if (j.get<std::string>() != "balanced") throw_usage("positive weight must be a number or 'balanced'");
        w.balanced = true;
    } else {
        w.value = j.get<double>();
    }
    return w;
}

void Adam::step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads) {
    if (params.size() != grads.size()) throw_training("adam: parameter/gradient block mismatch");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const double step = lr_ * std::sqrt(c2) / c1;
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto& m = m_[b];
        auto& v = v_[b];
        auto p = params[b];
        auto g = grads[b];
        if (p.size() != m.size() || g.size() != p.size()) throw_training("adam: block size changed");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
            v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
            p[i] -= step * m[i] / (std::sqrt(v[i]) + eps_ * std::sqrt(c2));
        }
    }
}

bool Adam::moments_finite() const {
    for (const auto& b : m_)
        for (double x : b)
            if (!std::isfinite(x)) return false;
    for (const auto& b : v_)
        for (double x : b)
            if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace triage::learn
