#include "triage/common.hpp"

#include <algorithm>

namespace triage {

double SparseVector::norm() const {
    double s = 0.0;
    for (double v : value) s += v * v;
    return std::sqrt(s);
}

std::vector<double> SparseVector::to_dense() const {
    std::vector<double> d(dim, 0.0);
    for (std::size_t k = 0; k < index.size(); ++k) d[index[k]] = value[k];
    return d;
}

SparseVector SparseVector::from_dense(std::span<const double> dense) {
    SparseVector s;
    s.dim = dense.size();
    for (std::size_t i = 0; i < dense.size(); ++i) {
        if (dense[i] != 0.0) {
            s.index.push_back(static_cast<std::uint32_t>(i));
            s.value.push_back(dense[i]);
        }
    }
    return s;
}

double dot(const SparseVector& a, const SparseVector& b) {
    double s = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.index.size() && j < b.index.size()) {
        if (a.index[i] < b.index[j])
            ++i;
        else if (a.index[i] > b.index[j])
            ++j;
        else
            s += a.value[i++] * b.value[j++];
    }
    return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double scale, std::span<const double> v, std::span<double> out) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += scale * v[i];
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    std::vector<double> w(logits.size());
    if (logits.empty()) return w;
    double mx = temperature * logits[0];
    for (double l : logits) mx = std::max(mx, temperature * l);
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        w[i] = std::exp(temperature * logits[i] - mx);
        z += w[i];
    }
    for (auto& v : w) v /= z;
    return w;
}

}  // namespace triage
