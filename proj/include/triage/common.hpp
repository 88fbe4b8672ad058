#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace triage {

// UTC epoch seconds.
using Timestamp = std::int64_t;

// Maps onto the CLI exit status.
enum class ErrorKind : int { usage = 1, data = 2, training = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& what) { throw Error(ErrorKind::usage, what); }
[[noreturn]] inline void throw_data(const std::string& what) { throw Error(ErrorKind::data, what); }
[[noreturn]] inline void throw_training(const std::string& what) { throw Error(ErrorKind::training, what); }

/// Sparse vector with strictly increasing indices.
struct SparseVector {
    std::vector<std::uint32_t> index;
    std::vector<double> value;
    std::size_t dim = 0;

    std::size_t nnz() const { return index.size(); }
    bool empty() const { return index.empty(); }
    double norm() const;
    std::vector<double> to_dense() const;
    static SparseVector from_dense(std::span<const double> dense);
};

double dot(const SparseVector& a, const SparseVector& b);
double dot(std::span<const double> a, std::span<const double> b);

// out += scale * v
void axpy(double scale, std::span<const double> v, std::span<double> out);

inline double sigmoid(double z) {
    // Split form avoids overflow in exp for large |z|.
    if (z >= 0) {
        double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

/// Numerically stable softmax of `logits` scaled by `temperature`.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

/// Threading knobs shared by every parallel kernel.
struct ExecPolicy {
    int threads = 1;
    bool deterministic = true;

    // Threads for work whose result does not depend on scheduling.
    int pure_threads() const { return threads < 1 ? 1 : threads; }
    // Threads for reductions and racy updates; 1 in deterministic mode.
    int racy_threads() const { return deterministic ? 1 : pure_threads(); }
};

}  // namespace triage
