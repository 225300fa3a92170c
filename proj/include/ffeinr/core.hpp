#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ffeinr {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Rng = std::mt19937_64;

// Error hierarchy. Argument errors derive from std::invalid_argument so the
// CLI can map them to exit code 2; everything else is a runtime failure.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncationError : FormatError {
    using FormatError::FormatError;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IntegrityError : FormatError {
    using FormatError::FormatError;
};
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ArgumentError(what);
}

/// A named trainable tensor with its gradient accumulator.
///
/// Values live in a dense matrix for compute; `shape` is what gets written to
/// checkpoints (rank 1 for biases, rank 2 otherwise).
template <typename S>
struct Param {
    std::string name;
    Mat<S> value;
    Mat<S> grad;

    Param() = default;
    Param(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}

    std::vector<std::uint32_t> shape() const {
        if (value.cols() == 1) return {static_cast<std::uint32_t>(value.rows())};
        return {static_cast<std::uint32_t>(value.rows()), static_cast<std::uint32_t>(value.cols())};
    }
    void zero_grad() { grad.setZero(); }
};

template <typename S>
inline void fill_uniform(Mat<S>& m, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
}

}  // namespace ffeinr
