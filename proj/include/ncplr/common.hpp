#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ncplr {

/// Dense row-major matrix; one row per instance throughout the library.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = std::size_t;

// Error hierarchy. Every failure surfaced by the library is one of these.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct UsageError : Error {
    using Error::Error;
};
struct StalenessError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct NormalizationError : NumericError {
    using NumericError::NumericError;
};

/// Thread cap from NCPLR_THREADS; falls back to hardware concurrency.
inline unsigned thread_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("NCPLR_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) return std::min<unsigned>(static_cast<unsigned>(v), hw);
    }
    return hw;
}

/// Runs fn(i) for i in [0, n). Each index is visited exactly once, so
/// callers that write only to slot i get results independent of thread count.
template <typename Fn>
void parallel_for(Index n, Fn&& fn) {
    unsigned threads = std::min<unsigned>(thread_count(), static_cast<unsigned>(std::max<Index>(n, 1)));
    if (threads <= 1 || n < 64) {
        for (Index i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    Index chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        Index lo = t * chunk;
        Index hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (Index i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

/// Numerically stable softmax of a single row.
inline Vector softmax(const Vector& logits) {
    double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp().matrix();
    return e / e.sum();
}

inline RowMatrix softmax_rows(const RowMatrix& logits) {
    RowMatrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        out.row(i) = softmax(logits.row(i).transpose()).transpose();
    }
    return out;
}

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
Index argmax(const Eigen::MatrixBase<Derived>& v) {
    Index best = 0;
    for (Eigen::Index k = 1; k < v.size(); ++k) {
        if (v(k) > v(static_cast<Eigen::Index>(best))) best = static_cast<Index>(k);
    }
    return best;
}

/// True when every entry is >= -tol and the sum is 1 within tol.
template <typename Derived>
bool on_simplex(const Eigen::MatrixBase<Derived>& v, double tol = 1e-6) {
    if (!v.allFinite()) return false;
    if (v.minCoeff() < -tol) return false;
    return std::abs(v.sum() - 1.0) <= tol;
}

/// Shortest round-trip decimal text for a double ('.' separator, locale free).
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace ncplr
