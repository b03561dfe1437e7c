#ifndef LLMO_MATRIX_HPP
#define LLMO_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "llmo/errors.hpp"

namespace llmo {

// Dense row-major matrix, just large enough for the state spaces this
// project enumerates (a few thousand states at most).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::vector<double> matvec(const std::vector<double>& x) const {
        if (x.size() != cols_) throw ValidationError("matvec: size mismatch");
        std::vector<double> y(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            double acc = 0.0;
            const double* row = &a_[i * cols_];
            for (std::size_t j = 0; j < cols_; ++j) acc += row[j] * x[j];
            y[i] = acc;
        }
        return y;
    }

    // Copy of the half-open block [r0, r1) x [c0, c1).
    Matrix block(std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) const {
        if (r1 < r0 || c1 < c0 || r1 > rows_ || c1 > cols_)
            throw ValidationError("block: bad range");
        Matrix b(r1 - r0, c1 - c0);
        for (std::size_t i = r0; i < r1; ++i)
            for (std::size_t j = c0; j < c1; ++j) b(i - r0, j - c0) = (*this)(i, j);
        return b;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> a_;
};

inline std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> s(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) s[j] += m(i, j);
    return s;
}

inline bool is_column_stochastic(const Matrix& m, double tol = 1e-12) {
    if (m.rows() != m.cols()) return false;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (m(i, j) < -tol) return false;
    for (double s : column_sums(m))
        if (std::abs(s - 1.0) > tol) return false;
    return true;
}

// Exact test: transition builders accumulate probability mass, so entries
// that should be zero are never touched and compare equal to 0.0.
inline bool is_upper_triangular_exact(const Matrix& m) {
    for (std::size_t i = 1; i < m.rows(); ++i)
        for (std::size_t j = 0; j < i && j < m.cols(); ++j)
            if (m(i, j) != 0.0) return false;
    return true;
}

inline bool is_entrywise_positive(const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (m(i, j) <= 0.0) return false;
    return true;
}

// Largest-magnitude eigenvalue of a nonnegative matrix. Triangular inputs
// are read off the diagonal; otherwise power iteration with a relative
// tolerance of 1e-12 and a hard cap of 1e4 iterations.
inline double spectral_radius(const Matrix& m, double rel_tol = 1e-12,
                              std::size_t max_iter = 10000) {
    if (m.rows() != m.cols()) throw ValidationError("spectral_radius: not square");
    const std::size_t n = m.rows();
    if (n == 0) return 0.0;
    if (is_upper_triangular_exact(m)) {
        double r = 0.0;
        for (std::size_t i = 0; i < n; ++i) r = std::max(r, std::abs(m(i, i)));
        return r;
    }
    std::vector<double> v(n, 1.0 / static_cast<double>(n));
    double lambda = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        std::vector<double> w = m.matvec(v);
        double norm = 0.0;
        for (double x : w) norm += std::abs(x);
        if (norm == 0.0) return 0.0;
        const double next = norm;  // |v|_1 == 1 at every step
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
        if (it > 0 && std::abs(next - lambda) <= rel_tol * std::max(next, 1e-300))
            return next;
        lambda = next;
    }
    return lambda;
}

}  // namespace llmo

#endif
