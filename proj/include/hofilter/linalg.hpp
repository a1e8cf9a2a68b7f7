#pragma once

// Small dense helpers. State dimensions in this project are 1-2, so everything
// is plain std::vector<double> with row-major matrices; no BLAS, no expression
// templates, just loops the compiler can see through.

#include <cmath>
#include <cstddef>
#include <vector>

#include "hofilter/errors.hpp"

namespace hofilter {

using Vec = std::vector<double>;

struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a; // row-major

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline double dot(const Vec& x, const Vec& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline Vec matvec(const Mat& m, const Vec& x) {
    Vec y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Mat transpose(const Mat& m) {
    Mat t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

inline Mat add(const Mat& a, const Mat& b) {
    Mat c = a;
    for (std::size_t i = 0; i < c.a.size(); ++i) c.a[i] += b.a[i];
    return c;
}

inline Mat scale(const Mat& m, double s) {
    Mat c = m;
    for (double& v : c.a) v *= s;
    return c;
}

inline double trace(const Mat& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows && i < m.cols; ++i) s += m(i, i);
    return s;
}

// Cholesky factor (lower) of a symmetric PSD matrix; tiny sizes only.
// Zero (or slightly negative, from rounding) pivots collapse to a zero column.
inline Mat cholesky(const Mat& m) {
    if (m.rows != m.cols) throw RejectedInput("cholesky: matrix not square");
    const std::size_t n = m.rows;
    Mat l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d < -1e-12) throw RejectedInput("cholesky: matrix not positive semidefinite");
        l(j, j) = d > 0.0 ? std::sqrt(d) : 0.0;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = l(j, j) > 0.0 ? s / l(j, j) : 0.0;
        }
    }
    return l;
}

} // namespace hofilter
