#include "linalg.hpp"

#include <cmath>

#include "errors.hpp"

namespace iace {

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw_invalid("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vec& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

void axpy(double alpha, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw_invalid("axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vec matvec(const Matrix& a, const Vec& x) {
    if (a.cols != x.size()) throw_invalid("matvec: shape mismatch");
    Vec y(a.rows, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* row = a.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
    return y;
}

Vec matvec_t(const Matrix& a, const Vec& x) {
    if (a.rows != x.size()) throw_invalid("matvec_t: shape mismatch");
    Vec y(a.cols, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* row = a.row(r);
        const double xr = x[r];
        for (std::size_t c = 0; c < a.cols; ++c) y[c] += row[c] * xr;
    }
    return y;
}

void add_outer(Matrix& a, const Vec& u, const Vec& v) {
    if (a.rows != u.size() || a.cols != v.size()) throw_invalid("add_outer: shape mismatch");
    for (std::size_t r = 0; r < a.rows; ++r) {
        double* row = a.row(r);
        const double ur = u[r];
        for (std::size_t c = 0; c < a.cols; ++c) row[c] += ur * v[c];
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw_invalid("matmul: shape mismatch");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* orow = out.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Vec concat(const Vec& a, const Vec& b) {
    Vec out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace iace
