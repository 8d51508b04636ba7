#pragma once

#include <cstddef>
#include <vector>

namespace iace {

using Vec = std::vector<double>;

// Row-major dense matrix. Small desk-scale shapes only; no BLAS.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    std::size_t size() const { return data.size(); }
};

double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);
// y += alpha * x
void axpy(double alpha, const Vec& x, Vec& y);

// A (r x c) times x (c) -> (r)
Vec matvec(const Matrix& a, const Vec& x);
// A^T (c x r effective) times x (r) -> (c)
Vec matvec_t(const Matrix& a, const Vec& x);
// A += u v^T  with u (rows), v (cols)
void add_outer(Matrix& a, const Vec& u, const Vec& v);
// A (n x k) times B (k x m) -> (n x m)
Matrix matmul(const Matrix& a, const Matrix& b);

Vec concat(const Vec& a, const Vec& b);

}  // namespace iace
