#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <cstdint>

namespace pnx::linalg {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// C = A(m x k) * B(k x n), row-major buffers.
inline void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    ConstMatMap A(a, m, k);
    ConstMatMap B(b, k, n);
    MatMap C(c, m, n);
    C.noalias() = A * B;
}

// C += A * B.
inline void matmul_acc(const double* a, const double* b, double* c, int64_t m, int64_t k,
                       int64_t n) {
    ConstMatMap A(a, m, k);
    ConstMatMap B(b, k, n);
    MatMap C(c, m, n);
    C.noalias() += A * B;
}

// C = A^T(m x k, stored k x m) * B(k x n).
inline void matmul_at(const double* a, const double* b, double* c, int64_t m, int64_t k,
                      int64_t n) {
    ConstMatMap A(a, k, m);
    ConstMatMap B(b, k, n);
    MatMap C(c, m, n);
    C.noalias() = A.transpose() * B;
}

// C += A(m x k) * B^T(k x n, stored n x k).
inline void matmul_bt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k,
                          int64_t n) {
    ConstMatMap A(a, m, k);
    ConstMatMap B(b, n, k);
    MatMap C(c, m, n);
    C.noalias() += A * B.transpose();
}

// C = A(m x k) * B^T(k x n, stored n x k).
inline void matmul_bt(const double* a, const double* b, double* c, int64_t m, int64_t k,
                      int64_t n) {
    ConstMatMap A(a, m, k);
    ConstMatMap B(b, n, k);
    MatMap C(c, m, n);
    C.noalias() = A * B.transpose();
}

// C += A^T(m x k, stored k x m) * B(k x n).
inline void matmul_at_acc(const double* a, const double* b, double* c, int64_t m, int64_t k,
                          int64_t n) {
    ConstMatMap A(a, k, m);
    ConstMatMap B(b, k, n);
    MatMap C(c, m, n);
    C.noalias() += A.transpose() * B;
}

// Fills w (rows x cols, row-major) with an orthogonal init: rows are
// orthonormal when rows <= cols, columns otherwise. Source matrix comes
// from the provided draw function so the result is stream-deterministic.
template <typename DrawFn>
inline void orthogonal_fill(double* w, int64_t rows, int64_t cols, DrawFn&& draw) {
    const int64_t big = std::max(rows, cols);
    const int64_t small = std::min(rows, cols);
    Eigen::MatrixXd g(big, small);
    for (int64_t i = 0; i < big; ++i)
        for (int64_t j = 0; j < small; ++j) g(i, j) = draw();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    // Sign-fix so the decomposition is unique given the random source.
    Eigen::VectorXd diag = qr.matrixQR().diagonal();
    for (int64_t j = 0; j < small; ++j)
        if (diag(j) < 0) q.col(j) = -q.col(j);
    MatMap W(w, rows, cols);
    if (rows <= cols)
        W = q.transpose();
    else
        W = q;
}

}  // namespace pnx::linalg
