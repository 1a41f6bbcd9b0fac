#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "visent/errors.hpp"
#include "visent/rng.hpp"

namespace visent {

// Dense row-major matrix of doubles. The whole numerical stack runs in
// double so finite-difference gradient checks and bit-exact replay hold on
// one platform without a precision switch.
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double* row(int i) { return data_.data() + static_cast<size_t>(i) * cols_; }
    const double* row(int i) const { return data_.data() + static_cast<size_t>(i) * cols_; }

    double& at(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

    void zero() { std::fill(data_.begin(), data_.end(), 0.0); }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C += A * B with A (n,k), B (k,m), C (n,m). The p-inner / j-vectorized loop
// order keeps B rows streaming and lets the compiler emit FMA over j.
inline void matmul_acc(const double* A, const double* B, double* C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        double* c = C + static_cast<size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + static_cast<size_t>(p) * m;
            for (int j = 0; j < m; ++j) c[j] += av * b[j];
        }
    }
}

// C += A * B^T with A (n,k), B (m,k), C (n,m). Dot-product form.
inline void matmul_bt_acc(const double* A, const double* B, double* C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        double* c = C + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const double* b = B + static_cast<size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a[p] * b[p];
            c[j] += acc;
        }
    }
}

// C += A^T * B with A (k,n), B (k,m), C (n,m). Used for weight gradients.
inline void matmul_at_acc(const double* A, const double* B, double* C, int k, int n, int m) {
    for (int p = 0; p < k; ++p) {
        const double* a = A + static_cast<size_t>(p) * n;
        const double* b = B + static_cast<size_t>(p) * m;
        for (int i = 0; i < n; ++i) {
            const double av = a[i];
            double* c = C + static_cast<size_t>(i) * m;
            for (int j = 0; j < m; ++j) c[j] += av * b[j];
        }
    }
}

inline void matmul_acc(const Mat& A, const Mat& B, Mat& C) {
    if (A.cols() != B.rows() || C.rows() != A.rows() || C.cols() != B.cols())
        throw InvariantError("matmul shape mismatch");
    matmul_acc(A.data(), B.data(), C.data(), A.rows(), A.cols(), B.cols());
}

inline Mat matmul(const Mat& A, const Mat& B) {
    Mat C(A.rows(), B.cols());
    matmul_acc(A, B, C);
    return C;
}

// A named parameter tensor: value buffer plus a gradient buffer of the same
// shape. Rank <= 2 covers everything in the model (vectors and matrices).
struct Tensor {
    std::string name;
    int rows = 0;
    int cols = 1;  // 1 for vectors
    std::vector<double> v;
    std::vector<double> g;

    Tensor() = default;
    Tensor(std::string n, int r, int c) : name(std::move(n)), rows(r), cols(c) {
        v.assign(static_cast<size_t>(r) * c, 0.0);
        g.assign(v.size(), 0.0);
    }

    size_t count() const { return v.size(); }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }

    void init_normal(RngStream& rng, double stddev) {
        for (auto& x : v) x = rng.normal(0.0, stddev);
    }
};

}  // namespace visent
