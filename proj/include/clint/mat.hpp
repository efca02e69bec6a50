#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace clint {

// Dense row-major matrix. Vectors are 1 x n or n x 1 as convenient.
template <typename S>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<S> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, S(0)) {}

    S& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const S& at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    S* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const S* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return data.size(); }

    void zero() { std::fill(data.begin(), data.end(), S(0)); }

    bool finite() const {
        for (const S v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }
};

// out = x * w, x: (n,k), w: (k,m), out: (n,m)
template <typename S>
void matmul(const Mat<S>& x, const Mat<S>& w, Mat<S>& out) {
    out = Mat<S>(x.rows, w.cols);
    for (int i = 0; i < x.rows; ++i) {
        const S* xi = x.row(i);
        S* oi = out.row(i);
        for (int k = 0; k < x.cols; ++k) {
            const S xv = xi[k];
            if (xv == S(0)) continue;
            const S* wk = w.row(k);
            for (int j = 0; j < w.cols; ++j) oi[j] += xv * wk[j];
        }
    }
}

// out += x^T * y, x: (n,k), y: (n,m), out: (k,m)
template <typename S>
void matmul_tn_acc(const Mat<S>& x, const Mat<S>& y, Mat<S>& out) {
    for (int i = 0; i < x.rows; ++i) {
        const S* xi = x.row(i);
        const S* yi = y.row(i);
        for (int k = 0; k < x.cols; ++k) {
            const S xv = xi[k];
            if (xv == S(0)) continue;
            S* ok = out.row(k);
            for (int j = 0; j < y.cols; ++j) ok[j] += xv * yi[j];
        }
    }
}

// out += x * w^T, x: (n,m), w: (k,m), out: (n,k)
template <typename S>
void matmul_nt_acc(const Mat<S>& x, const Mat<S>& w, Mat<S>& out) {
    for (int i = 0; i < x.rows; ++i) {
        const S* xi = x.row(i);
        S* oi = out.row(i);
        for (int k = 0; k < w.rows; ++k) {
            const S* wk = w.row(k);
            S acc = S(0);
            for (int j = 0; j < x.cols; ++j) acc += xi[j] * wk[j];
            oi[k] += acc;
        }
    }
}

}  // namespace clint
