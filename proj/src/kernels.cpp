#include "advlab/kernels.hpp"

#include <cmath>
#include <cstring>

namespace advlab::kernels {

namespace {

// Work threshold below which a parallel region is not opened.
constexpr int64_t kParCutoff = 1 << 15;

// Row bodies shared by the parallel kernels and their serial twins. Each
// writes one output row with a fixed-order inner loop, so a result never
// depends on how rows are distributed over threads.

inline void matmul_nn_row(const double* a, const double* b, double* c,
                          int64_t m, int64_t k, int64_t n, int64_t row) {
    double* crow = c + row * n;
    for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
    const double* arow = a + row * k;
    for (int64_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void matmul_tn_row(const double* a, const double* b, double* c,
                          int64_t m, int64_t k, int64_t n, int64_t row) {
    double* crow = c + row * n;
    for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (int64_t p = 0; p < k; ++p) {
        const double av = a[p * m + row];
        const double* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void matmul_nt_row(const double* a, const double* b, double* c,
                          int64_t m, int64_t k, int64_t n, int64_t row) {
    const double* arow = a + row * k;
    double* crow = c + row * n;
    for (int64_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] = acc;
    }
}

inline void affine_row(const double* x, const double* w, const double* bias,
                       double* y, int64_t in, int64_t out, int64_t row) {
    double* yrow = y + row * out;
    for (int64_t o = 0; o < out; ++o) yrow[o] = bias[o];
    const double* xrow = x + row * in;
    for (int64_t i = 0; i < in; ++i) {
        const double xv = xrow[i];
        const double* wrow = w + i * out;
        for (int64_t o = 0; o < out; ++o) yrow[o] += xv * wrow[o];
    }
}

inline double row_logsumexp(const double* x, int64_t cols) {
    double hi = x[0];
    for (int64_t c = 1; c < cols; ++c)
        if (x[c] > hi) hi = x[c];
    double acc = 0.0;
    for (int64_t c = 0; c < cols; ++c) acc += std::exp(x[c] - hi);
    return hi + std::log(acc);
}

inline void log_softmax_row(const double* x, double* y, int64_t cols,
                            int64_t row) {
    const double* xr = x + row * cols;
    double* yr = y + row * cols;
    const double lse = row_logsumexp(xr, cols);
    for (int64_t c = 0; c < cols; ++c) yr[c] = xr[c] - lse;
}

inline void log_softmax_bwd_row(const double* x, const double* dy, double* dx,
                                int64_t cols, int64_t row) {
    const double* xr = x + row * cols;
    const double* dyr = dy + row * cols;
    double* dxr = dx + row * cols;
    const double lse = row_logsumexp(xr, cols);
    double gsum = 0.0;
    for (int64_t c = 0; c < cols; ++c) gsum += dyr[c];
    for (int64_t c = 0; c < cols; ++c)
        dxr[c] += dyr[c] - std::exp(xr[c] - lse) * gsum;
}

inline void xent_row(const double* x, const double* labels, double* loss,
                     int64_t cols, int64_t row) {
    const double* xr = x + row * cols;
    const auto label = static_cast<int64_t>(labels[row]);
    loss[row] = row_logsumexp(xr, cols) - xr[label];
}

inline void xent_bwd_row(const double* x, const double* labels,
                         const double* dloss, double* dx, int64_t cols,
                         int64_t row) {
    const double* xr = x + row * cols;
    double* dxr = dx + row * cols;
    const auto label = static_cast<int64_t>(labels[row]);
    const double lse = row_logsumexp(xr, cols);
    const double g = dloss[row];
    for (int64_t c = 0; c < cols; ++c) {
        double p = std::exp(xr[c] - lse);
        if (c == label) p -= 1.0;
        dxr[c] += g * p;
    }
}

inline void kl_row(const double* a, const double* b, double* kl, int64_t cols,
                   int64_t row) {
    const double* ar = a + row * cols;
    const double* br = b + row * cols;
    const double lse_a = row_logsumexp(ar, cols);
    const double lse_b = row_logsumexp(br, cols);
    double acc = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
        const double lp = ar[c] - lse_a;
        const double lq = br[c] - lse_b;
        acc += std::exp(lp) * (lp - lq);
    }
    kl[row] = acc;
}

inline void kl_bwd_row(const double* a, const double* b, const double* kl,
                       const double* dkl, double* da, double* db, int64_t cols,
                       int64_t row) {
    const double* ar = a + row * cols;
    const double* br = b + row * cols;
    double* dar = da + row * cols;
    double* dbr = db + row * cols;
    const double lse_a = row_logsumexp(ar, cols);
    const double lse_b = row_logsumexp(br, cols);
    const double g = dkl[row];
    const double klv = kl[row];
    for (int64_t c = 0; c < cols; ++c) {
        const double lp = ar[c] - lse_a;
        const double lq = br[c] - lse_b;
        const double p = std::exp(lp);
        const double q = std::exp(lq);
        dar[c] += g * p * ((lp - lq) - klv);
        dbr[c] += g * (q - p);
    }
}

}  // namespace

void matmul_nn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParCutoff)
    for (int64_t row = 0; row < m; ++row) matmul_nn_row(a, b, c, m, k, n, row);
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParCutoff)
    for (int64_t row = 0; row < m; ++row) matmul_tn_row(a, b, c, m, k, n, row);
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParCutoff)
    for (int64_t row = 0; row < m; ++row) matmul_nt_row(a, b, c, m, k, n, row);
}

void affine_forward(const double* x, const double* w, const double* bias,
                    double* y, int64_t rows, int64_t in, int64_t out) {
#pragma omp parallel for schedule(static) if (rows * in * out > kParCutoff)
    for (int64_t r = 0; r < rows; ++r) affine_row(x, w, bias, y, in, out, r);
}

void bias_backward(const double* dy, double* db, int64_t rows, int64_t out) {
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = dy + r * out;
        for (int64_t o = 0; o < out; ++o) db[o] += row[o];
    }
}

void relu_forward(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParCutoff)
    for (int64_t i = 0; i < n; ++i)
        if (x[i] > 0.0) dx[i] += dy[i];
}

void ew_add(const double* a, const double* b, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void ew_sub(const double* a, const double* b, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void ew_mul(const double* a, const double* b, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void ew_scale(const double* a, double c, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] = c * a[i];
}

void ew_axpy(const double* a, double c, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] += c * a[i];
}

void log_softmax_forward(const double* x, double* y, int64_t rows,
                         int64_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > kParCutoff)
    for (int64_t r = 0; r < rows; ++r) log_softmax_row(x, y, cols, r);
}

void log_softmax_backward(const double* x, const double* dy, double* dx,
                          int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > kParCutoff)
    for (int64_t r = 0; r < rows; ++r) log_softmax_bwd_row(x, dy, dx, cols, r);
}

void softmax_xent_forward(const double* x, const double* labels, double* loss,
                          int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > kParCutoff)
    for (int64_t r = 0; r < rows; ++r) xent_row(x, labels, loss, cols, r);
}

void softmax_xent_backward(const double* x, const double* labels,
                           const double* dloss, double* dx, int64_t rows,
                           int64_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > kParCutoff)
    for (int64_t r = 0; r < rows; ++r)
        xent_bwd_row(x, labels, dloss, dx, cols, r);
}

void kl_forward(const double* a, const double* b, double* kl, int64_t rows,
                int64_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > kParCutoff)
    for (int64_t r = 0; r < rows; ++r) kl_row(a, b, kl, cols, r);
}

void kl_backward(const double* a, const double* b, const double* kl,
                 const double* dkl, double* da, double* db, int64_t rows,
                 int64_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > kParCutoff)
    for (int64_t r = 0; r < rows; ++r)
        kl_bwd_row(a, b, kl, dkl, da, db, cols, r);
}

double sum(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v;
    return acc;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc);
}

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
    for (int64_t row = 0; row < m; ++row) matmul_nn_row(a, b, c, m, k, n, row);
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
    for (int64_t row = 0; row < m; ++row) matmul_tn_row(a, b, c, m, k, n, row);
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
    for (int64_t row = 0; row < m; ++row) matmul_nt_row(a, b, c, m, k, n, row);
}

void affine_forward(const double* x, const double* w, const double* bias,
                    double* y, int64_t rows, int64_t in, int64_t out) {
    for (int64_t r = 0; r < rows; ++r) affine_row(x, w, bias, y, in, out, r);
}

void relu_forward(const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void ew_add(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void ew_sub(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void ew_mul(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void ew_scale(const double* a, double c, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = c * a[i];
}

void log_softmax_forward(const double* x, double* y, int64_t rows,
                         int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) log_softmax_row(x, y, cols, r);
}

void softmax_xent_forward(const double* x, const double* labels, double* loss,
                          int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) xent_row(x, labels, loss, cols, r);
}

void kl_forward(const double* a, const double* b, double* kl, int64_t rows,
                int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) kl_row(a, b, kl, cols, r);
}

}  // namespace serial

}  // namespace advlab::kernels
