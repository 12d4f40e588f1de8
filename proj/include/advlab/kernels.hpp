#pragma once

#include <cstdint>
#include <span>

// Dense kernels behind the autodiff graph. The default entry points are
// OpenMP-parallel over independent output rows; every output element is
// produced by the same fixed-order serial inner loop as the twin in
// kernels::serial, so results are bitwise identical for any thread count.
// Whole-array reductions (sum, dot, l2_norm) are kept serial with a fixed
// left-to-right order.

namespace advlab::kernels {

// c[m,n] = sum_k a[m,k] * b[k,n]           a: MxK, b: KxN, c: MxN
void matmul_nn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);
// c[m,n] = sum_k a[k,m] * b[k,n]           a: KxM (transposed use), b: KxN
void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);
// c[m,n] = sum_k a[m,k] * b[n,k]           a: MxK, b: NxK
void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);

// y[r,o] = bias[o] + sum_i x[r,i] * w[i,o]
void affine_forward(const double* x, const double* w, const double* bias,
                    double* y, int64_t rows, int64_t in, int64_t out);
// db[o] += sum_r dy[r,o] (serial, rows ascending)
void bias_backward(const double* dy, double* db, int64_t rows, int64_t out);

void relu_forward(const double* x, double* y, int64_t n);
// dx[i] += dy[i] * (x[i] > 0); the subgradient at 0 is 0
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);

void ew_add(const double* a, const double* b, double* y, int64_t n);
void ew_sub(const double* a, const double* b, double* y, int64_t n);
void ew_mul(const double* a, const double* b, double* y, int64_t n);
void ew_scale(const double* a, double c, double* y, int64_t n);
// y[i] += c * a[i]
void ew_axpy(const double* a, double c, double* y, int64_t n);

// Row-wise softmax family over logits shaped rows x cols.
void log_softmax_forward(const double* x, double* y, int64_t rows, int64_t cols);
void log_softmax_backward(const double* x, const double* dy, double* dx,
                          int64_t rows, int64_t cols);
// loss[r] = logsumexp(x[r,:]) - x[r,label[r]]; labels validated by caller
void softmax_xent_forward(const double* x, const double* labels, double* loss,
                          int64_t rows, int64_t cols);
// dx[r,c] += dloss[r] * (softmax(x[r,:])[c] - [c == label[r]])
void softmax_xent_backward(const double* x, const double* labels,
                           const double* dloss, double* dx, int64_t rows,
                           int64_t cols);
// kl[r] = KL(softmax(a[r,:]) || softmax(b[r,:])), computed in log space
void kl_forward(const double* a, const double* b, double* kl, int64_t rows,
                int64_t cols);
void kl_backward(const double* a, const double* b, const double* kl,
                 const double* dkl, double* da, double* db, int64_t rows,
                 int64_t cols);

// Serial reductions, fixed left-to-right accumulation.
double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> x);

// Serial reference implementations of the parallel kernels above. They
// share inner row bodies with the parallel versions and exist so tests and
// the benchmark can compare the two directly.
namespace serial {
void matmul_nn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);
void affine_forward(const double* x, const double* w, const double* bias,
                    double* y, int64_t rows, int64_t in, int64_t out);
void relu_forward(const double* x, double* y, int64_t n);
void ew_add(const double* a, const double* b, double* y, int64_t n);
void ew_sub(const double* a, const double* b, double* y, int64_t n);
void ew_mul(const double* a, const double* b, double* y, int64_t n);
void ew_scale(const double* a, double c, double* y, int64_t n);
void log_softmax_forward(const double* x, double* y, int64_t rows, int64_t cols);
void softmax_xent_forward(const double* x, const double* labels, double* loss,
                          int64_t rows, int64_t cols);
void kl_forward(const double* a, const double* b, double* kl, int64_t rows,
                int64_t cols);
}  // namespace serial

}  // namespace advlab::kernels
