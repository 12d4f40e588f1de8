// bench: times the OpenMP kernels against their serial reference bodies
// and checks that both produce bitwise-identical output (they share inner
// row bodies and summation order, so any divergence is a bug, not noise).
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <vector>

#include "advlab/kernels.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double time_best_ms(const std::function<void()>& fn, int iters) {
    fn();  // warmup
    double best = 1e300;
    for (int i = 0; i < iters; ++i) {
        auto t0 = clock_type::now();
        fn();
        auto t1 = clock_type::now();
        double ms =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
        if (ms < best) best = ms;
    }
    return best;
}

std::vector<double> random_vec(int64_t n, uint64_t seed, double lo = -1.0,
                               double hi = 1.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(static_cast<size_t>(n));
    for (double& x : v) x = dist(gen);
    return v;
}

int failures = 0;

void report(const char* name, const char* size, double serial_ms,
            double parallel_ms, const std::vector<double>& serial_out,
            const std::vector<double>& parallel_out) {
    bool same = serial_out.size() == parallel_out.size() &&
                std::memcmp(serial_out.data(), parallel_out.data(),
                            serial_out.size() * sizeof(double)) == 0;
    if (!same) ++failures;
    std::printf("%-18s %-16s serial %8.3f ms   parallel %8.3f ms   "
                "speedup %5.2fx   %s\n",
                name, size, serial_ms, parallel_ms,
                serial_ms / parallel_ms, same ? "bitwise OK" : "MISMATCH");
}

}  // namespace

int main() {
    namespace k = advlab::kernels;

    {
        const int64_t m = 256, kk = 256, n = 256;
        auto a = random_vec(m * kk, 1), b = random_vec(kk * n, 2);
        std::vector<double> cs(m * n), cp(m * n);
        char size[32];
        std::snprintf(size, sizeof(size), "%lldx%lldx%lld",
                      (long long)m, (long long)kk, (long long)n);
        double ts = time_best_ms(
            [&] { k::serial::matmul_nn(a.data(), b.data(), cs.data(), m, kk, n); },
            5);
        double tp = time_best_ms(
            [&] { k::matmul_nn(a.data(), b.data(), cp.data(), m, kk, n); }, 5);
        report("matmul_nn", size, ts, tp, cs, cp);
        ts = time_best_ms(
            [&] { k::serial::matmul_tn(a.data(), b.data(), cs.data(), m, kk, n); },
            5);
        tp = time_best_ms(
            [&] { k::matmul_tn(a.data(), b.data(), cp.data(), m, kk, n); }, 5);
        report("matmul_tn", size, ts, tp, cs, cp);
        ts = time_best_ms(
            [&] { k::serial::matmul_nt(a.data(), b.data(), cs.data(), m, kk, n); },
            5);
        tp = time_best_ms(
            [&] { k::matmul_nt(a.data(), b.data(), cp.data(), m, kk, n); }, 5);
        report("matmul_nt", size, ts, tp, cs, cp);
    }

    {
        const int64_t rows = 2048, in = 256, out = 128;
        auto x = random_vec(rows * in, 3), w = random_vec(in * out, 4),
             bias = random_vec(out, 5);
        std::vector<double> ys(rows * out), yp(rows * out);
        double ts = time_best_ms(
            [&] {
                k::serial::affine_forward(x.data(), w.data(), bias.data(),
                                          ys.data(), rows, in, out);
            },
            5);
        double tp = time_best_ms(
            [&] {
                k::affine_forward(x.data(), w.data(), bias.data(), yp.data(),
                                  rows, in, out);
            },
            5);
        report("affine_forward", "2048x256x128", ts, tp, ys, yp);
    }

    {
        const int64_t n = 1 << 22;
        auto a = random_vec(n, 6), b = random_vec(n, 7);
        std::vector<double> ys(n), yp(n);
        double ts = time_best_ms(
            [&] { k::serial::relu_forward(a.data(), ys.data(), n); }, 10);
        double tp = time_best_ms(
            [&] { k::relu_forward(a.data(), yp.data(), n); }, 10);
        report("relu_forward", "4M", ts, tp, ys, yp);
        ts = time_best_ms(
            [&] { k::serial::ew_mul(a.data(), b.data(), ys.data(), n); }, 10);
        tp = time_best_ms(
            [&] { k::ew_mul(a.data(), b.data(), yp.data(), n); }, 10);
        report("ew_mul", "4M", ts, tp, ys, yp);
        ts = time_best_ms(
            [&] { k::serial::ew_scale(a.data(), 1.5, ys.data(), n); }, 10);
        tp = time_best_ms([&] { k::ew_scale(a.data(), 1.5, yp.data(), n); },
                          10);
        report("ew_scale", "4M", ts, tp, ys, yp);
    }

    {
        const int64_t rows = 8192, cols = 64;
        auto x = random_vec(rows * cols, 8);
        auto labels = random_vec(rows, 9, 0.0, 1.0);
        for (double& l : labels) l = l < 0.5 ? 0.0 : 1.0;
        std::vector<double> ys(rows * cols), yp(rows * cols);
        double ts = time_best_ms(
            [&] {
                k::serial::log_softmax_forward(x.data(), ys.data(), rows,
                                               cols);
            },
            5);
        double tp = time_best_ms(
            [&] { k::log_softmax_forward(x.data(), yp.data(), rows, cols); },
            5);
        report("log_softmax", "8192x64", ts, tp, ys, yp);

        auto x2 = random_vec(rows * cols, 10);
        std::vector<double> ls(rows), lp(rows);
        ts = time_best_ms(
            [&] {
                k::serial::softmax_xent_forward(x.data(), labels.data(),
                                                ls.data(), rows, cols);
            },
            5);
        tp = time_best_ms(
            [&] {
                k::softmax_xent_forward(x.data(), labels.data(), lp.data(),
                                        rows, cols);
            },
            5);
        report("softmax_xent", "8192x64", ts, tp, ls, lp);
        ts = time_best_ms(
            [&] {
                k::serial::kl_forward(x.data(), x2.data(), ls.data(), rows,
                                      cols);
            },
            5);
        tp = time_best_ms(
            [&] { k::kl_forward(x.data(), x2.data(), lp.data(), rows, cols); },
            5);
        report("kl_forward", "8192x64", ts, tp, ls, lp);
    }

    if (failures) {
        std::printf("%d kernel(s) diverged from the serial reference\n",
                    failures);
        return 1;
    }
    std::printf("all kernels bitwise-match the serial reference\n");
    return 0;
}
