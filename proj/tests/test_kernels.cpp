#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "advlab/kernels.hpp"
#include "advlab/rng.hpp"

using namespace advlab;

namespace {

std::vector<double> random_vec(Rng& rng, int64_t n, double lo = -2.0,
                               double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Naive oracles, written independently of the kernel row bodies.
std::vector<double> naive_matmul(const std::vector<double>& a,
                                 const std::vector<double>& b, int64_t m,
                                 int64_t k, int64_t n, char mode) {
    std::vector<double> c(m * n, 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) {
                double av = (mode == 't') ? a[p * m + i] : a[i * k + p];
                double bv = (mode == 'n' || mode == 't') ? b[p * n + j]
                                                         : b[j * k + p];
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    return c;
}

std::vector<double> naive_softmax_row(const std::vector<double>& x, int64_t r,
                                      int64_t cols) {
    std::vector<double> p(cols);
    double hi = -1e300;
    for (int64_t c = 0; c < cols; ++c) hi = std::max(hi, x[r * cols + c]);
    double z = 0.0;
    for (int64_t c = 0; c < cols; ++c) z += std::exp(x[r * cols + c] - hi);
    for (int64_t c = 0; c < cols; ++c)
        p[c] = std::exp(x[r * cols + c] - hi) / z;
    return p;
}

}  // namespace

TEST_CASE("matmul variants match a naive triple loop") {
    Rng rng(11);
    const int64_t m = 7, k = 13, n = 5;
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    auto at = random_vec(rng, k * m);
    auto bt = random_vec(rng, n * k);

    std::vector<double> c(m * n);
    kernels::matmul_nn(a.data(), b.data(), c.data(), m, k, n);
    auto ref = naive_matmul(a, b, m, k, n, 'n');
    for (int64_t i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-13));

    kernels::matmul_tn(at.data(), b.data(), c.data(), m, k, n);
    ref = naive_matmul(at, b, m, k, n, 't');
    for (int64_t i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-13));

    kernels::matmul_nt(a.data(), bt.data(), c.data(), m, k, n);
    ref = naive_matmul(a, bt, m, k, n, 'x');
    for (int64_t i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-13));
}

TEST_CASE("affine_forward equals bias + matmul") {
    Rng rng(12);
    const int64_t rows = 9, in = 6, out = 4;
    auto x = random_vec(rng, rows * in);
    auto w = random_vec(rng, in * out);
    auto bias = random_vec(rng, out);

    std::vector<double> y(rows * out);
    kernels::affine_forward(x.data(), w.data(), bias.data(), y.data(), rows,
                            in, out);
    auto ref = naive_matmul(x, w, rows, in, out, 'n');
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t o = 0; o < out; ++o)
            CHECK(y[r * out + o] ==
                  doctest::Approx(ref[r * out + o] + bias[o]).epsilon(1e-13));
}

TEST_CASE("bias_backward sums rows in ascending order") {
    Rng rng(13);
    const int64_t rows = 8, out = 3;
    auto dy = random_vec(rng, rows * out);
    std::vector<double> db(out, 0.5);  // accumulates into existing content

    kernels::bias_backward(dy.data(), db.data(), rows, out);
    for (int64_t o = 0; o < out; ++o) {
        double acc = 0.5;
        for (int64_t r = 0; r < rows; ++r) acc += dy[r * out + o];
        CHECK(db[o] == acc);  // identical order => bitwise equal
    }
}

TEST_CASE("relu forward/backward, subgradient at zero is zero") {
    std::vector<double> x = {-1.5, 0.0, 2.5, -0.0, 1e-300};
    std::vector<double> y(5), dy(5, 1.0), dx(5, 0.0);
    kernels::relu_forward(x.data(), y.data(), 5);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.5);
    CHECK(y[3] == 0.0);
    CHECK(y[4] == 1e-300);

    kernels::relu_backward(x.data(), dy.data(), dx.data(), 5);
    CHECK(dx[0] == 0.0);
    CHECK(dx[1] == 0.0);  // the kink routes no gradient
    CHECK(dx[2] == 1.0);
    CHECK(dx[3] == 0.0);
    CHECK(dx[4] == 1.0);
}

TEST_CASE("elementwise ops") {
    Rng rng(14);
    auto a = random_vec(rng, 17);
    auto b = random_vec(rng, 17);
    std::vector<double> y(17);

    kernels::ew_add(a.data(), b.data(), y.data(), 17);
    for (int i = 0; i < 17; ++i) CHECK(y[i] == a[i] + b[i]);
    kernels::ew_sub(a.data(), b.data(), y.data(), 17);
    for (int i = 0; i < 17; ++i) CHECK(y[i] == a[i] - b[i]);
    kernels::ew_mul(a.data(), b.data(), y.data(), 17);
    for (int i = 0; i < 17; ++i) CHECK(y[i] == a[i] * b[i]);
    kernels::ew_scale(a.data(), -1.75, y.data(), 17);
    for (int i = 0; i < 17; ++i) CHECK(y[i] == -1.75 * a[i]);

    std::vector<double> acc(b);
    kernels::ew_axpy(a.data(), 0.5, acc.data(), 17);
    for (int i = 0; i < 17; ++i) CHECK(acc[i] == b[i] + 0.5 * a[i]);
}

TEST_CASE("log_softmax rows sum to one and match naive softmax") {
    Rng rng(15);
    const int64_t rows = 6, cols = 10;
    auto x = random_vec(rng, rows * cols, -30.0, 30.0);
    std::vector<double> y(rows * cols);
    kernels::log_softmax_forward(x.data(), y.data(), rows, cols);

    for (int64_t r = 0; r < rows; ++r) {
        auto p = naive_softmax_row(x, r, cols);
        double total = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
            CHECK(std::exp(y[r * cols + c]) == doctest::Approx(p[c]).epsilon(1e-12));
            total += std::exp(y[r * cols + c]);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("log_softmax is shift invariant and overflow safe") {
    std::vector<double> x = {1000.0, 1001.0, 999.0};
    std::vector<double> y(3);
    kernels::log_softmax_forward(x.data(), y.data(), 1, 3);
    std::vector<double> xs = {0.0, 1.0, -1.0};
    std::vector<double> ys(3);
    kernels::log_softmax_forward(xs.data(), ys.data(), 1, 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::isfinite(y[i]));
        // subtracting a ~1000-scale logsumexp costs ~1000*2^-53 absolutely
        CHECK(std::abs(y[i] - ys[i]) < 1e-12);
    }
}

TEST_CASE("softmax_xent equals -log p[label]") {
    Rng rng(16);
    const int64_t rows = 5, cols = 7;
    auto x = random_vec(rng, rows * cols, -4.0, 4.0);
    std::vector<double> labels = {0, 3, 6, 2, 2};
    std::vector<double> loss(rows);
    kernels::softmax_xent_forward(x.data(), labels.data(), loss.data(), rows,
                                  cols);
    for (int64_t r = 0; r < rows; ++r) {
        auto p = naive_softmax_row(x, r, cols);
        CHECK(loss[r] ==
              doctest::Approx(-std::log(p[(int64_t)labels[r]])).epsilon(1e-12));
    }
}

TEST_CASE("softmax_xent_backward equals softmax minus one-hot") {
    Rng rng(17);
    const int64_t rows = 4, cols = 5;
    auto x = random_vec(rng, rows * cols, -3.0, 3.0);
    std::vector<double> labels = {4, 0, 1, 3};
    std::vector<double> dloss = {1.0, 0.25, -1.0, 2.0};
    std::vector<double> dx(rows * cols, 0.0);
    kernels::softmax_xent_backward(x.data(), labels.data(), dloss.data(),
                                   dx.data(), rows, cols);
    for (int64_t r = 0; r < rows; ++r) {
        auto p = naive_softmax_row(x, r, cols);
        for (int64_t c = 0; c < cols; ++c) {
            double expect = dloss[r] * (p[c] - (c == (int64_t)labels[r]));
            CHECK(dx[r * cols + c] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("kl_forward matches direct sum, zero for identical logits") {
    Rng rng(18);
    const int64_t rows = 3, cols = 6;
    auto a = random_vec(rng, rows * cols, -3.0, 3.0);
    auto b = random_vec(rng, rows * cols, -3.0, 3.0);
    std::vector<double> kl(rows);
    kernels::kl_forward(a.data(), b.data(), kl.data(), rows, cols);
    for (int64_t r = 0; r < rows; ++r) {
        auto p = naive_softmax_row(a, r, cols);
        auto q = naive_softmax_row(b, r, cols);
        double expect = 0.0;
        for (int64_t c = 0; c < cols; ++c)
            expect += p[c] * std::log(p[c] / q[c]);
        CHECK(kl[r] == doctest::Approx(expect).epsilon(1e-11));
        CHECK(kl[r] >= -1e-15);  // Gibbs inequality
    }

    kernels::kl_forward(a.data(), a.data(), kl.data(), rows, cols);
    for (int64_t r = 0; r < rows; ++r) CHECK(kl[r] == 0.0);
}

TEST_CASE("kl gradients match finite differences") {
    Rng rng(19);
    const int64_t cols = 5;
    auto a = random_vec(rng, cols, -2.0, 2.0);
    auto b = random_vec(rng, cols, -2.0, 2.0);
    std::vector<double> kl(1), da(cols, 0.0), db(cols, 0.0);
    std::vector<double> dkl = {1.0};
    kernels::kl_forward(a.data(), b.data(), kl.data(), 1, cols);
    kernels::kl_backward(a.data(), b.data(), kl.data(), dkl.data(), da.data(),
                         db.data(), 1, cols);

    const double h = 1e-6;
    for (int64_t c = 0; c < cols; ++c) {
        auto ap = a, am = a;
        ap[c] += h;
        am[c] -= h;
        std::vector<double> kp(1), km(1);
        kernels::kl_forward(ap.data(), b.data(), kp.data(), 1, cols);
        kernels::kl_forward(am.data(), b.data(), km.data(), 1, cols);
        CHECK(da[c] == doctest::Approx((kp[0] - km[0]) / (2 * h)).epsilon(1e-5));

        auto bp = b, bm = b;
        bp[c] += h;
        bm[c] -= h;
        kernels::kl_forward(a.data(), bp.data(), kp.data(), 1, cols);
        kernels::kl_forward(a.data(), bm.data(), km.data(), 1, cols);
        CHECK(db[c] == doctest::Approx((kp[0] - km[0]) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("log_softmax_backward matches finite differences") {
    Rng rng(20);
    const int64_t cols = 6;
    auto x = random_vec(rng, cols, -2.0, 2.0);
    auto dy = random_vec(rng, cols, -1.0, 1.0);
    std::vector<double> dx(cols, 0.0);
    kernels::log_softmax_backward(x.data(), dy.data(), dx.data(), 1, cols);

    const double h = 1e-6;
    for (int64_t c = 0; c < cols; ++c) {
        auto xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        std::vector<double> yp(cols), ym(cols);
        kernels::log_softmax_forward(xp.data(), yp.data(), 1, cols);
        kernels::log_softmax_forward(xm.data(), ym.data(), 1, cols);
        double expect = 0.0;
        for (int64_t j = 0; j < cols; ++j)
            expect += dy[j] * (yp[j] - ym[j]) / (2 * h);
        CHECK(dx[c] == doctest::Approx(expect).epsilon(1e-5));
    }
}

TEST_CASE("serial reductions accumulate left to right") {
    std::vector<double> x = {1e16, 1.0, -1e16, 1.0};
    // left-to-right: (1e16 + 1) absorbs the 1, so the total is exactly 1.0
    CHECK(kernels::sum(x) == 1.0);

    std::vector<double> a = {3.0, -4.0};
    CHECK(kernels::l2_norm(a) == 5.0);
    std::vector<double> b = {2.0, 0.5};
    CHECK(kernels::dot(a, b) == 4.0);
}

TEST_CASE("parallel kernels are bitwise identical to serial twins") {
    Rng rng(21);
    // Sizes straddle the parallel cutoff so both code paths are exercised.
    for (int64_t m : {3, 64, 257}) {
        const int64_t k = 65, n = 33;
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        auto bias = random_vec(rng, n);
        std::vector<double> labels(m);
        for (int64_t i = 0; i < m; ++i) labels[i] = double(i % n);

        std::vector<double> ser(m * n), par(m * n);
        std::vector<double> serk(m);
        std::vector<double> park(m);

        for (int threads : {1, 2, 3, 7}) {
            omp_set_num_threads(threads);
            kernels::serial::matmul_nn(a.data(), b.data(), ser.data(), m, k, n);
            kernels::matmul_nn(a.data(), b.data(), par.data(), m, k, n);
            CHECK(std::memcmp(ser.data(), par.data(), m * n * 8) == 0);

            kernels::serial::affine_forward(a.data(), b.data(), bias.data(),
                                            ser.data(), m, k, n);
            kernels::affine_forward(a.data(), b.data(), bias.data(),
                                    par.data(), m, k, n);
            CHECK(std::memcmp(ser.data(), par.data(), m * n * 8) == 0);

            kernels::serial::log_softmax_forward(ser.data(), ser.data(), m, n);
            kernels::log_softmax_forward(par.data(), par.data(), m, n);
            CHECK(std::memcmp(ser.data(), par.data(), m * n * 8) == 0);

            kernels::serial::softmax_xent_forward(ser.data(), labels.data(),
                                                  serk.data(), m, n);
            kernels::softmax_xent_forward(par.data(), labels.data(),
                                          park.data(), m, n);
            CHECK(std::memcmp(serk.data(), park.data(), m * 8) == 0);

            kernels::serial::kl_forward(ser.data(), par.data(), serk.data(), m,
                                        n);
            kernels::kl_forward(ser.data(), par.data(), park.data(), m, n);
            CHECK(std::memcmp(serk.data(), park.data(), m * 8) == 0);

            std::vector<double> e1(m * n), e2(m * n);
            kernels::serial::ew_mul(ser.data(), par.data(), e1.data(), m * n);
            kernels::ew_mul(ser.data(), par.data(), e2.data(), m * n);
            CHECK(std::memcmp(e1.data(), e2.data(), m * n * 8) == 0);

            kernels::serial::relu_forward(ser.data(), e1.data(), m * n);
            kernels::relu_forward(ser.data(), e2.data(), m * n);
            CHECK(std::memcmp(e1.data(), e2.data(), m * n * 8) == 0);
        }
        omp_set_num_threads(omp_get_num_procs());
    }
}

TEST_CASE("rng determinism and range") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 1000; ++i) {
        double x = a.uniform();
        CHECK(x == b.uniform());
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    bool differs = false;
    Rng a2(42);
    for (int i = 0; i < 10; ++i) differs |= (a2.uniform() != c.uniform());
    CHECK(differs);

    Rng d(7);
    for (int i = 0; i < 1000; ++i) {
        double x = d.uniform(-0.3, 0.3);
        CHECK(x >= -0.3);
        CHECK(x <= 0.3);
    }

    // derive() separates purposes: different paths give unrelated streams
    CHECK(Rng::derive(1, {2, 3}) != Rng::derive(1, {3, 2}));
    CHECK(Rng::derive(1, {2}) != Rng::derive(2, {2}));
    CHECK(Rng::derive(5, {1, 9}) == Rng::derive(5, {1, 9}));
}

TEST_CASE("rng permutation is a permutation and normal has sane moments") {
    Rng rng(99);
    auto p = rng.permutation(257);
    std::vector<bool> seen(257, false);
    for (auto i : p) {
        CHECK(!seen[i]);
        seen[i] = true;
    }

    double mean = 0.0, var = 0.0;
    const int n = 20000;
    Rng g(5);
    std::vector<double> zs(n);
    for (auto& z : zs) z = g.normal();
    for (double z : zs) mean += z;
    mean /= n;
    for (double z : zs) var += (z - mean) * (z - mean);
    var /= n - 1;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var - 1.0) < 0.05);
}
