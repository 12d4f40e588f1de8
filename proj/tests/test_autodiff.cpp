#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "advlab/graph.hpp"
#include "advlab/rng.hpp"

using namespace advlab;

TEST_CASE("identity graph returns its input unchanged") {
    Graph g;
    NodeId x = g.input("x", {3});
    g.bind("x", Tensor({3}, {1.0, 2.0, 3.0}));
    const Tensor& out = g.evaluate(x);
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 2.0);
    CHECK(out[2] == 3.0);
}

TEST_CASE("softmax cross-entropy of uniform logits is ln(C)") {
    for (int64_t C : {2, 5, 10}) {
        Graph g;
        NodeId logits = g.input("logits", {1, C});
        NodeId labels = g.input("labels", {1}, /*requires_grad=*/false);
        NodeId ce = g.softmax_xent(logits, labels);
        g.bind("logits", Tensor::full({1, C}, 0.7));  // any constant vector
        for (int64_t label : {int64_t{0}, C - 1}) {
            g.bind("labels", Tensor({1}, {double(label)}));
            CHECK(g.evaluate(ce)[0] ==
                  doctest::Approx(std::log(double(C))).epsilon(1e-14));
        }
    }
}

namespace {

// Fixture: a 3-4-2 MLP with fixed weights used by several cases.
struct MlpFixture {
    Graph g;
    NodeId x, w1, b1, w2, b2, labels, logits, loss;
    std::vector<double> xv = {0.5, -1.0, 2.0, 1.5, 0.25, -0.75};
    std::vector<double> w1v = {0.1, -0.2, 0.3,  0.4, 0.5,  -0.6,
                               0.7, 0.8,  -0.9, 1.0, -1.1, 1.2};
    std::vector<double> b1v = {0.05, -0.1, 0.15, -0.2};
    std::vector<double> w2v = {0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8, -0.9};
    std::vector<double> b2v = {0.1, -0.05};
    std::vector<double> yv = {1.0, 0.0};

    MlpFixture() {
        x = g.input("x", {2, 3});
        w1 = g.input("w1", {3, 4});
        b1 = g.input("b1", {4});
        w2 = g.input("w2", {4, 2});
        b2 = g.input("b2", {2});
        labels = g.input("labels", {2}, /*requires_grad=*/false);
        logits = g.affine(g.relu(g.affine(x, w1, b1)), w2, b2);
        loss = g.mean(g.softmax_xent(logits, labels));
        g.bind("x", xv);
        g.bind("w1", w1v);
        g.bind("b1", b1v);
        g.bind("w2", w2v);
        g.bind("b2", b2v);
        g.bind("labels", yv);
    }

    // Straight-line recomputation of the same arithmetic, no graph, no
    // shared kernels: the oracle for the forward pass.
    double oracle_loss(const std::vector<double>& w1p) const {
        double total = 0.0;
        for (int r = 0; r < 2; ++r) {
            double h[4], z[2];
            for (int j = 0; j < 4; ++j) {
                double acc = b1v[j];
                for (int i = 0; i < 3; ++i)
                    acc += xv[r * 3 + i] * w1p[i * 4 + j];
                h[j] = acc > 0 ? acc : 0;
            }
            for (int o = 0; o < 2; ++o) {
                double acc = b2v[o];
                for (int j = 0; j < 4; ++j) acc += h[j] * w2v[j * 2 + o];
                z[o] = acc;
            }
            double hi = std::max(z[0], z[1]);
            double lse = hi + std::log(std::exp(z[0] - hi) + std::exp(z[1] - hi));
            total += lse - z[int(yv[r])];
        }
        return total / 2.0;
    }
};

}  // namespace

TEST_CASE("two-layer MLP forward matches a straight-line recomputation") {
    MlpFixture f;
    const double got = f.g.evaluate(f.loss).item();
    const double want = f.oracle_loss(f.w1v);
    CHECK(got == doctest::Approx(want).epsilon(1e-13));
    CHECK(got > 0.0);
}

TEST_CASE("d/dx of sum(x) is all ones") {
    Graph g;
    NodeId x = g.input("x", {2, 3});
    NodeId s = g.sum(x);
    g.bind("x", Tensor::full({2, 3}, -4.2));
    auto grads = g.gradient(s, std::array<NodeId, 1>{x});
    for (int i = 0; i < 6; ++i) CHECK(grads[0][i] == 1.0);
}

TEST_CASE("gradient of an unrelated output w.r.t. x is zero") {
    Graph g;
    NodeId x = g.input("x", {3});
    NodeId y = g.input("y", {3});
    NodeId s = g.sum(y);
    g.bind("x", Tensor({3}, {1.0, 2.0, 3.0}));
    g.bind("y", Tensor({3}, {4.0, 5.0, 6.0}));
    auto grads = g.gradient(s, std::array<NodeId, 2>{x, y});
    for (int i = 0; i < 3; ++i) {
        CHECK(grads[0][i] == 0.0);
        CHECK(grads[1][i] == 1.0);
    }
}

TEST_CASE("MLP cross-entropy weight gradient matches central differences") {
    MlpFixture f;
    auto grads = f.g.gradient(f.loss, std::array<NodeId, 1>{f.w1});
    const double h = 1e-5;
    for (size_t i = 0; i < f.w1v.size(); ++i) {
        auto wp = f.w1v, wm = f.w1v;
        wp[i] += h;
        wm[i] -= h;
        const double fd = (f.oracle_loss(wp) - f.oracle_loss(wm)) / (2 * h);
        const double denom =
            std::max({std::abs(fd), std::abs(grads[0][(int64_t)i]), 1e-12});
        CHECK(std::abs(fd - grads[0][(int64_t)i]) / denom < 1e-6);
    }
}

TEST_CASE("finite_diff_check on the quadratic half norm-squared") {
    Graph g;
    NodeId x = g.input("x", {2});
    NodeId loss = g.scale(g.sum(g.mul(x, x)), 0.5);
    g.bind("x", Tensor({2}, {3.0, 4.0}));
    auto grads = g.gradient(loss, std::array<NodeId, 1>{x});
    CHECK(grads[0][0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(grads[0][1] == doctest::Approx(4.0).epsilon(1e-12));

    FdReport rep = g.finite_diff_check(loss, x, 1e-5, 1e-8);
    CHECK(rep.pass);
    CHECK(rep.checked == 2);
    CHECK(rep.skipped == 0);
    CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("finite_diff_check passes on softmax cross-entropy at tol 1e-4") {
    Graph g;
    NodeId logits = g.input("logits", {3, 5});
    NodeId labels = g.input("labels", {3}, false);
    NodeId loss = g.mean(g.softmax_xent(logits, labels));
    Rng rng(31);
    std::vector<double> lv(15);
    for (auto& v : lv) v = rng.uniform(-2.0, 2.0);
    g.bind("logits", lv);
    g.bind("labels", Tensor({3}, {0.0, 4.0, 2.0}));
    FdReport rep = g.finite_diff_check(loss, logits, 1e-5, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.checked == 15);
}

TEST_CASE("finite_diff_check on the full MLP and on KL divergence") {
    MlpFixture f;
    FdReport rep = f.g.finite_diff_check(f.loss, f.w1, 1e-5, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.checked + rep.skipped == 12);
    CHECK(rep.checked > 0);
    rep = f.g.finite_diff_check(f.loss, f.x, 1e-5, 1e-4);
    CHECK(rep.pass);

    Graph g;
    NodeId a = g.input("a", {2, 4});
    NodeId b = g.input("b", {2, 4});
    NodeId loss = g.mean(g.kl_div(a, b));
    Rng rng(32);
    std::vector<double> av(8), bv(8);
    for (auto& v : av) v = rng.uniform(-2.0, 2.0);
    for (auto& v : bv) v = rng.uniform(-2.0, 2.0);
    g.bind("a", av);
    g.bind("b", bv);
    CHECK(g.finite_diff_check(loss, a, 1e-5, 1e-4).pass);
    CHECK(g.finite_diff_check(loss, b, 1e-5, 1e-4).pass);
}

TEST_CASE("zero input to a ReLU network: kink coordinates are excluded") {
    Graph g;
    NodeId x = g.input("x", {1, 4});
    NodeId w = g.input("w", {4, 4});
    NodeId b = g.input("b", {4});
    NodeId loss = g.sum(g.relu(g.affine(x, w, b)));
    std::vector<double> wv(16, 0.0);
    for (int i = 0; i < 4; ++i) wv[i * 4 + i] = 1.0;
    g.bind("x", Tensor({1, 4}));      // zeros
    g.bind("w", wv);
    g.bind("b", Tensor({4}));         // zeros: pre-activations sit on the kink
    FdReport rep = g.finite_diff_check(loss, x, 1e-5, 1e-4);
    CHECK(rep.skipped == 4);
    CHECK(rep.checked == 0);
    CHECK(rep.pass);  // vacuous but reported
}

TEST_CASE("gradients are linear in the output combination") {
    Rng rng(33);
    std::vector<double> xv(6);
    for (auto& v : xv) v = rng.uniform(-2.0, 2.0);
    const double ca = 1.75, cb = -0.6;

    auto build = [&](double sa, double sb) {
        Graph g;
        NodeId x = g.input("x", {6});
        NodeId f = g.sum(g.mul(x, x));
        NodeId h = g.sum(g.relu(x));
        NodeId combo = g.add(g.scale(f, sa), g.scale(h, sb));
        g.bind("x", xv);
        return g.gradient(combo, std::array<NodeId, 1>{x})[0];
    };
    Tensor gf = build(1.0, 0.0);
    Tensor gh = build(0.0, 1.0);
    Tensor gc = build(ca, cb);
    for (int i = 0; i < 6; ++i)
        CHECK(gc[i] ==
              doctest::Approx(ca * gf[i] + cb * gh[i]).epsilon(1e-14));
}

TEST_CASE("repeated evaluation and backward are bitwise deterministic") {
    MlpFixture f;
    const double l1 = f.g.evaluate(f.loss).item();
    auto g1 = f.g.gradient(f.loss, std::array<NodeId, 2>{f.w1, f.x});
    // Rebind the same values and run again.
    f.g.bind("x", f.xv);
    f.g.bind("w1", f.w1v);
    const double l2 = f.g.evaluate(f.loss).item();
    auto g2 = f.g.gradient(f.loss, std::array<NodeId, 2>{f.w1, f.x});
    CHECK(std::memcmp(&l1, &l2, 8) == 0);
    for (int t = 0; t < 2; ++t)
        CHECK(std::memcmp(g1[t].data().data(), g2[t].data().data(),
                          g1[t].size() * 8) == 0);
}

TEST_CASE("evaluation is incremental: untouched subgraphs do not rerun") {
    Graph g;
    NodeId a = g.input("a", {4});
    NodeId b = g.input("b", {4});
    NodeId t = g.add(g.sum(g.mul(a, a)), g.sum(g.mul(b, b)));
    g.bind("a", Tensor::full({4}, 1.0));
    g.bind("b", Tensor::full({4}, 2.0));

    g.evaluate(t);
    const int64_t first = g.recompute_count();
    CHECK(first == 5);  // mul,sum,mul,sum,add

    g.evaluate(t);
    CHECK(g.recompute_count() == first);  // nothing changed, nothing ran

    g.bind("b", Tensor::full({4}, 3.0));
    const double want = 4.0 * 1.0 + 4.0 * 9.0;
    CHECK(g.evaluate(t).item() == want);
    CHECK(g.recompute_count() == first + 3);  // only mul(b,b), sum, add
}

TEST_CASE("l2_norm op: forward value and gradient") {
    Graph g;
    NodeId x = g.input("x", {2});
    NodeId n = g.l2_norm(x);
    g.bind("x", Tensor({2}, {3.0, 4.0}));
    CHECK(g.evaluate(n).item() == 5.0);
    auto grads = g.gradient(n, std::array<NodeId, 1>{x});
    CHECK(grads[0][0] == doctest::Approx(3.0 / 5.0).epsilon(1e-15));
    CHECK(grads[0][1] == doctest::Approx(4.0 / 5.0).epsilon(1e-15));

    // Norm of the zero vector: value 0, subgradient 0.
    g.bind("x", Tensor({2}));
    CHECK(g.evaluate(n).item() == 0.0);
    grads = g.gradient(n, std::array<NodeId, 1>{x});
    CHECK(grads[0][0] == 0.0);
    CHECK(grads[0][1] == 0.0);
}

TEST_CASE("slice routes gradients back into the right segments") {
    Graph g;
    NodeId flat = g.input("flat", {6});
    NodeId head = g.slice(flat, 0, {2});
    NodeId tail = g.slice(flat, 4, {2});
    NodeId loss = g.add(g.scale(g.sum(head), 2.0), g.sum(g.mul(tail, tail)));
    g.bind("flat", Tensor({6}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}));
    CHECK(g.evaluate(loss).item() == 2.0 * 3.0 + 25.0 + 36.0);
    auto grads = g.gradient(loss, std::array<NodeId, 1>{flat});
    const std::vector<double> want = {2.0, 2.0, 0.0, 0.0, 10.0, 12.0};
    for (int i = 0; i < 6; ++i) CHECK(grads[0][i] == want[i]);
}

TEST_CASE("error paths") {
    SUBCASE("evaluating with an unbound input") {
        Graph g;
        NodeId x = g.input("x", {2});
        NodeId s = g.sum(x);
        CHECK_THROWS_AS((void)g.evaluate(s), ContractError);
    }
    SUBCASE("binding a mismatched shape") {
        Graph g;
        g.input("x", {2, 2});
        CHECK_THROWS_AS(g.bind("x", Tensor({4}, {1, 2, 3, 4})), ShapeError);
        CHECK_THROWS_AS(g.bind("nope", Tensor({1}, {0.0})), ContractError);
    }
    SUBCASE("recording shape-incompatible ops") {
        Graph g;
        NodeId a = g.input("a", {2, 3});
        NodeId b = g.input("b", {3, 2});
        CHECK_THROWS_AS((void)g.add(a, b), ShapeError);
        CHECK_THROWS_AS((void)g.affine(a, a, b), ShapeError);
        CHECK_THROWS_AS((void)g.slice(a, 3, {5}), ShapeError);
    }
    SUBCASE("backward from a non-scalar") {
        Graph g;
        NodeId x = g.input("x", {3});
        NodeId y = g.relu(x);
        g.bind("x", Tensor({3}, {1, 2, 3}));
        CHECK_THROWS_AS(g.backward(y), ContractError);
    }
    SUBCASE("gradient w.r.t. a detached tensor") {
        Graph g;
        NodeId x = g.input("x", {3}, /*requires_grad=*/false);
        NodeId s = g.sum(x);
        g.bind("x", Tensor({3}, {1, 2, 3}));
        CHECK_THROWS_AS((void)g.gradient(s, std::array<NodeId, 1>{x}),
                        ContractError);
    }
    SUBCASE("non-finite forward result carries the op index") {
        Graph g;
        NodeId x = g.input("x", {1});
        NodeId y = g.mul(x, x);        // op 0: overflows to inf
        NodeId z = g.scale(y, 1.0);    // op 1: never reached
        g.bind("x", Tensor({1}, {1e200}));
        try {
            (void)g.evaluate(z);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(e.op_index == 0);
        }
    }
    SUBCASE("binding non-finite values is refused") {
        Graph g;
        g.input("x", {2});
        CHECK_THROWS_AS(
            g.bind("x", Tensor({2}, {1.0, std::nan("")})), NumericError);
        const double inf = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(g.bind("x", Tensor({2}, {inf, 0.0})), NumericError);
    }
    SUBCASE("labels must be integral and in range") {
        Graph g;
        NodeId logits = g.input("logits", {2, 3});
        NodeId labels = g.input("labels", {2}, false);
        NodeId ce = g.softmax_xent(logits, labels);
        g.bind("logits", Tensor::full({2, 3}, 0.0));
        g.bind("labels", Tensor({2}, {0.0, 3.0}));
        CHECK_THROWS_AS((void)g.evaluate(ce), ContractError);
        g.bind("labels", Tensor({2}, {0.5, 1.0}));
        CHECK_THROWS_AS((void)g.evaluate(ce), ContractError);
    }
}
