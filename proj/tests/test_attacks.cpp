// Attacks: projection, FGSM/PGD against closed-form and grid-search
// oracles, ball membership, monotone ascent, and chunked evaluation.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "advlab/attacks.hpp"
#include "advlab/kernels.hpp"
#include "advlab/losses.hpp"
#include "advlab/model.hpp"
#include "advlab/rng.hpp"

using namespace advlab;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data().data(), b.data().data(),
                       sizeof(double) * static_cast<size_t>(a.size())) == 0;
}

// logit_1 - logit_0 = 2 * x[0]; decision boundary at x[0] = 0.
Model make_slope_model(int64_t input_dim) {
    Model m(ModelSpec{"logreg", input_dim, 2, 0});
    m.weights()[0] = -1.0;  // W[0,0]
    m.weights()[1] = +1.0;  // W[0,1]
    return m;
}

Tensor random_batch(int64_t rows, int64_t dim, uint64_t seed) {
    Rng rng(seed);
    Tensor x({rows, dim});
    for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0, 1.0);
    return x;
}

Tensor random_labels(int64_t rows, int64_t classes, uint64_t seed) {
    Rng rng(seed);
    Tensor y({rows});
    for (int64_t i = 0; i < rows; ++i)
        y[i] = static_cast<double>(rng.uniform_int(uint64_t(classes)));
    return y;
}

double linf_dist(const Tensor& a, const Tensor& b) {
    double d = 0.0;
    for (int64_t i = 0; i < a.size(); ++i)
        d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

double row_l2_dist(const Tensor& a, const Tensor& b, int64_t row) {
    const int64_t dim = a.shape()[1];
    double s = 0.0;
    for (int64_t c = 0; c < dim; ++c) {
        const double d = a[row * dim + c] - b[row * dim + c];
        s += d * d;
    }
    return std::sqrt(s);
}

double mean_of(const Tensor& t) {
    return kernels::sum(t.data()) / static_cast<double>(t.size());
}

}  // namespace

TEST_CASE("project_ball: linf clamps coordinatewise") {
    AttackConfig cfg;
    cfg.norm_p = NormP::kLinf;
    cfg.epsilon = 1.0;
    Tensor d({2}, {3.0, -4.0});
    Tensor p = project_ball(d, cfg);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -1.0);

    Tensor inside({2}, {0.3, -0.2});
    CHECK(bitwise_equal(project_ball(inside, cfg), inside));
}

TEST_CASE("project_ball: l2 rescales onto the sphere") {
    AttackConfig cfg;
    cfg.norm_p = NormP::kL2;
    cfg.epsilon = 1.0;
    Tensor d({2}, {3.0, 4.0});
    Tensor p = project_ball(d, cfg);
    CHECK(p[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.8).epsilon(1e-15));

    Tensor inside({2}, {0.3, -0.4});  // norm 0.5 < 1
    CHECK(bitwise_equal(project_ball(inside, cfg), inside));
}

TEST_CASE("project_ball: membership and bitwise idempotence, both norms") {
    Rng rng(41);
    for (NormP norm : {NormP::kLinf, NormP::kL2}) {
        AttackConfig cfg;
        cfg.norm_p = norm;
        int64_t rescaled = 0;
        for (int trial = 0; trial < 10000; ++trial) {
            cfg.epsilon = rng.uniform(0.0, 2.0);
            Tensor d({8});
            const double amp = std::exp(rng.uniform(-3.0, 3.0));
            for (int64_t i = 0; i < 8; ++i)
                d[i] = amp * rng.uniform(-1.0, 1.0);

            Tensor p = project_ball(d, cfg);
            if (norm == NormP::kLinf) {
                for (int64_t i = 0; i < 8; ++i)
                    CHECK(std::abs(p[i]) <= cfg.epsilon + 1e-9);
            } else {
                CHECK(kernels::l2_norm(p.data()) <= cfg.epsilon + 1e-9);
            }
            if (!bitwise_equal(p, d)) ++rescaled;

            Tensor pp = project_ball(p, cfg);
            CHECK(bitwise_equal(pp, p));  // projection is idempotent
        }
        CHECK(rescaled > 1000);  // the property test actually exercised clipping
    }
}

TEST_CASE("fgsm: epsilon zero returns the input bitwise") {
    Model m = Model::init(ModelSpec{"mlp2", 4, 3, 8}, 11);
    Tensor x = random_batch(5, 4, 21);
    Tensor y = random_labels(5, 3, 22);
    AttackConfig cfg;
    cfg.kind = AttackConfig::Kind::kFgsm;
    cfg.epsilon = 0.0;
    AdvBatch ab = fgsm(m, x, y, cfg);
    CHECK(bitwise_equal(ab.x_adv, x));
    // Loss at x_adv == loss at x, and it matches the eager path.
    Tensor ce = cross_entropy(m.forward(x), y);
    CHECK(bitwise_equal(ab.per_example_loss, ce));
}

TEST_CASE("fgsm: zero gradient steps nowhere (sign(0) == 0)") {
    Model m(ModelSpec{"logreg", 3, 4, 0});  // all-zero weights
    Tensor x = random_batch(6, 3, 31);
    Tensor y = random_labels(6, 4, 32);
    AttackConfig cfg;
    cfg.kind = AttackConfig::Kind::kFgsm;
    cfg.epsilon = 0.25;
    AdvBatch ab = fgsm(m, x, y, cfg);
    CHECK(bitwise_equal(ab.x_adv, x));
}

TEST_CASE("fgsm: closed-form direction on 1-D logistic regression") {
    // CE(label 1) = log(1 + exp(-2x)): strictly decreasing in x, so the
    // ascent direction is -1 and FGSM lands exactly on x - eps.
    Model m = make_slope_model(1);
    Tensor x({1, 1}, {0.7});
    AttackConfig cfg;
    cfg.kind = AttackConfig::Kind::kFgsm;
    cfg.epsilon = 0.1;

    Tensor y1({1}, {1.0});
    AdvBatch a1 = fgsm(m, x, y1, cfg);
    CHECK(a1.x_adv[0] == 0.7 - 0.1);

    Tensor y0({1}, {0.0});  // label 0 mirrors: loss increasing in x
    AdvBatch a0 = fgsm(m, x, y0, cfg);
    CHECK(a0.x_adv[0] == 0.7 + 0.1);

    // The attacked loss the batch reports is the loss at x_adv.
    Tensor ce = cross_entropy(m.forward(a1.x_adv), y1);
    CHECK(bitwise_equal(a1.per_example_loss, ce));
    CHECK(a1.per_example_loss[0] > cross_entropy(m.forward(x), y1)[0]);
}

TEST_CASE("fgsm: rejects the l2 norm") {
    Model m = make_slope_model(1);
    Tensor x({1, 1}, {0.7});
    Tensor y({1}, {1.0});
    AttackConfig cfg;
    cfg.kind = AttackConfig::Kind::kFgsm;
    cfg.norm_p = NormP::kL2;
    cfg.epsilon = 0.1;
    CHECK_THROWS_AS((void)fgsm(m, x, y, cfg), ContractError);
}

TEST_CASE("pgd: no steps and no random start is the identity") {
    Model m = Model::init(ModelSpec{"mlp2", 4, 3, 8}, 12);
    Tensor x = random_batch(5, 4, 23);
    Tensor y = random_labels(5, 3, 24);
    AttackConfig cfg;
    cfg.epsilon = 0.3;
    cfg.alpha = 0.1;
    cfg.steps = 0;
    CHECK(bitwise_equal(pgd(m, x, y, cfg).x_adv, x));

    cfg.steps = 10;
    cfg.epsilon = 0.0;  // the ball is a point
    cfg.random_start = true;
    CHECK(bitwise_equal(pgd(m, x, y, cfg).x_adv, x));
}

TEST_CASE("pgd: saturates the interval on 1-D logistic regression") {
    // Constant descent direction; steps accumulate at -alpha until the
    // projection pins delta to -eps, so x_adv == x - eps bitwise.
    Model m = make_slope_model(1);
    Tensor x({1, 1}, {0.7});
    Tensor y({1}, {1.0});
    AttackConfig cfg;
    cfg.epsilon = 0.1;
    cfg.alpha = 0.03;
    cfg.steps = 5;  // 5 * 0.03 > 0.1
    AdvBatch ab = pgd(m, x, y, cfg);
    CHECK(ab.x_adv[0] == 0.7 - 0.1);
}

TEST_CASE("ascend_on_graph: linf maximum of a separable quadratic") {
    // f(x) = |x - c|^2 over the eps=1 box around x0. The true maximum sits
    // at a corner; a grid sweep at resolution 0.01 is the oracle.
    Graph g;
    NodeId x = g.input("x", {1, 2});
    NodeId c = g.input("c", {1, 2}, /*requires_grad=*/false);
    NodeId d = g.sub(x, c);
    NodeId obj = g.sum(g.mul(d, d));
    g.bind("c", Tensor({1, 2}, {2.0, -1.5}));

    const double x0[2] = {0.25, -0.25};
    auto f = [&](double a, double b) {
        return (a - 2.0) * (a - 2.0) + (b + 1.5) * (b + 1.5);
    };
    double grid_max = -1.0;
    for (int i = -100; i <= 100; ++i)
        for (int j = -100; j <= 100; ++j) {
            const double v = f(x0[0] + 0.01 * i, x0[1] + 0.01 * j);
            grid_max = std::max(grid_max, v);
        }

    AttackConfig cfg;
    cfg.epsilon = 1.0;
    cfg.alpha = 0.125;  // power of two: 8 exact steps reach the face
    cfg.steps = 40;
    Tensor xa = ascend_on_graph(g, "x", obj, Tensor({1, 2}, {x0[0], x0[1]}),
                                cfg);

    CHECK(std::abs(xa[0] - (x0[0] - 1.0)) < 1e-9);
    CHECK(std::abs(xa[1] - (x0[1] + 1.0)) < 1e-9);
    CHECK(std::abs(f(xa[0], xa[1]) - grid_max) < 1e-3);
}

TEST_CASE("ascend_on_graph: objective climbs monotonically per step") {
    // On the separable quadratic every projected signed step strictly
    // increases the objective, so value(k) is strictly increasing until the
    // corner is reached.
    Graph g;
    NodeId x = g.input("x", {1, 2});
    NodeId c = g.input("c", {1, 2}, /*requires_grad=*/false);
    NodeId d = g.sub(x, c);
    NodeId obj = g.sum(g.mul(d, d));
    g.bind("c", Tensor({1, 2}, {2.0, -1.5}));
    Tensor x0({1, 2}, {0.25, -0.25});

    AttackConfig cfg;
    cfg.epsilon = 1.0;
    cfg.alpha = 0.05;
    double prev = -1.0;
    for (int k = 0; k <= 6; ++k) {
        cfg.steps = k;
        Tensor xa = ascend_on_graph(g, "x", obj, x0, cfg);
        const double v = (xa[0] - 2.0) * (xa[0] - 2.0) +
                         (xa[1] + 1.5) * (xa[1] + 1.5);
        if (k > 0) CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("pgd: ascent beats the shared random start on an MLP") {
    Model m = Model::init(ModelSpec{"mlp2", 6, 4, 16}, 7);
    Tensor x = random_batch(16, 6, 51);
    Tensor y = random_labels(16, 4, 52);

    AttackConfig cfg;
    cfg.epsilon = 0.25;
    cfg.alpha = 0.05;
    cfg.random_start = true;
    cfg.seed = 99;  // same seed => identical x0 for both runs

    cfg.steps = 0;
    const double loss_start = mean_of(pgd(m, x, y, cfg).per_example_loss);
    cfg.steps = 10;
    const double loss_end = mean_of(pgd(m, x, y, cfg).per_example_loss);
    CHECK(loss_end > loss_start);
}

TEST_CASE("pgd: iterates stay in the ball and the box") {
    Model m = Model::init(ModelSpec{"mlp2", 5, 3, 16}, 8);
    Tensor x = random_batch(12, 5, 61);
    Tensor y = random_labels(12, 3, 62);

    AttackConfig cfg;
    cfg.alpha = 0.1;
    cfg.steps = 7;
    cfg.random_start = true;
    cfg.input_box = {{0.0, 1.0}};
    cfg.seed = 5;

    cfg.norm_p = NormP::kLinf;
    cfg.epsilon = 0.25;
    Tensor xa = pgd(m, x, y, cfg).x_adv;
    CHECK(linf_dist(xa, x) <= cfg.epsilon + 1e-9);
    for (int64_t i = 0; i < xa.size(); ++i) {
        CHECK(xa[i] >= 0.0);
        CHECK(xa[i] <= 1.0);
    }

    cfg.norm_p = NormP::kL2;
    cfg.epsilon = 0.5;
    xa = pgd(m, x, y, cfg).x_adv;
    for (int64_t r = 0; r < 12; ++r)
        CHECK(row_l2_dist(xa, x, r) <= cfg.epsilon + 1e-9);
    for (int64_t i = 0; i < xa.size(); ++i) {
        CHECK(xa[i] >= 0.0);
        CHECK(xa[i] <= 1.0);
    }
}

TEST_CASE("pgd: l2 ascent moves and increases the loss") {
    Model m = Model::init(ModelSpec{"mlp2", 5, 3, 16}, 9);
    Tensor x = random_batch(8, 5, 71);
    Tensor y = random_labels(8, 3, 72);

    AttackConfig cfg;
    cfg.norm_p = NormP::kL2;
    cfg.epsilon = 0.5;
    cfg.alpha = 0.1;
    cfg.steps = 10;
    AdvBatch ab = pgd(m, x, y, cfg);
    CHECK(!bitwise_equal(ab.x_adv, x));
    CHECK(mean_of(ab.per_example_loss) >
          mean_of(cross_entropy(m.forward(x), y)));
}

TEST_CASE("pgd: seeded runs reproduce bitwise; seeds matter") {
    Model m = Model::init(ModelSpec{"mlp2", 5, 3, 16}, 10);
    Tensor x = random_batch(9, 5, 81);
    Tensor y = random_labels(9, 3, 82);

    AttackConfig cfg;
    cfg.epsilon = 0.25;
    cfg.alpha = 0.07;
    cfg.steps = 6;
    cfg.random_start = true;
    cfg.seed = 1234;

    Tensor a = pgd(m, x, y, cfg).x_adv;
    Tensor b = pgd(m, x, y, cfg).x_adv;
    CHECK(bitwise_equal(a, b));

    cfg.seed = 1235;
    Tensor cdiff = pgd(m, x, y, cfg).x_adv;
    CHECK(!bitwise_equal(a, cdiff));
}

TEST_CASE("pgd: KL objective drives the TRADES inner maximization") {
    Model m = Model::init(ModelSpec{"mlp2", 6, 4, 16}, 13);
    Tensor x = random_batch(8, 6, 91);
    Tensor y = random_labels(8, 4, 92);

    AttackConfig cfg;
    cfg.objective = AttackConfig::Objective::kKL;
    cfg.epsilon = 0.3;
    cfg.alpha = 0.06;
    cfg.steps = 10;
    cfg.random_start = true;
    cfg.seed = 3;

    AdvBatch ab = pgd(m, x, y, cfg);
    CHECK(linf_dist(ab.x_adv, x) <= cfg.epsilon + 1e-9);
    // The reported loss is the per-example KL at x_adv; cross-check against
    // the eager kernel on the same logits.
    Tensor want = kl_div(m.forward(x), m.forward(ab.x_adv));
    CHECK(bitwise_equal(ab.per_example_loss, want));
    CHECK(mean_of(ab.per_example_loss) > 0.0);

    cfg.epsilon = 0.0;
    CHECK(bitwise_equal(pgd(m, x, y, cfg).x_adv, x));
}

TEST_CASE("attack config validation") {
    AttackConfig cfg;
    cfg.epsilon = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.epsilon = 0.1;
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.alpha = 0.01;
    cfg.steps = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.steps = 1;
    cfg.input_box = {{1.0, 0.0}};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.input_box = {{0.0, 1.0}};
    CHECK_NOTHROW(cfg.validate());

    CHECK(norm_from_string("linf") == NormP::kLinf);
    CHECK(norm_from_string("l2") == NormP::kL2);
    CHECK_THROWS_AS((void)norm_from_string("l1"), ConfigError);
}

TEST_CASE("evaluate: zero-epsilon robustness equals natural accuracy") {
    Model m = Model::init(ModelSpec{"mlp2", 4, 3, 16}, 14);
    Tensor x = random_batch(40, 4, 101);
    Tensor y = random_labels(40, 3, 102);

    AttackConfig cfg;
    cfg.epsilon = 0.0;
    cfg.steps = 5;
    cfg.alpha = 0.1;
    CHECK(evaluate_robustness(m, x, y, cfg, 16) ==
          evaluate_accuracy(m, x, y, 16));
}

TEST_CASE("evaluate: constant model predicts the lowest class index") {
    Model m(ModelSpec{"logreg", 3, 4, 0});  // zero weights, all logits tie
    Tensor x = random_batch(50, 3, 111);
    Tensor y = random_labels(50, 4, 112);
    int64_t zeros = 0;
    for (int64_t i = 0; i < 50; ++i)
        if (y[i] == 0.0) ++zeros;
    CHECK(evaluate_accuracy(m, x, y) ==
          static_cast<double>(zeros) / 50.0);
}

TEST_CASE("evaluate: chunk size does not change deterministic attacks") {
    Model m = Model::init(ModelSpec{"mlp2", 4, 3, 16}, 15);
    Tensor x = random_batch(37, 4, 121);
    Tensor y = random_labels(37, 3, 122);

    AttackConfig cfg;
    cfg.epsilon = 0.2;
    cfg.alpha = 0.05;
    cfg.steps = 5;
    cfg.random_start = false;  // per-chunk seeds unused
    CHECK(evaluate_robustness(m, x, y, cfg, 7) ==
          evaluate_robustness(m, x, y, cfg, 64));
}

TEST_CASE("evaluate: margin geometry on separated blobs") {
    // Two blobs at x1 = -3 and +3 with sigma 0.05, classified by the sign
    // of x1. Every point sits at least ~2.8 from the boundary, so an eps=1
    // attack cannot flip anything (robust accuracy 1), while an eps=5
    // attack can always cross (robust accuracy 0).
    const int64_t n_per = 100;
    Rng rng(Rng::derive(17, {stream::kData}));
    Tensor x({2 * n_per, 2});
    Tensor y({2 * n_per});
    for (int64_t i = 0; i < 2 * n_per; ++i) {
        const double cls = i < n_per ? 0.0 : 1.0;
        const double mu = cls == 0.0 ? -3.0 : 3.0;
        x[i * 2 + 0] = mu + 0.05 * rng.normal();
        x[i * 2 + 1] = 0.05 * rng.normal();
        y[i] = cls;
    }
    Model m = make_slope_model(2);
    CHECK(evaluate_accuracy(m, x, y) == 1.0);

    AttackConfig cfg;
    cfg.alpha = 0.5;
    cfg.steps = 5;
    cfg.epsilon = 1.0;
    CHECK(evaluate_robustness(m, x, y, cfg) == 1.0);

    cfg.epsilon = 5.0;
    cfg.alpha = 1.25;
    cfg.steps = 8;
    CHECK(evaluate_robustness(m, x, y, cfg) == 0.0);
}

TEST_CASE("evaluate: structural errors") {
    Model m = Model::init(ModelSpec{"mlp2", 4, 3, 8}, 16);
    AttackConfig cfg;
    cfg.epsilon = 0.1;

    // Zero-row batches are unrepresentable: the tensor layer rejects them
    // outright, so an empty dataset can never reach the evaluator.
    CHECK_THROWS_AS((void)Tensor({0, 4}), ShapeError);

    Tensor x = random_batch(5, 4, 131);
    Tensor bad_y = random_labels(4, 3, 132);  // wrong length
    CHECK_THROWS_AS((void)evaluate_accuracy(m, x, bad_y), ShapeError);

    Tensor flat({20});  // not [batch, dim]
    Tensor y5 = random_labels(5, 3, 133);
    CHECK_THROWS_AS((void)evaluate_accuracy(m, flat, y5), ShapeError);
    CHECK_THROWS_AS((void)evaluate_accuracy(m, x, y5, 0), ContractError);
}
