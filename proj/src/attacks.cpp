#include "advlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "advlab/kernels.hpp"

namespace advlab {

NormP norm_from_string(const std::string& s) {
    if (s == "linf") return NormP::kLinf;
    if (s == "l2") return NormP::kL2;
    throw ConfigError("attack: unknown norm '" + s + "' (want linf|l2)");
}

const char* norm_name(NormP p) {
    return p == NormP::kLinf ? "linf" : "l2";
}

void AttackConfig::validate() const {
    if (epsilon < 0.0)
        throw ConfigError("attack: epsilon must be >= 0, got " +
                          std::to_string(epsilon));
    if (alpha <= 0.0)
        throw ConfigError("attack: alpha must be > 0, got " +
                          std::to_string(alpha));
    if (steps < 0)
        throw ConfigError("attack: steps must be >= 0, got " +
                          std::to_string(steps));
    if (input_box && !(input_box->first < input_box->second))
        throw ConfigError("attack: input_box must satisfy lo < hi");
}

void project_ball_inplace(std::span<double> delta, const AttackConfig& cfg) {
    const double eps = cfg.epsilon;
    if (cfg.norm_p == NormP::kLinf) {
        for (double& d : delta) d = std::clamp(d, -eps, eps);
        return;
    }
    const double norm = kernels::l2_norm(delta);
    // The relative guard keeps re-projection a bitwise no-op: a freshly
    // rescaled vector lands within a few ulps of the sphere and must not
    // be rescaled again.
    if (norm > eps * (1.0 + 1e-12)) {
        const double s = eps / norm;
        for (double& d : delta) d *= s;
    }
}

Tensor project_ball(const Tensor& delta, const AttackConfig& cfg) {
    cfg.validate();
    Tensor out = delta;
    project_ball_inplace(out.data(), cfg);
    return out;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void clamp_box(Tensor& t, const AttackConfig& cfg) {
    if (!cfg.input_box) return;
    const auto [lo, hi] = *cfg.input_box;
    for (int64_t i = 0; i < t.size(); ++i)
        t[i] = std::clamp(t[i], lo, hi);
}

void check_2d(const Tensor& x) {
    if (x.shape().size() != 2)
        throw ShapeError("attack: want x[batch,dim], got " +
                         shape_str(x.shape()));
}

// The differentiable objective shared by FGSM and PGD. For the KL
// objective the clean-input logits enter as a constant reference input.
struct AttackGraph {
    Graph g;
    NodeId x_adv = -1;
    NodeId per_example = -1;
    NodeId objective = -1;
};

AttackGraph build_attack_graph(const Model& m, const AttackConfig& cfg,
                               int64_t rows) {
    AttackGraph ag;
    Graph& g = ag.g;
    NodeId logits = m.build_forward(g, "x_adv", "w", rows);
    ag.x_adv = g.input_id("x_adv");
    if (cfg.objective == AttackConfig::Objective::kCE) {
        NodeId labels = g.input("labels", {rows}, /*requires_grad=*/false);
        ag.per_example = g.softmax_xent(logits, labels);
    } else {
        NodeId ref = g.input("ref_logits", {rows, m.spec().classes},
                             /*requires_grad=*/false);
        ag.per_example = cfg.kl_swapped ? g.kl_div(logits, ref)
                                        : g.kl_div(ref, logits);
    }
    // Sum, not mean: per-example gradients are then independent of the
    // batch size, and rows never mix.
    ag.objective = g.sum(ag.per_example);
    g.bind("w", m.weights());
    return ag;
}

void bind_objective_inputs(AttackGraph& ag, const Model& m,
                           const AttackConfig& cfg, const Tensor& x,
                           const Tensor& y) {
    if (cfg.objective == AttackConfig::Objective::kCE)
        ag.g.bind("labels", y);
    else
        ag.g.bind("ref_logits", m.forward(x));
}

Tensor loss_at(AttackGraph& ag, const Tensor& x_adv) {
    ag.g.bind("x_adv", x_adv);
    return ag.g.evaluate(ag.per_example);
}

}  // namespace

Tensor ascend_on_graph(Graph& g, const std::string& x_name, NodeId objective,
                       const Tensor& x, const AttackConfig& cfg) {
    cfg.validate();
    check_2d(x);
    if (cfg.epsilon == 0.0) return x;  // the ball is a point

    const int64_t rows = x.shape()[0], dim = x.shape()[1];
    Tensor xa = x;

    if (cfg.random_start) {
        Rng rng(Rng::derive(cfg.seed, {stream::kAttack}));
        if (cfg.norm_p == NormP::kLinf) {
            for (int64_t i = 0; i < xa.size(); ++i)
                xa[i] = x[i] + rng.uniform(-cfg.epsilon, cfg.epsilon);
        } else {
            // Uniform in the l2 ball: gaussian direction, radius eps*u^(1/d).
            std::vector<double> dir(static_cast<size_t>(dim));
            for (int64_t r = 0; r < rows; ++r) {
                for (auto& d : dir) d = rng.normal();
                const double n = kernels::l2_norm(dir);
                const double radius =
                    cfg.epsilon *
                    std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
                const double s = n > 1e-300 ? radius / n : 0.0;
                for (int64_t c = 0; c < dim; ++c)
                    xa[r * dim + c] = x[r * dim + c] + s * dir[c];
            }
        }
        clamp_box(xa, cfg);
    }

    NodeId x_node = g.input_id(x_name);
    std::vector<double> delta(static_cast<size_t>(dim));
    for (int64_t step = 0; step < cfg.steps; ++step) {
        g.bind(x_name, xa);
        g.backward(objective);
        std::span<const double> grad = g.grad(x_node);
        for (double v : grad)
            if (!std::isfinite(v))
                throw NumericError("attack: non-finite input gradient", -1);

        if (cfg.norm_p == NormP::kLinf) {
            for (int64_t i = 0; i < xa.size(); ++i)
                xa[i] += cfg.alpha * sign(grad[i]);
        } else {
            for (int64_t r = 0; r < rows; ++r) {
                const double n = kernels::l2_norm(grad.subspan(
                    static_cast<size_t>(r * dim), static_cast<size_t>(dim)));
                if (n <= 1e-12) continue;  // zero-gradient iterate: no step
                const double s = cfg.alpha / n;
                for (int64_t c = 0; c < dim; ++c)
                    xa[r * dim + c] += s * grad[r * dim + c];
            }
        }
        for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < dim; ++c)
                delta[static_cast<size_t>(c)] =
                    xa[r * dim + c] - x[r * dim + c];
            project_ball_inplace(delta, cfg);
            for (int64_t c = 0; c < dim; ++c)
                xa[r * dim + c] = x[r * dim + c] + delta[static_cast<size_t>(c)];
        }
        clamp_box(xa, cfg);
    }
    return xa;
}

AdvBatch fgsm(const Model& m, const Tensor& x, const Tensor& y,
              const AttackConfig& cfg) {
    cfg.validate();
    check_2d(x);
    if (cfg.norm_p != NormP::kLinf)
        throw ContractError("fgsm: defined for the l-inf norm only");

    AttackGraph ag = build_attack_graph(m, cfg, x.shape()[0]);
    bind_objective_inputs(ag, m, cfg, x, y);

    AdvBatch out;
    out.x = x;
    out.y = y;
    if (cfg.epsilon == 0.0) {
        out.x_adv = x;
        out.per_example_loss = loss_at(ag, x);
        return out;
    }

    ag.g.bind("x_adv", x);
    ag.g.backward(ag.objective);
    std::span<const double> grad = ag.g.grad(ag.x_adv);
    for (double v : grad)
        if (!std::isfinite(v))
            throw NumericError("fgsm: non-finite input gradient", -1);

    Tensor xa = x;
    for (int64_t i = 0; i < xa.size(); ++i)
        xa[i] += cfg.epsilon * sign(grad[i]);
    clamp_box(xa, cfg);
    out.per_example_loss = loss_at(ag, xa);
    out.x_adv = std::move(xa);
    return out;
}

AdvBatch pgd(const Model& m, const Tensor& x, const Tensor& y,
             const AttackConfig& cfg) {
    cfg.validate();
    check_2d(x);
    AttackGraph ag = build_attack_graph(m, cfg, x.shape()[0]);
    bind_objective_inputs(ag, m, cfg, x, y);

    AdvBatch out;
    out.x = x;
    out.y = y;
    out.x_adv = ascend_on_graph(ag.g, "x_adv", ag.objective, x, cfg);
    out.per_example_loss = loss_at(ag, out.x_adv);
    return out;
}

namespace {

int64_t argmax_row(std::span<const double> row) {
    int64_t best = 0;
    for (size_t c = 1; c < row.size(); ++c)
        if (row[c] > row[best]) best = static_cast<int64_t>(c);
    return best;
}

template <typename AdvFn>
double accuracy_loop(const Model& m, const Tensor& x, const Tensor& y,
                     int64_t chunk, AdvFn&& adv) {
    check_2d(x);
    const int64_t rows = x.shape()[0];
    if (rows == 0 || x.size() == 0)
        throw ContractError("evaluate: empty dataset");
    if (y.shape().size() != 1 || y.shape()[0] != rows)
        throw ShapeError("evaluate: want labels[" + std::to_string(rows) +
                         "], got " + shape_str(y.shape()));
    if (chunk <= 0) throw ContractError("evaluate: chunk must be positive");

    int64_t correct = 0;
    const int64_t classes = m.spec().classes;
    for (int64_t begin = 0, idx = 0; begin < rows; begin += chunk, ++idx) {
        const int64_t end = std::min(rows, begin + chunk);
        Tensor xs = x.take_rows(begin, end);
        Tensor ys({end - begin});
        for (int64_t i = 0; i < ys.size(); ++i) ys[i] = y[begin + i];
        Tensor pts = adv(xs, ys, idx);
        Tensor logits = m.forward(pts);
        for (int64_t r = 0; r < end - begin; ++r) {
            const auto pred = argmax_row(
                logits.data().subspan(static_cast<size_t>(r * classes),
                                      static_cast<size_t>(classes)));
            if (pred == static_cast<int64_t>(ys[r])) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(rows);
}

}  // namespace

double evaluate_robustness(const Model& m, const Tensor& x, const Tensor& y,
                           const AttackConfig& cfg, int64_t chunk) {
    cfg.validate();
    return accuracy_loop(
        m, x, y, chunk,
        [&](const Tensor& xs, const Tensor& ys, int64_t idx) {
            AttackConfig sub = cfg;
            sub.seed = Rng::derive(cfg.seed,
                                   {stream::kAttack, uint64_t(idx)});
            AdvBatch ab = (cfg.kind == AttackConfig::Kind::kFgsm)
                              ? fgsm(m, xs, ys, sub)
                              : pgd(m, xs, ys, sub);
            return ab.x_adv;
        });
}

double evaluate_accuracy(const Model& m, const Tensor& x, const Tensor& y,
                         int64_t chunk) {
    return accuracy_loop(m, x, y, chunk,
                         [](const Tensor& xs, const Tensor&, int64_t) {
                             return xs;
                         });
}

}  // namespace advlab
