#include "advlab/losses.hpp"

#include <cmath>

#include "advlab/kernels.hpp"

namespace advlab {

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "ce") return LossKind::kCE;
    if (s == "trades") return LossKind::kTrades;
    if (s == "rst") return LossKind::kRst;
    throw ConfigError("loss: unknown kind '" + s + "' (want ce|trades|rst)");
}

const char* loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::kCE: return "ce";
        case LossKind::kTrades: return "trades";
        case LossKind::kRst: return "rst";
    }
    return "?";
}

void LossSpec::validate() const {
    if (beta < 0.0)
        throw ConfigError("loss: beta must be >= 0, got " +
                          std::to_string(beta));
    if (lambda < 0.0)
        throw ConfigError("loss: lambda must be >= 0, got " +
                          std::to_string(lambda));
    if (kind == LossKind::kCE && (beta != 0.0 || lambda != 0.0))
        throw ConfigError("loss: CE uses neither beta nor lambda");
    if (kind == LossKind::kTrades && lambda != 0.0)
        throw ConfigError("loss: TRADES does not use lambda");
}

namespace {

void check_labels(const Tensor& logits, const Tensor& labels) {
    const Shape& ls = logits.shape();
    if (ls.size() != 2)
        throw ShapeError("loss: want logits[r,c], got " + shape_str(ls));
    if (labels.shape().size() != 1 || labels.shape()[0] != ls[0])
        throw ShapeError("loss: want labels[" + std::to_string(ls[0]) +
                         "], got " + shape_str(labels.shape()));
    for (int64_t r = 0; r < ls[0]; ++r) {
        const double y = labels[r];
        if (y != std::floor(y) || y < 0 || y >= double(ls[1]))
            throw ContractError("loss: label " + std::to_string(y) +
                                " at row " + std::to_string(r) +
                                " not in [0," + std::to_string(ls[1]) + ")");
    }
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const Tensor& labels) {
    check_labels(logits, labels);
    const int64_t rows = logits.shape()[0], cols = logits.shape()[1];
    Tensor out({rows});
    kernels::softmax_xent_forward(logits.data().data(), labels.data().data(),
                                  out.data().data(), rows, cols);
    return out;
}

Tensor kl_div(const Tensor& logits_nat, const Tensor& logits_adv) {
    if (!logits_nat.same_shape(logits_adv) ||
        logits_nat.shape().size() != 2)
        throw ShapeError("kl_div: want equal logits[r,c], got " +
                         shape_str(logits_nat.shape()) + " and " +
                         shape_str(logits_adv.shape()));
    const int64_t rows = logits_nat.shape()[0], cols = logits_nat.shape()[1];
    Tensor out({rows});
    kernels::kl_forward(logits_nat.data().data(), logits_adv.data().data(),
                        out.data().data(), rows, cols);
    return out;
}

Tensor trades_per_example(const Tensor& logits_nat, const Tensor& logits_adv,
                          const Tensor& labels, double beta, bool kl_swapped) {
    Tensor ce = cross_entropy(logits_nat, labels);
    if (beta == 0.0) return ce;
    Tensor kl = kl_swapped ? kl_div(logits_adv, logits_nat)
                           : kl_div(logits_nat, logits_adv);
    Tensor out({ce.shape()[0]});
    for (int64_t i = 0; i < out.size(); ++i) out[i] = ce[i] + beta * kl[i];
    return out;
}

namespace {

template <typename F>
Tensor trades_impl(F&& forward, const Tensor& x, const Tensor& x_adv,
                   const Tensor& y, const LossSpec& spec) {
    spec.validate();
    if (spec.kind == LossKind::kCE)
        throw ContractError("trades_loss: spec.kind must be TRADES or RST");
    Tensor logits_nat = forward(x);
    if (spec.beta == 0.0)
        return trades_per_example(logits_nat, logits_nat, y, 0.0, false);
    Tensor logits_adv = forward(x_adv);
    return trades_per_example(logits_nat, logits_adv, y, spec.beta,
                              spec.kl_swapped);
}

template <typename F>
double rst_impl(F&& forward, const AdvBatch& labeled, const AdvBatch& pseudo,
                const LossSpec& spec) {
    spec.validate();
    if (spec.kind != LossKind::kRst)
        throw ContractError("rst_loss: spec.kind must be RST");
    LossSpec inner = spec;
    inner.kind = LossKind::kTrades;
    inner.lambda = 0.0;

    Tensor lab = trades_impl(forward, labeled.x, labeled.x_adv, labeled.y,
                             inner);
    const double mean_lab =
        kernels::sum(lab.data()) / static_cast<double>(lab.size());
    if (spec.lambda == 0.0) return mean_lab;

    if (pseudo.x.size() == 0)
        throw ContractError("rst_loss: lambda > 0 needs a pseudo batch");
    Tensor ps = trades_impl(forward, pseudo.x, pseudo.x_adv, pseudo.y, inner);
    const double mean_ps =
        kernels::sum(ps.data()) / static_cast<double>(ps.size());
    return mean_lab + spec.lambda * mean_ps;
}

}  // namespace

Tensor trades_loss(const Model& m, const Tensor& x, const Tensor& x_adv,
                   const Tensor& y, const LossSpec& spec) {
    return trades_impl([&](const Tensor& in) { return m.forward(in); }, x,
                       x_adv, y, spec);
}

Tensor trades_loss(const PerturbedView& view, const Tensor& x,
                   const Tensor& x_adv, const Tensor& y,
                   const LossSpec& spec) {
    return trades_impl([&](const Tensor& in) { return view.forward(in); }, x,
                       x_adv, y, spec);
}

double rst_loss(const Model& m, const AdvBatch& labeled, const AdvBatch& pseudo,
                const LossSpec& spec) {
    return rst_impl([&](const Tensor& in) { return m.forward(in); }, labeled,
                    pseudo, spec);
}

double rst_loss(const PerturbedView& view, const AdvBatch& labeled,
                const AdvBatch& pseudo, const LossSpec& spec) {
    return rst_impl([&](const Tensor& in) { return view.forward(in); },
                    labeled, pseudo, spec);
}

TrainGraph build_loss_graph(const Model& m, const LossSpec& spec,
                            int64_t batch) {
    spec.validate();
    if (batch <= 0)
        throw ContractError("build_loss_graph: batch must be positive");
    TrainGraph tg;
    tg.batch = batch;
    Graph& g = tg.g;
    tg.x_adv = g.input("x_adv", {batch, m.spec().input_dim});
    tg.w = g.input("w", {m.weight_count()});
    tg.labels = g.input("labels", {batch}, /*requires_grad=*/false);
    tg.mask = g.input("mask", {batch}, /*requires_grad=*/false);
    tg.row_weight = g.input("row_weight", {batch}, /*requires_grad=*/false);

    if (spec.kind == LossKind::kCE) {
        tg.logits_adv = m.build_forward(g, tg.x_adv, tg.w);
        tg.per_example_ce = g.softmax_xent(tg.logits_adv, tg.labels);
        tg.per_example = tg.per_example_ce;
    } else {
        tg.x = g.input("x", {batch, m.spec().input_dim});
        tg.logits_nat = m.build_forward(g, tg.x, tg.w);
        tg.logits_adv = m.build_forward(g, tg.x_adv, tg.w);
        tg.per_example_ce = g.softmax_xent(tg.logits_nat, tg.labels);
        tg.per_example_kl = spec.kl_swapped
                                ? g.kl_div(tg.logits_adv, tg.logits_nat)
                                : g.kl_div(tg.logits_nat, tg.logits_adv);
        tg.per_example =
            g.add(tg.per_example_ce, g.scale(tg.per_example_kl, spec.beta));
    }
    tg.objective =
        g.sum(g.mul(g.mul(tg.per_example, tg.mask), tg.row_weight));
    if (tg.per_example_kl != -1)
        tg.objective_kl =
            g.sum(g.mul(g.mul(tg.per_example_kl, tg.mask), tg.row_weight));
    return tg;
}

void bind_mask_ones(TrainGraph& tg) {
    tg.g.bind("mask", Tensor::full({tg.batch}, 1.0));
}

void bind_row_weight_uniform(TrainGraph& tg) {
    tg.g.bind("row_weight",
              Tensor::full({tg.batch}, 1.0 / static_cast<double>(tg.batch)));
}

}  // namespace advlab
