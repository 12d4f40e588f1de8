#include "advlab/perturb.hpp"

#include <algorithm>
#include <cmath>

#include "advlab/kernels.hpp"

namespace advlab {

PerturbMode perturb_mode_from_string(const std::string& s) {
    if (s == "at") return PerturbMode::kAT;
    if (s == "awp") return PerturbMode::kAWP;
    if (s == "rwp") return PerturbMode::kRWP;
    throw ConfigError("perturb: unknown mode '" + s + "' (want at|awp|rwp)");
}

const char* perturb_mode_name(PerturbMode m) {
    switch (m) {
        case PerturbMode::kAT: return "at";
        case PerturbMode::kAWP: return "awp";
        case PerturbMode::kRWP: return "rwp";
    }
    return "?";
}

MaskLoss mask_loss_from_string(const std::string& s) {
    if (s == "composite") return MaskLoss::kComposite;
    if (s == "kl") return MaskLoss::kKlOnly;
    throw ConfigError("perturb: unknown mask loss '" + s +
                      "' (want composite|kl)");
}

const char* mask_loss_name(MaskLoss m) {
    return m == MaskLoss::kComposite ? "composite" : "kl";
}

double PerturbConfig::effective_c_min() const {
    switch (mode) {
        case PerturbMode::kAT: return 0.0;
        case PerturbMode::kAWP: return std::numeric_limits<double>::infinity();
        case PerturbMode::kRWP: return c_min;
    }
    return 0.0;
}

void PerturbConfig::validate() const {
    if (!std::isfinite(gamma) || gamma < 0.0)
        throw ConfigError("perturb: gamma must be finite and >= 0, got " +
                          std::to_string(gamma));
    if (k2 < 0)
        throw ConfigError("perturb: k2 must be >= 0, got " +
                          std::to_string(k2));
    if (std::isnan(c_min) || c_min < 0.0)
        throw ConfigError("perturb: c_min must be >= 0 (or +inf), got " +
                          std::to_string(c_min));
    if (lsc_override) {
        if (std::isnan(lsc_override->p) || lsc_override->p < 0.0)
            throw ConfigError("perturb: lsc range needs p >= 0, got " +
                              std::to_string(lsc_override->p));
        if (!(lsc_override->p <= lsc_override->q))
            throw ConfigError("perturb: lsc range has p > q (p=" +
                              std::to_string(lsc_override->p) + ", q=" +
                              std::to_string(lsc_override->q) + ")");
    }
}

std::vector<bool> lsc_group(std::span<const double> losses,
                            const LSCRange& range) {
    if (!(range.p <= range.q))
        throw ContractError("lsc: range has p > q (p=" +
                            std::to_string(range.p) + ", q=" +
                            std::to_string(range.q) + ")");
    std::vector<bool> mask(losses.size());
    for (size_t i = 0; i < losses.size(); ++i) {
        if (!std::isfinite(losses[i]))
            throw ContractError("lsc: non-finite loss at index " +
                                std::to_string(i));
        mask[i] = range.p <= losses[i] && losses[i] <= range.q;
    }
    return mask;
}

Tensor mask_losses(const PerturbedView& view, const AdvBatch& batch,
                   const LossSpec& spec, MaskLoss which) {
    spec.validate();
    if (which == MaskLoss::kKlOnly && spec.kind == LossKind::kCE)
        throw ContractError(
            "perturb: KL-only mask loss requires a TRADES/RST objective");
    if (spec.kind == LossKind::kCE)
        return cross_entropy(view.forward(batch.x_adv), batch.y);
    Tensor logits_nat = view.forward(batch.x);
    Tensor logits_adv = view.forward(batch.x_adv);
    if (which == MaskLoss::kKlOnly)
        return spec.kl_swapped ? kl_div(logits_adv, logits_nat)
                               : kl_div(logits_nat, logits_adv);
    return trades_per_example(logits_nat, logits_adv, batch.y, spec.beta,
                              spec.kl_swapped);
}

namespace {

// Eq. (8) indicator: one-sided, so a KL that rounds to a tiny negative
// still counts as "below c_min" (lsc_group's two-sided interval is the
// separate Eq. (7) analysis tool).
std::vector<bool> below_threshold(std::span<const double> losses, double c) {
    std::vector<bool> mask(losses.size());
    for (size_t i = 0; i < losses.size(); ++i)
        mask[i] = losses[i] <= c;
    return mask;
}

struct LoopGraph {
    TrainGraph tg;
    NodeId ascent_obj = -1;  // scalar the ascent differentiates
    NodeId mask_node = -1;   // per-example loss the indicator reads
};

// Build the training graph for this batch and bind everything that stays
// fixed across inner steps. "w" is bound by the caller per step.
LoopGraph prepare(const Model& m, const AdvBatch& batch, const LossSpec& spec,
                  MaskLoss which, std::span<const double> row_weight) {
    spec.validate();
    if (which == MaskLoss::kKlOnly && spec.kind == LossKind::kCE)
        throw ContractError(
            "perturb: KL-only mask loss requires a TRADES/RST objective");
    if (batch.x_adv.shape().size() != 2)
        throw ShapeError("perturb: want x_adv[batch,dim], got " +
                         shape_str(batch.x_adv.shape()));
    const int64_t rows = batch.x_adv.shape()[0];

    LoopGraph lg;
    lg.tg = build_loss_graph(m, spec, rows);
    lg.tg.g.bind("x_adv", batch.x_adv);
    lg.tg.g.bind("labels", batch.y);
    if (spec.kind != LossKind::kCE) lg.tg.g.bind("x", batch.x);
    if (row_weight.empty())
        bind_row_weight_uniform(lg.tg);
    else
        lg.tg.g.bind("row_weight", row_weight);

    const bool kl_only = which == MaskLoss::kKlOnly;
    lg.ascent_obj = kl_only ? lg.tg.objective_kl : lg.tg.objective;
    lg.mask_node = kl_only ? lg.tg.per_example_kl : lg.tg.per_example;
    return lg;
}

// One Alg. 1 inner-loop body at the view's current w+v, which the caller
// has already bound as "w": raw masked gradient, then renormalize onto the
// gamma * ||w|| sphere (skipped when the ascent left v at zero).
void masked_ascent(LoopGraph& lg, PerturbedView& view,
                   const std::vector<bool>& mask, double gamma) {
    Tensor md({static_cast<int64_t>(mask.size())});
    for (int64_t i = 0; i < md.size(); ++i) md[i] = mask[i] ? 1.0 : 0.0;
    lg.tg.g.bind("mask", md);
    lg.tg.g.backward(lg.ascent_obj);
    std::span<const double> grad = lg.tg.g.grad(lg.tg.w);

    std::vector<double> v(view.v().begin(), view.v().end());
    for (size_t i = 0; i < v.size(); ++i) v[i] += grad[i];
    const double vnorm = kernels::l2_norm(v);
    if (vnorm > 0.0) {
        const double s = gamma * view.base().weight_norm() / vnorm;
        for (double& x : v) x *= s;
    }
    view.set_v(v);
}

void check_mask_size(const std::vector<bool>& mask, int64_t rows) {
    if (static_cast<int64_t>(mask.size()) != rows)
        throw ShapeError("perturb: mask has " + std::to_string(mask.size()) +
                         " entries for a batch of " + std::to_string(rows));
}

// Which examples the ascent may touch: the Eq. (8) indicator, or the
// Eq. (7) band when an RWP run overrides it.
std::vector<bool> select_mask(std::span<const double> losses,
                              const PerturbConfig& cfg) {
    if (cfg.mode == PerturbMode::kRWP && cfg.lsc_override)
        return lsc_group(losses, *cfg.lsc_override);
    return below_threshold(losses, cfg.effective_c_min());
}

}  // namespace

std::vector<bool> rwp_mask(const PerturbedView& view, const AdvBatch& batch,
                           const LossSpec& spec, const PerturbConfig& cfg) {
    cfg.validate();
    Tensor l = mask_losses(view, batch, spec, cfg.mask_loss);
    return select_mask(l.data(), cfg);
}

void rwp_step(PerturbedView& view, const AdvBatch& batch, const LossSpec& spec,
              const std::vector<bool>& mask, const PerturbConfig& cfg,
              std::span<const double> row_weight) {
    cfg.validate();
    if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }))
        throw ContractError("rwp_step: mask has no true entries");
    LoopGraph lg =
        prepare(view.base(), batch, spec, cfg.mask_loss, row_weight);
    check_mask_size(mask, lg.tg.batch);
    lg.tg.g.bind("w", view.materialized());
    masked_ascent(lg, view, mask, cfg.gamma);
}

PerturbState rwp_generate(PerturbedView& view, const AdvBatch& batch,
                          const LossSpec& spec, const PerturbConfig& cfg,
                          std::span<const double> row_weight) {
    cfg.validate();
    PerturbState st;
    st.v.assign(static_cast<size_t>(view.base().weight_count()), 0.0);
    st.mask.assign(static_cast<size_t>(batch.y.size()), false);
    view.detach();  // Alg. 1: initialize v = 0

    // AT never perturbs; k2 = 0 never enters the loop; gamma = 0 keeps v
    // renormalized to zero, so the run is AT with extra arithmetic. All
    // three skip graph construction entirely.
    if (cfg.mode == PerturbMode::kAT || cfg.k2 == 0 || cfg.gamma == 0.0)
        return st;

    LoopGraph lg =
        prepare(view.base(), batch, spec, cfg.mask_loss, row_weight);
    for (int64_t k = 0; k < cfg.k2; ++k) {
        lg.tg.g.bind("w", view.materialized());
        const Tensor& losses = lg.tg.g.evaluate(lg.mask_node);
        st.mask = select_mask(losses.data(), cfg);
        if (std::none_of(st.mask.begin(), st.mask.end(),
                         [](bool b) { return b; }))
            break;
        masked_ascent(lg, view, st.mask, cfg.gamma);
        st.steps_taken = k + 1;
    }
    st.v.assign(view.v().begin(), view.v().end());
    return st;
}

}  // namespace advlab
