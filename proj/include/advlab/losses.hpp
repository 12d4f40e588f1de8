#pragma once

#include <cstdint>
#include <string>

#include "advlab/graph.hpp"
#include "advlab/model.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

// Which training objective to optimize.
enum class LossKind { kCE, kTrades, kRst };

LossKind loss_kind_from_string(const std::string& s);  // ConfigError
const char* loss_kind_name(LossKind k);

struct LossSpec {
    LossKind kind = LossKind::kCE;
    double beta = 0.0;    // TRADES trade-off, >= 0
    double lambda = 0.0;  // RST unlabeled weight, >= 0
    // KL argument order: false = KL(f(x) || f(x')) as Eq. (5) writes it;
    // true swaps the arguments (some TRADES implementations differ).
    bool kl_swapped = false;

    void validate() const;  // throws ConfigError
    bool operator==(const LossSpec&) const = default;
};

// A batch with its adversarial counterpart. For CE training x_adv is the
// tensor fed to the model (vanilla AT trains on perturbed points only).
// per_example_loss carries the attack objective value at x_adv.
struct AdvBatch {
    Tensor x;
    Tensor x_adv;
    Tensor y;
    Tensor per_example_loss;
};

// --- eager per-example losses ----------------------------------------------

// -log softmax(logits)[label] per example; labels must be integral class
// indices (ContractError otherwise).
Tensor cross_entropy(const Tensor& logits, const Tensor& labels);

// KL(softmax(nat) || softmax(adv)) per example, log-space.
Tensor kl_div(const Tensor& logits_nat, const Tensor& logits_adv);

// CE(f(x), y) + beta * KL per example for already-computed logits.
Tensor trades_per_example(const Tensor& logits_nat, const Tensor& logits_adv,
                          const Tensor& labels, double beta, bool kl_swapped);

// Eq. (5) composite through a model or a perturbed view.
Tensor trades_loss(const Model& m, const Tensor& x, const Tensor& x_adv,
                   const Tensor& y, const LossSpec& spec);
Tensor trades_loss(const PerturbedView& view, const Tensor& x,
                   const Tensor& x_adv, const Tensor& y, const LossSpec& spec);

// Eq. (6): mean TRADES on the labeled batch + lambda * mean TRADES on the
// pseudo-labeled batch. An empty pseudo batch with lambda > 0 is a
// ContractError.
double rst_loss(const Model& m, const AdvBatch& labeled, const AdvBatch& pseudo,
                const LossSpec& spec);
double rst_loss(const PerturbedView& view, const AdvBatch& labeled,
                const AdvBatch& pseudo, const LossSpec& spec);

// --- the training graph ------------------------------------------------------

// One differentiable program shared by the outer weight update and the
// inner perturbation loop:
//
//   objective = sum_i per_example[i] * mask[i] * row_weight[i]
//
// mask is the LSC indicator (all-ones for the plain mean), row_weight folds
// the 1/n of Eq. (8) and the lambda weighting of Eq. (6) per row. Both are
// declared with requires_grad=false and rebound freely between phases.
struct TrainGraph {
    Graph g;
    int64_t batch = 0;
    NodeId x = -1;       // clean inputs (TRADES/RST only)
    NodeId x_adv = -1;   // training points / adversarial inputs
    NodeId w = -1;       // flat weights
    NodeId labels = -1;
    NodeId mask = -1;
    NodeId row_weight = -1;
    NodeId logits_nat = -1;   // -1 for CE
    NodeId logits_adv = -1;
    NodeId per_example_ce = -1;
    NodeId per_example_kl = -1;  // -1 for CE
    NodeId per_example = -1;     // composite per-example loss
    NodeId objective = -1;       // scalar
    // sum(per_example_kl * mask * row_weight); -1 for CE. Drives the
    // perturbation loop when the mask loss is configured as KL-only.
    NodeId objective_kl = -1;
};

TrainGraph build_loss_graph(const Model& m, const LossSpec& spec,
                            int64_t batch);

// Convenience binders for the two phase-dependent inputs.
void bind_mask_ones(TrainGraph& tg);
void bind_row_weight_uniform(TrainGraph& tg);

}  // namespace advlab
