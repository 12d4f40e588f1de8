#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advlab/losses.hpp"
#include "advlab/model.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

// AT and AWP are degenerate configurations of the same loop: AT is
// c_min = 0 (mask generically empty, so no perturbation), AWP is
// c_min = +inf (mask always full).
enum class PerturbMode { kAT, kAWP, kRWP };

PerturbMode perturb_mode_from_string(const std::string& s);  // ConfigError
const char* perturb_mode_name(PerturbMode m);

// Which per-example loss gates the mask and drives the masked ascent for
// TRADES/RST objectives. The paper leaves this open; the composite
// CE + beta*KL is the default, KL-only is the alternative reading.
enum class MaskLoss { kComposite, kKlOnly };

MaskLoss mask_loss_from_string(const std::string& s);  // ConfigError
const char* mask_loss_name(MaskLoss m);

// Loss Stationary Condition interval, Eq. (7): p <= loss <= q.
struct LSCRange {
    double p = 0.0;
    double q = std::numeric_limits<double>::infinity();
    bool operator==(const LSCRange&) const = default;
};

struct PerturbConfig {
    PerturbMode mode = PerturbMode::kAT;
    double gamma = 0.01;  // Eq. (1) budget: ||v|| <= gamma * ||w||
    int64_t k2 = 10;      // Alg. 1 inner iterations
    double c_min = 1.7;   // RWP threshold; overridden by AT/AWP modes
    MaskLoss mask_loss = MaskLoss::kComposite;
    // When set (RWP mode only), the mask becomes the Eq. (7) band
    // p <= loss <= q instead of the one-sided loss <= c_min — the
    // "which LSC group should be perturbed" experiment.
    std::optional<LSCRange> lsc_override;

    // The threshold the mode actually uses: AT -> 0, AWP -> +inf,
    // RWP -> c_min.
    double effective_c_min() const;
    void validate() const;  // throws ConfigError
    bool operator==(const PerturbConfig&) const = default;
};

// Closed-interval membership per example. Throws ContractError when
// p > q or any loss is non-finite.
std::vector<bool> lsc_group(std::span<const double> losses,
                            const LSCRange& range);

// Result of one perturbation generation.
struct PerturbState {
    std::vector<double> v;     // flat, same length as the weight vector
    std::vector<bool> mask;    // last mask computed (all false if none was)
    int64_t steps_taken = 0;
};

// Per-example loss used for masking, evaluated eagerly at the view's
// current w+v. Bitwise-equal to the training-graph evaluation of the same
// quantity. kKlOnly requires a TRADES/RST spec (ContractError).
Tensor mask_losses(const PerturbedView& view, const AdvBatch& batch,
                   const LossSpec& spec, MaskLoss which);

// Eq. (8) indicator at the CURRENT w+v: mask_i = 1 iff loss_i <= c_min,
// with c_min taken from cfg.effective_c_min().
std::vector<bool> rwp_mask(const PerturbedView& view, const AdvBatch& batch,
                           const LossSpec& spec, const PerturbConfig& cfg);

// One masked ascent step, Alg. 1 inner loop: v += grad_v of the
// row-weighted masked mean loss at w+v, then v <- gamma * v * ||w||/||v||.
// A zero-norm v after the ascent skips the renormalization (v stays 0).
// The mask must have at least one true entry (ContractError). row_weight
// defaults to the uniform 1/n of Eq. (8).
void rwp_step(PerturbedView& view, const AdvBatch& batch, const LossSpec& spec,
              const std::vector<bool>& mask, const PerturbConfig& cfg,
              std::span<const double> row_weight = {});

// Alg. 1: v = 0; for k = 1..K2: mask at current w+v; break if the mask is
// empty; ascend + renormalize. Leaves the view carrying the final v and
// returns it with the last computed mask and the step count. AT returns
// immediately with v = 0 (no perturbation code path).
PerturbState rwp_generate(PerturbedView& view, const AdvBatch& batch,
                          const LossSpec& spec, const PerturbConfig& cfg,
                          std::span<const double> row_weight = {});

}  // namespace advlab
