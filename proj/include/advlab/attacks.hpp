#pragma once

#include <cstdint>
#include <optional>

#include "advlab/losses.hpp"
#include "advlab/model.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

enum class NormP { kLinf, kL2 };

NormP norm_from_string(const std::string& s);  // ConfigError
const char* norm_name(NormP p);

// Input-space threat model plus the iteration schedule.
struct AttackConfig {
    enum class Kind { kFgsm, kPgd };
    enum class Objective { kCE, kKL };

    Kind kind = Kind::kPgd;
    NormP norm_p = NormP::kLinf;
    double epsilon = 0.0;  // ball radius, input units; 0 disables the attack
    double alpha = 0.01;   // step size
    int64_t steps = 0;     // K1; ignored by FGSM
    bool random_start = false;
    // Maximized objective: CE against the labels (vanilla AT) or KL against
    // the clean-input logits (TRADES inner maximization).
    Objective objective = Objective::kCE;
    bool kl_swapped = false;  // mirror LossSpec.kl_swapped
    std::optional<std::pair<double, double>> input_box;  // clamp interval
    uint64_t seed = 0;  // random-start stream

    void validate() const;  // throws ConfigError
    bool operator==(const AttackConfig&) const = default;
};

// Project one example's perturbation onto the epsilon ball.
void project_ball_inplace(std::span<double> delta, const AttackConfig& cfg);
Tensor project_ball(const Tensor& delta, const AttackConfig& cfg);

// Gradient-ascent engine over an arbitrary scalar objective graph:
// maximizes `objective` over the input node `x_name`, starting from x
// (plus a random start when configured), with per-step ball projection and
// box clamping. Exposed so tests can drive it with closed-form objectives.
Tensor ascend_on_graph(Graph& g, const std::string& x_name, NodeId objective,
                       const Tensor& x, const AttackConfig& cfg);

// Eq. (2): single signed-gradient step (l-inf only; ContractError otherwise).
AdvBatch fgsm(const Model& m, const Tensor& x, const Tensor& y,
              const AttackConfig& cfg);

// Eqs. (3)-(4): K1 projected ascent steps from a (possibly random) start.
AdvBatch pgd(const Model& m, const Tensor& x, const Tensor& y,
             const AttackConfig& cfg);

// Runs the configured attack (kind field) over the whole set in chunks and
// returns the fraction of examples still classified correctly. Ties in the
// argmax go to the lowest class index. ContractError on an empty set.
double evaluate_robustness(const Model& m, const Tensor& x, const Tensor& y,
                           const AttackConfig& cfg, int64_t chunk = 256);

// Natural accuracy (no attack), same argmax convention.
double evaluate_accuracy(const Model& m, const Tensor& x, const Tensor& y,
                         int64_t chunk = 256);

}  // namespace advlab
