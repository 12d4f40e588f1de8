#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advlab/attacks.hpp"
#include "advlab/dataset.hpp"
#include "advlab/losses.hpp"
#include "advlab/metrics.hpp"
#include "advlab/model.hpp"
#include "advlab/perturb.hpp"

namespace advlab {

// Everything one training run needs. The desk-scale defaults shrink the
// reference schedule (200 epochs, milestones 100/150) to 30 epochs with
// milestones 15/23.
struct TrainConfig {
    int64_t epochs = 30;
    int64_t batch_size = 128;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<int64_t> lr_milestones = {15, 23};
    double lr_decay = 0.1;  // multiplied in at each milestone
    uint64_t seed = 1;
    AttackConfig attack;       // training-time attack (K1 steps)
    AttackConfig eval_attack;  // per-epoch robustness evaluation
    PerturbConfig perturb;
    LossSpec loss;
    std::vector<double> lsc_edges = kDefaultLscEdges;
    // 0 = evaluate the full train split each epoch; k > 0 evaluates only
    // its first k rows (robust eval is the expensive part of an epoch).
    int64_t eval_train_rows = 0;
    int64_t eval_chunk = 256;

    void validate() const;  // throws ConfigError
    bool operator==(const TrainConfig&) const = default;
};

// Effective learning rate at a 1-based epoch: lr times lr_decay once per
// milestone already reached.
double lr_at_epoch(const TrainConfig& cfg, int64_t epoch);

// SGD-with-momentum buffer. Indexed to the unperturbed weights: it
// accumulates gradients evaluated at w+v but belongs to w.
struct SgdState {
    std::vector<double> m;
    explicit SgdState(int64_t weight_count)
        : m(static_cast<size_t>(weight_count), 0.0) {}
};

struct StepMetrics {
    double mean_loss = 0.0;      // row-weighted loss at the gradient point
    int64_t perturb_steps = 0;   // Alg. 1 inner iterations actually taken
    int64_t mask_count = 0;      // surviving entries of the final mask
    Tensor per_example;          // per-example loss at w+v (LSC histogram)
};

// One Alg. 1 outer iteration: (1) run the training attack at w; (2)
// rwp_generate the weight perturbation v; (3) take the gradient of the
// row-weighted loss at w+v (weight decay also reads w+v); (4) fold it into
// the momentum buffer; (5) apply the step to the unperturbed w. v is never
// added into the model's weights -- w+v exists only as the evaluation
// point -- so the update is exactly (w+v) - lr*step - v with no residue,
// and lr = 0 leaves the weights bitwise untouched. The caller supplies the
// epoch's learning rate and this step's attack seed; row_weight (optional)
// carries the RST lambda weighting. A NumericError is rethrown tagged with
// the model's step counter.
StepMetrics train_step(Model& m, SgdState& opt, const Tensor& x,
                       const Tensor& y, const TrainConfig& cfg, double lr,
                       uint64_t attack_seed,
                       std::span<const double> row_weight = {});

struct TrainResult {
    RunRecord record;
    Model best;  // highest test robust accuracy ever seen (ties: earliest)
    Model last;
    std::string best_path, last_path;  // empty when out_dir was empty
};

// The full outer loop: initial evaluation, epochs of shuffled full
// mini-batches (remainder rows are dropped), per-epoch evaluation of both
// splits with eval_attack, best/last tracking. When out_dir is nonempty,
// best.ckpt, last.ckpt and metrics.csv are written there. For RST runs the
// train split's first half acts as the labeled set and the second half as
// the pseudo-labeled pool (its stored labels standing in for high-quality
// pseudo-labels); each step trains on a labeled batch concatenated with an
// equal-size pseudo batch weighted by lambda.
TrainResult train(Model m, const Dataset& data, const TrainConfig& cfg,
                  const std::string& out_dir = "");

// One knob swept over several values, everything else (including the
// seed, so runs share their initialization) taken from the base config.
// Keys address RWP knobs, so swept runs force perturb mode rwp: "c_min"
// and "gamma" and "k2" set the matching PerturbConfig field ("c_min" at
// inf lands on the AWP-equivalent loop, 0 on the AT-equivalent one);
// "lsc" replaces the threshold mask with the lsc_group(p, q) band.
struct SweepSpec {
    std::string key;             // c_min | gamma | k2 | lsc
    std::vector<double> values;  // for c_min / gamma / k2
    std::vector<LSCRange> ranges;  // for lsc

    int64_t size() const;
    void validate() const;  // throws ConfigError
};

struct AblationEntry {
    std::string key;
    double value = 0.0;  // c_min / gamma / k2 sweeps
    LSCRange range;      // lsc sweeps
    TrainResult result;
};

// One full run per sweep value from a fresh Model::init(spec, base.seed).
// Runs are independent, so they execute in parallel; the returned table
// is ordered like the sweep regardless of scheduling. When out_dir is
// nonempty each run writes to <out_dir>/<key>_<value>/.
std::vector<AblationEntry> run_ablation(const ModelSpec& spec,
                                        const Dataset& data,
                                        const TrainConfig& base,
                                        const SweepSpec& sweep,
                                        const std::string& out_dir = "");

}  // namespace advlab
