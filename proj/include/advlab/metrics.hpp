#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace advlab {

// Loss histogram bin edges used for the per-epoch LSC summary: bin k
// counts losses in [edges[k], edges[k+1]), with anything below the first
// edge folded into bin 0 and the last edge at +inf catching the rest.
inline const std::vector<double> kDefaultLscEdges = {
    0.0, 0.5, 1.0, 1.7, 2.5, 4.0, std::numeric_limits<double>::infinity()};

// Counts per bin; edges must be strictly increasing with >= 2 entries.
std::vector<int64_t> lsc_histogram(std::span<const double> losses,
                                   std::span<const double> edges);

// One completed training epoch (epochs are 1-based).
struct EpochRow {
    int64_t epoch = 0;
    double lr = 0.0;
    double train_nat_acc = 0.0;
    double train_rob_acc = 0.0;
    double test_nat_acc = 0.0;
    double test_rob_acc = 0.0;
    double mean_adv_loss = 0.0;
    double perturb_steps = 0.0;     // mean Alg. 1 inner steps per batch
    std::vector<int64_t> lsc_hist;  // counts between consecutive edges

    bool operator==(const EpochRow&) const = default;
};

// Metrics of one training run: one row per completed epoch plus the
// initial (epoch-0) evaluation that seeds best-checkpoint tracking.
// best_epoch = 0 means the initial model was never beaten.
struct RunRecord {
    std::vector<EpochRow> rows;
    double init_train_nat_acc = 0.0;
    double init_train_rob_acc = 0.0;
    double init_test_nat_acc = 0.0;
    double init_test_rob_acc = 0.0;
    int64_t best_epoch = 0;
    double best_test_rob_acc = 0.0;
};

// CSV persistence of the per-epoch rows: a header plus one line per epoch,
// doubles at 17 significant digits so write-then-read is exact. Reading
// restores only the rows (the init/best summary lives in checkpoints).
// IO and format problems raise IoError naming the path.
void write_metrics_csv(const RunRecord& record, const std::string& path);
RunRecord read_metrics_csv(const std::string& path);

}  // namespace advlab
