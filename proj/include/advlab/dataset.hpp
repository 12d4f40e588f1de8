#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advlab/tensor.hpp"

namespace advlab {

// A train/test split with [rows, dim] features and integral labels.
struct Dataset {
    std::string name;
    int64_t classes = 0;
    Tensor train_x, train_y;
    Tensor test_x, test_y;
    // Valid input interval for attack clamping; synthetic data is unbounded.
    std::optional<std::pair<double, double>> input_box;

    int64_t dim() const { return train_x.shape()[1]; }
    void validate() const;  // ShapeError / ContractError
};

// Deterministic 2-D two-class toys ("gaussians" | "moons"): n total points,
// class-balanced within one point, split half/half into disjoint train and
// test with per-class balance preserved. noise scales i.i.d. gaussian
// jitter; at noise = 0 the gaussians sit exactly at the class means plus a
// small structured offset and remain linearly separable, and the moons lie
// exactly on their arcs.
Dataset gen_synthetic(const std::string& kind, int64_t n, double noise,
                      uint64_t seed);

// Reads the IDX pair `<prefix>-images-idx3-ubyte` (magic 0x00000803) and
// `<prefix>-labels-idx1-ubyte` (magic 0x00000801) and draws a seeded-random
// subset: `count` training rows plus up to `count` disjoint test rows (all
// remaining records when fewer are left). Pixels scale by 1/255 into [0,1]
// and input_box becomes [0,1]; class count comes from the full label file.
// Structural problems -- bad magic, truncation or trailing bytes, counts
// out of range -- raise IoError naming the offending file; count = 0 is a
// ContractError (an empty dataset is unrepresentable).
Dataset load_idx_subset(const std::string& prefix, int64_t count,
                        uint64_t seed);

// Writes an IDX image/label pair in exactly the loader's input format.
void write_idx(const std::string& prefix, const std::vector<uint8_t>& pixels,
               int64_t count, int64_t rows, int64_t cols,
               const std::vector<uint8_t>& labels);

}  // namespace advlab
