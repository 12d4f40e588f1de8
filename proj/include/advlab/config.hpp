#pragma once

#include <cstdint>
#include <string>

#include "advlab/dataset.hpp"
#include "advlab/model.hpp"
#include "advlab/train.hpp"

namespace advlab {

// A complete run description: model, data source, and training schedule.
// Serialized as a flat `section.key = value` file (one pair per line, `#`
// comments, blank lines ignored). The file is schema-versioned via the
// required `schema` key; unknown or duplicate keys are rejected so typos
// cannot silently fall back to defaults.
struct RunConfig {
    int64_t schema = 1;

    ModelSpec model;

    // "gaussians" | "moons" draw data_n synthetic points with data_noise;
    // "idx" loads data_count training rows from the IDX pair at
    // data_path. All of them seed from train.seed.
    std::string data_kind = "moons";
    int64_t data_n = 1000;
    double data_noise = 0.1;
    std::string data_path;
    int64_t data_count = 1000;

    TrainConfig train;

    void validate() const;  // throws ConfigError
    bool operator==(const RunConfig&) const = default;
};

// Parse a config file body. Throws ConfigError naming the offending key
// and line. Numeric values accept an `a/b` fraction (so 8/255 is exact)
// and `inf`; `perturb.c_min = inf` is the reserved token for AWP and
// forces perturb.mode = awp.
RunConfig parse_config(const std::string& text);

// Read + parse. Throws IoError when the file cannot be read.
RunConfig load_config(const std::string& path);

// Emit every key in a fixed order with round-trip-exact numbers:
// parse_config(serialize_config(cfg)) == cfg for any valid cfg (after the
// c_min = inf -> AWP normalization, which serialize applies too).
std::string serialize_config(const RunConfig& cfg);

// Write serialize_config(cfg) to path. Throws IoError on failure.
void save_config(const RunConfig& cfg, const std::string& path);

// Materialize the dataset a config describes.
Dataset make_dataset(const RunConfig& cfg);

// Parse an ablation sweep argument of the form `key=v1,v2,...`:
//   c_min=0,1.7,inf   gamma=0.005,0.01   k2=1,5,10   lsc=0:0.5,1.7:inf
// Values use the same numeric grammar as config files.
SweepSpec parse_sweep(const std::string& arg);

}  // namespace advlab
