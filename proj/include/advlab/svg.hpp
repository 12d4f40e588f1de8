#pragma once

#include <string>
#include <utility>
#include <vector>

#include "advlab/metrics.hpp"

namespace advlab {

// Learning-curve figure: one test-robust-accuracy polyline per labeled
// run, epochs on x, a fixed [0,1] accuracy axis on y, and a legend. The
// output is byte-deterministic (fixed geometry, snprintf formatting).
// Throws ContractError when no curves are given or a record has no
// completed epochs; a one-epoch record renders as a point marker.
std::string render_curves_svg(
    const std::vector<std::pair<std::string, RunRecord>>& curves);

// render_curves_svg + write to path. Throws IoError on failure.
void emit_curves_svg(
    const std::vector<std::pair<std::string, RunRecord>>& curves,
    const std::string& path);

}  // namespace advlab
