#pragma once

#include <span>
#include <string>
#include <vector>

#include "xda/errors.hpp"

namespace xda {

// Flat parameter snapshot. Two vectors mix only when layout id and length
// agree; mapping structured checkpoints onto the flat layout is the caller's
// job.
struct WeightVector {
    std::string layout_id;
    std::vector<double> values;
};

// out = alpha * teacher + (1 - alpha) * student, elementwise.
WeightVector ema_step(const WeightVector& teacher, const WeightVector& student, double alpha);

// Direct evaluation of k accumulated EMA steps starting from w0:
// out = alpha^k * w0 + sum_{i=1..k} alpha^(k-i) * (1 - alpha) * students[i-1].
// Terms accumulate in ascending i for reproducibility.
WeightVector ema_closed_form(const WeightVector& w0, std::span<const WeightVector> students,
                             double alpha);

}  // namespace xda
