#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xda/losses.hpp"

namespace xda {

struct GradCheckReport {
    int instances = 0;
    int checks = 0;
    int failures = 0;
    double max_rel_err = 0.0;
    std::vector<std::string> messages;  // one per failure, capped

    bool ok() const { return failures == 0; }
};

// Compares every analytic gradient of the three adversarial losses (head
// parameters and features) against central finite differences on random
// small instances, and verifies the reversal contract (-lambda_d scaling)
// and the (1+m) chain factor bit-exactly. Deterministic for a given seed.
GradCheckReport run_gradient_checks(int num_instances, std::uint64_t seed,
                                    double lambda_d = 0.1);

}  // namespace xda
