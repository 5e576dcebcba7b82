#pragma once

#include <cstdint>
#include <filesystem>

#include "xda/selection.hpp"
#include "xda/losses.hpp"

namespace xda {

// Run-wide hyperparameters with the stock defaults. Config files are strict:
// unknown keys are rejected, defaults apply only to absent keys.
struct RunConfig {
    int num_classes = 8;
    double delta_t = 0.2;    // coarse selection threshold
    double delta_0 = 0.8;    // initial per-class threshold
    double alpha_t = 0.9999; // threshold EMA momentum
    double alpha = 0.9996;   // teacher weight EMA momentum
    double lambda_d = 0.1;   // adversarial branch weight
    int num_bins = 20;       // histogram bins M
    double beta_start = 1.0; // annealing factor endpoints
    double beta_end = 0.85;
    std::int64_t total_iters = 100000;  // annealing horizon K
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    std::uint64_t seed = 0;

    void validate() const;  // RangeError naming the violated invariant
};

// Reads a JSON config; an empty file means "all defaults". Throws ParseError
// for syntax errors or unknown keys and RangeError for invariant violations.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);

ThresholdState make_threshold_state(const RunConfig& config);
LossWeights make_loss_weights(const RunConfig& config);

}  // namespace xda
