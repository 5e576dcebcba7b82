#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "xda/selection.hpp"
#include "xda/detection.hpp"

namespace xda {

// Identifier recorded in every report so results can be reproduced: the
// engine (std::mt19937_64, fully specified by the standard) plus the version
// of the hand-rolled samplers layered on top of it.
inline constexpr const char* kRngId = "mt19937_64/xda-dists-1";

// Confidence distribution on [0,1]. Beta covers peaked "easy"/"hard" class
// shapes; uniform gives exact-support control in tests.
struct ConfDistribution {
    enum class Kind { beta, uniform };

    Kind kind = Kind::beta;
    double a = 2.0;   // beta shape
    double b = 2.0;   // beta shape
    double lo = 0.0;  // uniform bounds
    double hi = 1.0;

    void validate() const;  // InvalidProfile
    double sample(std::mt19937_64& rng) const;

    static ConfDistribution beta(double a, double b);
    static ConfDistribution uniform(double lo, double hi);
};

// Difficulty description of one synthetic class: how often correct and false
// detections appear per image and how their confidences distribute.
struct ClassProfile {
    int class_id = 0;
    ConfDistribution tp_conf;  // confidences of correct detections
    ConfDistribution fp_conf;  // confidences of false positives
    double tp_rate = 1.0;      // expected correct detections per image
    double fp_rate = 1.0;      // expected false positives per image
    double box_min = 16.0;     // synthetic box edge range, pixels
    double box_max = 64.0;

    void validate(ImageSize image_size) const;  // InvalidProfile
};

// Deterministic per-image engine: the same (seed, index) pair always yields
// the same stream, independent of generation order.
std::mt19937_64 make_image_engine(std::uint64_t seed, std::uint64_t image_index);

// Platform-stable samplers used by the generator (uniform in [0,1) from the
// top 53 bits, Marsaglia polar normals, Marsaglia-Tsang gamma, gamma-ratio
// beta, Knuth poisson).
double sample_uniform01(std::mt19937_64& rng);
double sample_normal(std::mt19937_64& rng);
double sample_gamma(std::mt19937_64& rng, double shape);
double sample_beta(std::mt19937_64& rng, double a, double b);
int sample_poisson(std::mt19937_64& rng, double rate);

// Draws per class and image Poisson(tp_rate) correct plus Poisson(fp_rate)
// false detections with confidences from the class profile; boxes fall
// uniformly inside the image with edges from box_min..box_max. Detections
// carry truth tags; class scores put the drawn confidence at the profile's
// class and 0 elsewhere.
std::vector<PredictionBatch> generate_stream(std::span<const ClassProfile> profiles,
                                             int num_images, ImageSize image_size,
                                             std::uint64_t seed);

struct ClassMetrics {
    std::int64_t kept = 0;           // selected labels assigned to the class
    std::int64_t kept_correct = 0;   // of those, truth-correct with matching class
    std::int64_t kept_false = 0;     // kept - kept_correct
    std::int64_t total_correct = 0;  // truth-correct detections in the stream
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

struct EvalReport {
    std::vector<ClassMetrics> per_class;
    ClassMetrics aggregate;
    std::optional<double> macro_f1;       // mean of the defined per-class F1s
    std::int64_t total_detections = 0;
    std::int64_t dropped = 0;             // total_detections - aggregate.kept
    std::vector<std::vector<double>> trajectory;  // [iteration][class] threshold
    std::vector<double> final_thresholds;
    std::string rng_id;
};

// Exhaustive confusion counting of selections against the generator's truth
// tags. Undefined ratios stay unset, never 0. Throws StreamMismatch when the
// selections do not line up with the stream or the stream lacks truth tags.
EvalReport evaluate_selection(std::span<const PseudoLabelSet> selected,
                              std::span<const PredictionBatch> stream, int num_classes);

// For each global threshold, keeps detections whose joint confidence reaches
// it (assigned to their argmax class) and evaluates the result.
std::vector<EvalReport> sweep_static_thresholds(std::span<const PredictionBatch> stream,
                                                std::span<const double> thresholds,
                                                int num_classes);

struct AdaptiveSelectionResult {
    EvalReport report;
    ThresholdState final_state;
};

// Runs the adaptive selector over the stream batch by batch, accumulating
// selections and recording the per-class threshold after every iteration.
AdaptiveSelectionResult run_adaptive_selection(std::span<const PredictionBatch> stream,
                                         const ThresholdState& initial);

}  // namespace xda
