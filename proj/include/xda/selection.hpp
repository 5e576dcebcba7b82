#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xda/detection.hpp"

namespace xda {

// Per-class adaptive threshold state. The selector keeps one threshold per
// class and refreshes it each iteration with an exponential moving average of
// the per-class confidence mode, scaled by a cosine-annealed factor.
struct ThresholdState {
    double delta_t = 0.2;             // coarse pre-filter threshold
    std::vector<double> per_class;    // current high threshold per class
    double alpha_t = 0.9999;          // EMA momentum of the threshold update
    double beta_start = 1.0;          // annealing factor at iteration 0
    double beta_end = 0.85;           // annealing factor at iteration K
    std::int64_t total_iters = 100000;  // annealing horizon K
    std::int64_t iter = 0;            // completed update count k
    int num_bins = 20;                // histogram bins M over [0,1]

    int num_classes() const { return static_cast<int>(per_class.size()); }

    // Throws RangeError on any violated invariant.
    void validate() const;
};

// Per-class counts over M right-closed intervals ((m-1)/M, m/M], m = 1..M.
// The first interval additionally contains 0.
struct ConfidenceHistogram {
    int num_classes = 0;
    int num_bins = 0;
    std::vector<std::int64_t> counts;  // [class * num_bins + (bin - 1)]

    static ConfidenceHistogram zeros(int num_classes, int num_bins);

    std::int64_t count(int class_id, int bin) const;  // bin is 1-based
    void add(int class_id, int bin, std::int64_t n = 1);

    // Bin-wise addition; shapes must match.
    void merge(const ConfidenceHistogram& other);

    std::int64_t class_total(int class_id) const;
};

struct PseudoLabel {
    Detection detection;
    int assigned_class = 0;
    std::vector<double> one_hot;  // 1 at assigned_class, 0 elsewhere
};

struct PseudoLabelSet {
    std::string image_id;
    std::vector<PseudoLabel> labels;
};

// 1-based index of the interval containing conf; conf = 0 maps to bin 1.
int confidence_bin(double conf, int num_bins);

// Keeps detections with conf >= delta_t (inclusive), preserving order.
PredictionBatch coarse_filter(const PredictionBatch& batch, double delta_t);

// One count per surviving detection, keyed by its argmax class, in the bin of
// its joint confidence.
ConfidenceHistogram accumulate_histogram(const PredictionBatch& batch, int num_bins,
                                         int num_classes);

// Right endpoint m*/M of the most-populated bin for the class; ties resolve
// toward the higher bin. Empty classes yield nullopt.
std::optional<double> mode_endpoint(const ConfidenceHistogram& hist, int class_id);

// Cosine-annealed factor at iteration k; clamps k into [0, K].
double cosine_beta_at(const ThresholdState& state, std::int64_t k);

// cosine_beta_at evaluated at the state's own iteration counter.
double cosine_beta(const ThresholdState& state);

// One EMA step per class: delta <- alpha_t * delta + (1 - alpha_t) * beta * mode.
// Classes without a mode keep their threshold. Advances the iteration counter
// and clamps results into [0,1].
ThresholdState update_thresholds(const ThresholdState& state,
                                 const std::vector<std::optional<double>>& deltas);

// Keeps detections whose joint confidence reaches their argmax class's
// threshold, emitting a one-hot label per kept detection.
PseudoLabelSet select_pseudo_labels(const PredictionBatch& batch, const ThresholdState& state);

struct SelectionOutcome {
    PseudoLabelSet labels;
    ThresholdState state;
};

// The full two-step selection: coarse filter, per-class histogram, mode
// endpoints, EMA threshold update, then selection with the updated
// thresholds. An empty batch yields an empty label set and only advances the
// iteration counter.
SelectionOutcome selection_step(const PredictionBatch& batch, const ThresholdState& state);

}  // namespace xda
