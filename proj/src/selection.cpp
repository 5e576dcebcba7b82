#include "xda/selection.hpp"

#include <algorithm>
#include <cmath>

namespace xda {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_scores_match(const Detection& d, int num_classes) {
    if (static_cast<int>(d.class_scores.size()) != num_classes) {
        throw ShapeMismatch("detection has " + std::to_string(d.class_scores.size()) +
                            " class scores, state has " + std::to_string(num_classes) +
                            " classes");
    }
}

}  // namespace

void ThresholdState::validate() const {
    if (per_class.empty()) {
        throw RangeError("threshold state: no classes");
    }
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        const double v = per_class[c];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw RangeError("threshold state: per_class[" + std::to_string(c) +
                             "] outside [0,1]");
        }
    }
    if (!std::isfinite(delta_t) || delta_t < 0.0 || delta_t > 1.0) {
        throw RangeError("threshold state: delta_t outside [0,1]");
    }
    if (!std::isfinite(alpha_t) || alpha_t < 0.0 || alpha_t > 1.0) {
        throw RangeError("threshold state: alpha_t outside [0,1]");
    }
    if (!std::isfinite(beta_start) || beta_start < 0.0 || !std::isfinite(beta_end) ||
        beta_end < 0.0) {
        throw RangeError("threshold state: beta endpoints must be finite and >= 0");
    }
    if (num_bins < 2) {
        throw RangeError("threshold state: num_bins must be >= 2");
    }
    if (total_iters < 1) {
        throw RangeError("threshold state: total_iters must be >= 1");
    }
    if (iter < 0) {
        throw RangeError("threshold state: iter must be >= 0");
    }
}

ConfidenceHistogram ConfidenceHistogram::zeros(int num_classes, int num_bins) {
    if (num_classes < 1 || num_bins < 2) {
        throw RangeError("histogram: need num_classes >= 1 and num_bins >= 2");
    }
    ConfidenceHistogram h;
    h.num_classes = num_classes;
    h.num_bins = num_bins;
    h.counts.assign(static_cast<std::size_t>(num_classes) * num_bins, 0);
    return h;
}

std::int64_t ConfidenceHistogram::count(int class_id, int bin) const {
    if (class_id < 0 || class_id >= num_classes || bin < 1 || bin > num_bins) {
        throw RangeError("histogram: index out of range");
    }
    return counts[static_cast<std::size_t>(class_id) * num_bins + (bin - 1)];
}

void ConfidenceHistogram::add(int class_id, int bin, std::int64_t n) {
    if (class_id < 0 || class_id >= num_classes || bin < 1 || bin > num_bins) {
        throw RangeError("histogram: index out of range");
    }
    counts[static_cast<std::size_t>(class_id) * num_bins + (bin - 1)] += n;
}

void ConfidenceHistogram::merge(const ConfidenceHistogram& other) {
    if (other.num_classes != num_classes || other.num_bins != num_bins) {
        throw ShapeMismatch("histogram merge: shapes differ");
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        counts[i] += other.counts[i];
    }
}

std::int64_t ConfidenceHistogram::class_total(int class_id) const {
    std::int64_t total = 0;
    for (int bin = 1; bin <= num_bins; ++bin) {
        total += count(class_id, bin);
    }
    return total;
}

int confidence_bin(double conf, int num_bins) {
    if (num_bins < 2) {
        throw RangeError("confidence_bin: num_bins must be >= 2");
    }
    if (!std::isfinite(conf) || conf < 0.0 || conf > 1.0) {
        throw RangeError("confidence_bin: conf outside [0,1]");
    }
    int bin = static_cast<int>(std::ceil(conf * num_bins));
    bin = std::clamp(bin, 1, num_bins);
    // ceil can land a value sitting exactly on a bin edge one bin too high
    // (or low) once rounding enters; settle it against the membership
    // predicate itself.
    while (bin > 1 && conf <= static_cast<double>(bin - 1) / num_bins) {
        --bin;
    }
    while (bin < num_bins && conf > static_cast<double>(bin) / num_bins) {
        ++bin;
    }
    return bin;
}

PredictionBatch coarse_filter(const PredictionBatch& batch, double delta_t) {
    PredictionBatch out;
    out.image_id = batch.image_id;
    out.image_size = batch.image_size;
    out.detections.reserve(batch.detections.size());
    for (const Detection& d : batch.detections) {
        if (d.conf >= delta_t) {
            out.detections.push_back(d);
        }
    }
    return out;
}

ConfidenceHistogram accumulate_histogram(const PredictionBatch& batch, int num_bins,
                                         int num_classes) {
    ConfidenceHistogram h = ConfidenceHistogram::zeros(num_classes, num_bins);
    for (const Detection& d : batch.detections) {
        check_scores_match(d, num_classes);
        const int c = argmax_class(d).first;
        h.add(c, confidence_bin(d.conf, num_bins));
    }
    return h;
}

std::optional<double> mode_endpoint(const ConfidenceHistogram& hist, int class_id) {
    if (class_id < 0 || class_id >= hist.num_classes) {
        throw RangeError("mode_endpoint: class out of range");
    }
    int best_bin = 0;
    std::int64_t best_count = 0;
    for (int bin = 1; bin <= hist.num_bins; ++bin) {
        const std::int64_t n = hist.count(class_id, bin);
        if (n > 0 && n >= best_count) {  // >= sends ties to the higher bin
            best_count = n;
            best_bin = bin;
        }
    }
    if (best_bin == 0) {
        return std::nullopt;
    }
    return static_cast<double>(best_bin) / hist.num_bins;
}

double cosine_beta_at(const ThresholdState& state, std::int64_t k) {
    if (state.total_iters < 1) {
        throw RangeError("cosine_beta: total_iters must be >= 1");
    }
    const std::int64_t kk = std::clamp<std::int64_t>(k, 0, state.total_iters);
    const double phase = kPi * static_cast<double>(kk) / static_cast<double>(state.total_iters);
    return state.beta_end + 0.5 * (state.beta_start - state.beta_end) * (1.0 + std::cos(phase));
}

double cosine_beta(const ThresholdState& state) {
    return cosine_beta_at(state, state.iter);
}

ThresholdState update_thresholds(const ThresholdState& state,
                                 const std::vector<std::optional<double>>& deltas) {
    state.validate();
    if (static_cast<int>(deltas.size()) != state.num_classes()) {
        throw ShapeMismatch("update_thresholds: " + std::to_string(deltas.size()) +
                            " deltas for " + std::to_string(state.num_classes()) + " classes");
    }
    ThresholdState next = state;
    next.iter = state.iter + 1;
    const double beta = cosine_beta_at(state, next.iter);
    for (int c = 0; c < state.num_classes(); ++c) {
        if (!deltas[c].has_value()) {
            continue;  // no surviving evidence for this class; keep the threshold
        }
        const double mixed =
            state.alpha_t * state.per_class[c] + (1.0 - state.alpha_t) * beta * *deltas[c];
        next.per_class[c] = std::clamp(mixed, 0.0, 1.0);
    }
    return next;
}

PseudoLabelSet select_pseudo_labels(const PredictionBatch& batch, const ThresholdState& state) {
    PseudoLabelSet out;
    out.image_id = batch.image_id;
    for (const Detection& d : batch.detections) {
        check_scores_match(d, state.num_classes());
        const int c = argmax_class(d).first;
        if (d.conf >= state.per_class[c]) {
            PseudoLabel label;
            label.detection = d;
            label.assigned_class = c;
            label.one_hot.assign(state.per_class.size(), 0.0);
            label.one_hot[c] = 1.0;
            out.labels.push_back(std::move(label));
        }
    }
    return out;
}

SelectionOutcome selection_step(const PredictionBatch& batch, const ThresholdState& state) {
    state.validate();
    const PredictionBatch surviving = coarse_filter(batch, state.delta_t);
    const ConfidenceHistogram hist =
        accumulate_histogram(surviving, state.num_bins, state.num_classes());
    std::vector<std::optional<double>> deltas(state.num_classes());
    for (int c = 0; c < state.num_classes(); ++c) {
        deltas[c] = mode_endpoint(hist, c);
    }
    ThresholdState updated = update_thresholds(state, deltas);
    PseudoLabelSet labels = select_pseudo_labels(surviving, updated);
    return {std::move(labels), std::move(updated)};
}

}  // namespace xda
