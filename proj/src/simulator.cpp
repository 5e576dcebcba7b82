#include "xda/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace xda {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::string image_id_for(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img-%06d", index);
    return std::string(buf);
}

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
    if (den <= 0) {
        return std::nullopt;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

void finish_metrics(ClassMetrics& m) {
    m.kept_false = m.kept - m.kept_correct;
    m.precision = ratio(m.kept_correct, m.kept);
    m.recall = ratio(m.kept_correct, m.total_correct);
    if (m.precision.has_value() && m.recall.has_value()) {
        const double p = *m.precision;
        const double r = *m.recall;
        m.f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
}

}  // namespace

ConfDistribution ConfDistribution::beta(double a, double b) {
    ConfDistribution d;
    d.kind = Kind::beta;
    d.a = a;
    d.b = b;
    return d;
}

ConfDistribution ConfDistribution::uniform(double lo, double hi) {
    ConfDistribution d;
    d.kind = Kind::uniform;
    d.lo = lo;
    d.hi = hi;
    return d;
}

void ConfDistribution::validate() const {
    switch (kind) {
        case Kind::beta:
            if (!std::isfinite(a) || !std::isfinite(b) || a <= 0.0 || b <= 0.0) {
                throw InvalidProfile("beta distribution needs positive finite shapes");
            }
            break;
        case Kind::uniform:
            if (!std::isfinite(lo) || !std::isfinite(hi) || lo < 0.0 || hi > 1.0 || lo > hi) {
                throw InvalidProfile("uniform distribution needs 0 <= lo <= hi <= 1");
            }
            break;
    }
}

double ConfDistribution::sample(std::mt19937_64& rng) const {
    switch (kind) {
        case Kind::beta:
            return sample_beta(rng, a, b);
        case Kind::uniform:
            return lo + sample_uniform01(rng) * (hi - lo);
    }
    return 0.0;  // unreachable
}

void ClassProfile::validate(ImageSize image_size) const {
    tp_conf.validate();
    fp_conf.validate();
    if (!std::isfinite(tp_rate) || !std::isfinite(fp_rate) || tp_rate < 0.0 || fp_rate < 0.0) {
        throw InvalidProfile("rates must be finite and >= 0");
    }
    if (tp_rate > 1e4 || fp_rate > 1e4) {
        throw InvalidProfile("rates above 1e4 per image are not supported");
    }
    if (!std::isfinite(box_min) || !std::isfinite(box_max) || box_min <= 0.0 ||
        box_min > box_max) {
        throw InvalidProfile("box size range needs 0 < box_min <= box_max");
    }
    if (box_max > image_size.width || box_max > image_size.height) {
        throw InvalidProfile("box_max exceeds the image");
    }
}

std::mt19937_64 make_image_engine(std::uint64_t seed, std::uint64_t image_index) {
    return std::mt19937_64(mix64(mix64(seed) + image_index));
}

double sample_uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double sample_normal(std::mt19937_64& rng) {
    // Marsaglia polar; one draw per call keeps the stream layout simple.
    while (true) {
        const double u = 2.0 * sample_uniform01(rng) - 1.0;
        const double v = 2.0 * sample_uniform01(rng) - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) {
            return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }
}

double sample_gamma(std::mt19937_64& rng, double shape) {
    if (!(shape > 0.0)) {
        throw InvalidProfile("gamma shape must be positive");
    }
    if (shape < 1.0) {
        // Boost to shape+1 and scale back (Marsaglia-Tsang small-shape trick).
        double u = sample_uniform01(rng);
        while (u == 0.0) {
            u = sample_uniform01(rng);
        }
        return sample_gamma(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        const double x = sample_normal(rng);
        const double t = 1.0 + c * x;
        if (t <= 0.0) {
            continue;
        }
        const double v = t * t * t;
        double u = sample_uniform01(rng);
        if (u == 0.0) {
            continue;
        }
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

double sample_beta(std::mt19937_64& rng, double a, double b) {
    const double x = sample_gamma(rng, a);
    const double y = sample_gamma(rng, b);
    const double s = x + y;
    if (s <= 0.0) {
        return 0.5;  // both gammas underflowed; any interior value is fine
    }
    return std::clamp(x / s, 0.0, 1.0);
}

int sample_poisson(std::mt19937_64& rng, double rate) {
    if (!(rate > 0.0)) {
        return 0;
    }
    const double limit = std::exp(-rate);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= sample_uniform01(rng);
    } while (p > limit);
    return k - 1;
}

std::vector<PredictionBatch> generate_stream(std::span<const ClassProfile> profiles,
                                             int num_images, ImageSize image_size,
                                             std::uint64_t seed) {
    if (num_images < 0) {
        throw InvalidProfile("num_images must be >= 0");
    }
    if (image_size.width <= 0 || image_size.height <= 0) {
        throw InvalidProfile("image size components must be positive");
    }
    if (profiles.empty()) {
        throw InvalidProfile("at least one class profile is required");
    }
    for (std::size_t c = 0; c < profiles.size(); ++c) {
        if (profiles[c].class_id != static_cast<int>(c)) {
            throw InvalidProfile("profiles must be ordered by class id 0..n-1");
        }
        profiles[c].validate(image_size);
    }

    const int num_classes = static_cast<int>(profiles.size());
    std::vector<PredictionBatch> stream;
    stream.reserve(static_cast<std::size_t>(num_images));

    for (int i = 0; i < num_images; ++i) {
        std::mt19937_64 rng = make_image_engine(seed, static_cast<std::uint64_t>(i));
        PredictionBatch batch;
        batch.image_id = image_id_for(i);
        batch.image_size = image_size;

        for (const ClassProfile& profile : profiles) {
            const int n_tp = sample_poisson(rng, profile.tp_rate);
            const int n_fp = sample_poisson(rng, profile.fp_rate);
            for (int j = 0; j < n_tp + n_fp; ++j) {
                const bool is_tp = j < n_tp;
                Detection det;
                det.conf = is_tp ? profile.tp_conf.sample(rng) : profile.fp_conf.sample(rng);
                det.class_scores.assign(static_cast<std::size_t>(num_classes), 0.0);
                det.class_scores[static_cast<std::size_t>(profile.class_id)] = det.conf;
                det.truth = is_tp ? TruthTag::correct_of(profile.class_id)
                                  : TruthTag::false_positive();

                const double w =
                    profile.box_min + sample_uniform01(rng) * (profile.box_max - profile.box_min);
                const double h =
                    profile.box_min + sample_uniform01(rng) * (profile.box_max - profile.box_min);
                const double x1 = sample_uniform01(rng) * (image_size.width - w);
                const double y1 = sample_uniform01(rng) * (image_size.height - h);
                det.bbox = BBox{x1, y1, x1 + w, y1 + h};
                batch.detections.push_back(std::move(det));
            }
        }
        stream.push_back(std::move(batch));
    }
    return stream;
}

EvalReport evaluate_selection(std::span<const PseudoLabelSet> selected,
                              std::span<const PredictionBatch> stream, int num_classes) {
    if (num_classes < 1) {
        throw RangeError("evaluate_selection: num_classes must be >= 1");
    }
    if (selected.size() != stream.size()) {
        throw StreamMismatch("selection count " + std::to_string(selected.size()) +
                             " does not match stream size " + std::to_string(stream.size()));
    }
    EvalReport report;
    report.per_class.resize(static_cast<std::size_t>(num_classes));

    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (selected[i].image_id != stream[i].image_id) {
            throw StreamMismatch("image id '" + selected[i].image_id + "' does not match '" +
                                 stream[i].image_id + "'");
        }
        for (const Detection& d : stream[i].detections) {
            if (!d.truth.has_value()) {
                throw StreamMismatch("stream detection lacks a truth tag");
            }
            ++report.total_detections;
            if (d.truth->correct()) {
                if (d.truth->class_id < 0 || d.truth->class_id >= num_classes) {
                    throw StreamMismatch("truth class out of range");
                }
                ++report.per_class[static_cast<std::size_t>(d.truth->class_id)].total_correct;
            }
        }
        for (const PseudoLabel& label : selected[i].labels) {
            if (label.assigned_class < 0 || label.assigned_class >= num_classes) {
                throw StreamMismatch("assigned class out of range");
            }
            if (!label.detection.truth.has_value()) {
                throw StreamMismatch("selected label lacks a truth tag");
            }
            ClassMetrics& m = report.per_class[static_cast<std::size_t>(label.assigned_class)];
            ++m.kept;
            if (label.detection.truth->correct() &&
                label.detection.truth->class_id == label.assigned_class) {
                ++m.kept_correct;
            }
        }
    }

    double f1_sum = 0.0;
    int f1_defined = 0;
    for (ClassMetrics& m : report.per_class) {
        report.aggregate.kept += m.kept;
        report.aggregate.kept_correct += m.kept_correct;
        report.aggregate.total_correct += m.total_correct;
        finish_metrics(m);
        if (m.f1.has_value()) {
            f1_sum += *m.f1;
            ++f1_defined;
        }
    }
    finish_metrics(report.aggregate);
    if (f1_defined > 0) {
        report.macro_f1 = f1_sum / f1_defined;
    }
    report.dropped = report.total_detections - report.aggregate.kept;
    report.rng_id = kRngId;
    return report;
}

std::vector<EvalReport> sweep_static_thresholds(std::span<const PredictionBatch> stream,
                                                std::span<const double> thresholds,
                                                int num_classes) {
    std::vector<EvalReport> reports;
    reports.reserve(thresholds.size());
    for (double threshold : thresholds) {
        std::vector<PseudoLabelSet> selected;
        selected.reserve(stream.size());
        for (const PredictionBatch& batch : stream) {
            PseudoLabelSet set;
            set.image_id = batch.image_id;
            for (const Detection& d : batch.detections) {
                const int c = argmax_class(d).first;
                if (d.conf >= threshold) {
                    PseudoLabel label;
                    label.detection = d;
                    label.assigned_class = c;
                    label.one_hot.assign(static_cast<std::size_t>(num_classes), 0.0);
                    label.one_hot[static_cast<std::size_t>(c)] = 1.0;
                    set.labels.push_back(std::move(label));
                }
            }
            selected.push_back(std::move(set));
        }
        reports.push_back(evaluate_selection(selected, stream, num_classes));
    }
    return reports;
}

AdaptiveSelectionResult run_adaptive_selection(std::span<const PredictionBatch> stream,
                                         const ThresholdState& initial) {
    initial.validate();
    ThresholdState state = initial;
    std::vector<PseudoLabelSet> selected;
    selected.reserve(stream.size());
    std::vector<std::vector<double>> trajectory;
    trajectory.reserve(stream.size());

    for (const PredictionBatch& batch : stream) {
        SelectionOutcome step = selection_step(batch, state);
        state = std::move(step.state);
        selected.push_back(std::move(step.labels));
        trajectory.push_back(state.per_class);
    }

    EvalReport report = evaluate_selection(selected, stream, state.num_classes());
    report.trajectory = std::move(trajectory);
    report.final_thresholds = state.per_class;
    return {std::move(report), std::move(state)};
}

}  // namespace xda
