// Brute-force reference implementations used to check the library. These
// deliberately take the slow, obvious path and never call into the code they
// verify.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "xda/detection.hpp"

namespace oracles {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (static_cast<double>(rng() >> 11) * 0x1.0p-53) * (hi - lo);
}

// Linear scan argmax with lowest-index tie handling.
inline std::pair<int, double> argmax_scan(const std::vector<double>& scores) {
    int best = 0;
    double best_value = scores.at(0);
    for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
        if (scores[i] > best_value) {
            best = i;
            best_value = scores[i];
        }
    }
    return {best, best_value};
}

// O(n*M) histogram: for every value, scan all intervals ((m-1)/M, m/M] and
// count the one it falls into; 0 belongs to the first interval.
inline std::vector<std::int64_t> histogram_scan(const std::vector<double>& values, int bins) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(bins), 0);
    for (double v : values) {
        for (int m = 1; m <= bins; ++m) {
            const double lo = static_cast<double>(m - 1) / bins;
            const double hi = static_cast<double>(m) / bins;
            const bool in_bin = (v > lo && v <= hi) || (m == 1 && v == 0.0);
            if (in_bin) {
                counts[static_cast<std::size_t>(m - 1)] += 1;
                break;
            }
        }
    }
    return counts;
}

// Mode of a scanned histogram with ties resolved toward the higher bin;
// returns the right endpoint m/M, or nothing for an all-zero histogram.
inline std::optional<double> mode_endpoint_scan(const std::vector<std::int64_t>& counts) {
    int best = 0;
    std::int64_t best_count = 0;
    for (int m = 1; m <= static_cast<int>(counts.size()); ++m) {
        const std::int64_t c = counts[static_cast<std::size_t>(m - 1)];
        if (c > 0 && c >= best_count) {
            best = m;
            best_count = c;
        }
    }
    if (best == 0) {
        return std::nullopt;
    }
    return static_cast<double>(best) / static_cast<double>(counts.size());
}

// Central finite difference of a scalar function w.r.t. one double.
inline double central_diff(const std::function<double()>& eval, double& param,
                           double step = 1e-6) {
    const double saved = param;
    param = saved + step;
    const double up = eval();
    param = saved - step;
    const double down = eval();
    param = saved;
    return (up - down) / (2.0 * step);
}

// Relative-error gradient comparison with an absolute guard for vanishing
// gradients.
inline bool grad_close(double analytic, double reference, double rel_tol = 1e-5,
                       double zero_guard = 1e-8) {
    const double diff = std::abs(analytic - reference);
    const double denom = std::max(std::abs(analytic), std::abs(reference));
    if (denom < zero_guard) {
        return diff < zero_guard;
    }
    return diff / denom < rel_tol;
}

// Confusion counts per class from scratch: selections are (image, class,
// detection index) against a truth-tagged stream.
struct ConfusionCounts {
    std::vector<std::int64_t> kept;
    std::vector<std::int64_t> kept_correct;
    std::vector<std::int64_t> total_correct;
};

inline ConfusionCounts recount(
    const std::vector<xda::PredictionBatch>& stream,
    const std::vector<std::vector<std::pair<std::size_t, int>>>& picks,  // per image: (det, class)
    int num_classes) {
    ConfusionCounts counts;
    counts.kept.assign(static_cast<std::size_t>(num_classes), 0);
    counts.kept_correct.assign(static_cast<std::size_t>(num_classes), 0);
    counts.total_correct.assign(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < stream.size(); ++i) {
        for (const xda::Detection& d : stream[i].detections) {
            if (d.truth.has_value() && d.truth->correct()) {
                counts.total_correct[static_cast<std::size_t>(d.truth->class_id)] += 1;
            }
        }
        for (const auto& [det_index, assigned] : picks[i]) {
            counts.kept[static_cast<std::size_t>(assigned)] += 1;
            const xda::Detection& d = stream[i].detections[det_index];
            if (d.truth.has_value() && d.truth->correct() && d.truth->class_id == assigned) {
                counts.kept_correct[static_cast<std::size_t>(assigned)] += 1;
            }
        }
    }
    return counts;
}

// FNV-1a over a byte string, for cheap file fingerprints in tests.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char b : bytes) {
        hash ^= b;
        hash *= 1099511628211ull;
    }
    return hash;
}

}  // namespace oracles
