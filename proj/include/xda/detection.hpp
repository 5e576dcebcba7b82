#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xda/errors.hpp"

namespace xda {

// Axis-aligned box in original-image pixel coordinates; valid boxes have
// x1 < x2, y1 < y2 and non-negative finite coordinates.
struct BBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
};

// Generator-side ground truth carried by synthetic detections. class_id >= 0
// marks a correct detection of that class; negative marks a false positive.
// Real detector dumps never carry this.
struct TruthTag {
    int class_id = -1;

    bool correct() const { return class_id >= 0; }

    static TruthTag correct_of(int class_id) { return TruthTag{class_id}; }
    static TruthTag false_positive() { return TruthTag{-1}; }
};

struct Detection {
    BBox bbox;
    std::vector<double> class_scores;  // one score per class, each in [0,1]
    double conf = 0.0;                 // joint confidence; the selector thresholds this
    std::optional<TruthTag> truth;
};

struct ImageSize {
    int width = 0;
    int height = 0;
};

// All predictions for one image, in detector output order.
struct PredictionBatch {
    std::string image_id;
    ImageSize image_size;
    std::vector<Detection> detections;
};

// Returns a copy with the box clamped to image bounds. Boxes overshooting the
// image are clamped, not rejected; rejection happens only for non-finite
// values, out-of-range confidences, a wrong score-vector length, or zero area
// after clamping. Idempotent on its own output.
Detection validate_detection(const Detection& d, int num_classes, ImageSize image_size);

// validate_detection applied to every detection of a batch.
PredictionBatch validate_batch(const PredictionBatch& batch, int num_classes);

// Index and value of the highest class score; ties resolve to the lowest
// index so the result is independent of storage order.
std::pair<int, double> argmax_class(const Detection& d);

// Intersection over union of two valid boxes; 0 when disjoint.
double iou(const BBox& a, const BBox& b);

}  // namespace xda
