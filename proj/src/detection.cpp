#include "xda/detection.hpp"

#include <algorithm>
#include <cmath>

namespace xda {

Detection validate_detection(const Detection& d, int num_classes, ImageSize image_size) {
    if (num_classes <= 0) {
        throw MalformedDetection("num_classes must be positive");
    }
    if (image_size.width <= 0 || image_size.height <= 0) {
        throw MalformedDetection("image_size: components must be positive");
    }
    if (!std::isfinite(d.bbox.x1) || !std::isfinite(d.bbox.y1) || !std::isfinite(d.bbox.x2) ||
        !std::isfinite(d.bbox.y2)) {
        throw MalformedDetection("bbox: non-finite coordinate");
    }
    if (!std::isfinite(d.conf) || d.conf < 0.0 || d.conf > 1.0) {
        throw MalformedDetection("conf: value outside [0,1]");
    }
    if (static_cast<int>(d.class_scores.size()) != num_classes) {
        throw MalformedDetection("class_scores: expected " + std::to_string(num_classes) +
                                 " entries, got " + std::to_string(d.class_scores.size()));
    }
    for (std::size_t c = 0; c < d.class_scores.size(); ++c) {
        const double s = d.class_scores[c];
        if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
            throw MalformedDetection("class_scores[" + std::to_string(c) +
                                     "]: value outside [0,1]");
        }
    }

    Detection out = d;
    const double w = static_cast<double>(image_size.width);
    const double h = static_cast<double>(image_size.height);
    out.bbox.x1 = std::clamp(d.bbox.x1, 0.0, w);
    out.bbox.x2 = std::clamp(d.bbox.x2, 0.0, w);
    out.bbox.y1 = std::clamp(d.bbox.y1, 0.0, h);
    out.bbox.y2 = std::clamp(d.bbox.y2, 0.0, h);
    if (!(out.bbox.x1 < out.bbox.x2) || !(out.bbox.y1 < out.bbox.y2)) {
        throw MalformedDetection("bbox: zero area after clamping");
    }
    return out;
}

PredictionBatch validate_batch(const PredictionBatch& batch, int num_classes) {
    if (batch.image_size.width <= 0 || batch.image_size.height <= 0) {
        throw MalformedDetection("image_size: components must be positive");
    }
    PredictionBatch out;
    out.image_id = batch.image_id;
    out.image_size = batch.image_size;
    out.detections.reserve(batch.detections.size());
    for (const Detection& d : batch.detections) {
        out.detections.push_back(validate_detection(d, num_classes, batch.image_size));
    }
    return out;
}

std::pair<int, double> argmax_class(const Detection& d) {
    if (d.class_scores.empty()) {
        throw MalformedDetection("argmax_class: empty class_scores");
    }
    int best = 0;
    for (int c = 1; c < static_cast<int>(d.class_scores.size()); ++c) {
        if (d.class_scores[c] > d.class_scores[best]) {
            best = c;
        }
    }
    return {best, d.class_scores[best]};
}

double iou(const BBox& a, const BBox& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) {
        return 0.0;
    }
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace xda
