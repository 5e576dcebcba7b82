#include "xda/saliency.hpp"

#include <algorithm>
#include <cmath>

namespace xda {

namespace {

struct WeightedBox {
    BBox box;
    double conf = 0.0;
};

SaliencyMatrix rasterize_boxes(std::span<const WeightedBox> boxes, int stride, int grid_h,
                               int grid_w, RasterizeStats* stats) {
    if (stride <= 0) {
        throw RangeError("rasterize: stride must be positive");
    }
    if (grid_h <= 0 || grid_w <= 0) {
        throw RangeError("rasterize: grid dimensions must be positive");
    }
    SaliencyMatrix m = SaliencyMatrix::zeros(stride, grid_h, grid_w);
    std::size_t skipped = 0;
    const double s = static_cast<double>(stride);
    for (const WeightedBox& wb : boxes) {
        if (!std::isfinite(wb.box.x1) || !std::isfinite(wb.box.y1) ||
            !std::isfinite(wb.box.x2) || !std::isfinite(wb.box.y2) ||
            !std::isfinite(wb.conf)) {
            throw RangeError("rasterize: non-finite box or confidence");
        }
        // Candidate index window around the box, expanded one cell and then
        // decided per cell by the exact center-containment predicate. The
        // window is clamped before the integer cast so far-away boxes cannot
        // overflow; they just cover nothing and count as skipped.
        const int u0 =
            static_cast<int>(std::clamp(std::floor(wb.box.y1 / s - 0.5) - 1.0, 0.0,
                                        static_cast<double>(grid_h - 1)));
        const int u1 =
            static_cast<int>(std::clamp(std::ceil(wb.box.y2 / s - 0.5) + 1.0, 0.0,
                                        static_cast<double>(grid_h - 1)));
        const int v0 =
            static_cast<int>(std::clamp(std::floor(wb.box.x1 / s - 0.5) - 1.0, 0.0,
                                        static_cast<double>(grid_w - 1)));
        const int v1 =
            static_cast<int>(std::clamp(std::ceil(wb.box.x2 / s - 0.5) + 1.0, 0.0,
                                        static_cast<double>(grid_w - 1)));
        bool covered = false;
        for (int u = u0; u <= u1; ++u) {
            const double cy = (u + 0.5) * s;
            if (cy < wb.box.y1 || cy > wb.box.y2) {
                continue;
            }
            for (int v = v0; v <= v1; ++v) {
                const double cx = (v + 0.5) * s;
                if (cx < wb.box.x1 || cx > wb.box.x2) {
                    continue;
                }
                m.at(u, v) = std::max(m.at(u, v), wb.conf);
                covered = true;
            }
        }
        if (!covered) {
            ++skipped;
        }
    }
    if (stats != nullptr) {
        stats->boxes_skipped = skipped;
    }
    return m;
}

}  // namespace

FeatureMap FeatureMap::zeros(int stride, int channels, int height, int width) {
    if (stride <= 0 || channels <= 0 || height <= 0 || width <= 0) {
        throw RangeError("feature map: dimensions must be positive");
    }
    FeatureMap f;
    f.stride = stride;
    f.channels = channels;
    f.height = height;
    f.width = width;
    f.data.assign(static_cast<std::size_t>(channels) * height * width, 0.0);
    return f;
}

SaliencyMatrix SaliencyMatrix::zeros(int stride, int height, int width) {
    if (stride <= 0 || height <= 0 || width <= 0) {
        throw RangeError("saliency matrix: dimensions must be positive");
    }
    SaliencyMatrix m;
    m.stride = stride;
    m.height = height;
    m.width = width;
    m.grid.assign(static_cast<std::size_t>(height) * width, 0.0);
    return m;
}

SaliencyMatrix rasterize_saliency(const PseudoLabelSet& labels, int stride, int grid_h,
                                  int grid_w, RasterizeStats* stats) {
    std::vector<WeightedBox> boxes;
    boxes.reserve(labels.labels.size());
    for (const PseudoLabel& label : labels.labels) {
        boxes.push_back({label.detection.bbox, label.detection.conf});
    }
    return rasterize_boxes(boxes, stride, grid_h, grid_w, stats);
}

SaliencyMatrix saliency_from_ground_truth(std::span<const BBox> boxes, int stride, int grid_h,
                                          int grid_w, RasterizeStats* stats) {
    std::vector<WeightedBox> weighted;
    weighted.reserve(boxes.size());
    for (const BBox& b : boxes) {
        weighted.push_back({b, 1.0});
    }
    return rasterize_boxes(weighted, stride, grid_h, grid_w, stats);
}

FeatureMap reweight_features(const FeatureMap& f, const SaliencyMatrix& m) {
    if (m.stride != f.stride || m.height != f.height || m.width != f.width) {
        throw ShapeMismatch("reweight: saliency grid does not match feature map");
    }
    FeatureMap out = f;
    const std::size_t plane = f.cell_count();
    for (int c = 0; c < f.channels; ++c) {
        double* dst = out.data.data() + static_cast<std::size_t>(c) * plane;
        const double* src = f.data.data() + static_cast<std::size_t>(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            dst[i] = m.grid[i] * src[i] + src[i];
        }
    }
    return out;
}

FeatureMap reweight_backward(const FeatureMap& grad_reweighted, const SaliencyMatrix& m) {
    if (m.stride != grad_reweighted.stride || m.height != grad_reweighted.height ||
        m.width != grad_reweighted.width) {
        throw ShapeMismatch("reweight backward: saliency grid does not match gradient");
    }
    FeatureMap out = grad_reweighted;
    const std::size_t plane = grad_reweighted.cell_count();
    for (int c = 0; c < grad_reweighted.channels; ++c) {
        double* dst = out.data.data() + static_cast<std::size_t>(c) * plane;
        const double* src = grad_reweighted.data.data() + static_cast<std::size_t>(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            dst[i] = (1.0 + m.grid[i]) * src[i];
        }
    }
    return out;
}

}  // namespace xda
