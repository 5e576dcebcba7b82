#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xda/selection.hpp"
#include "xda/detection.hpp"

namespace xda {

// Dense C x H x W activation grid at a given stride. data is row-major with
// channel outermost: index (c, u, v) -> c*H*W + u*W + v, u indexing rows.
struct FeatureMap {
    int stride = 1;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    static FeatureMap zeros(int stride, int channels, int height, int width);

    double at(int c, int u, int v) const {
        return data[(static_cast<std::size_t>(c) * height + u) * width + v];
    }
    double& at(int c, int u, int v) {
        return data[(static_cast<std::size_t>(c) * height + u) * width + v];
    }

    std::size_t cell_count() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
};

// H x W object-presence grid at a given stride; entries stay in [0,1].
struct SaliencyMatrix {
    int stride = 1;
    int height = 0;
    int width = 0;
    std::vector<double> grid;

    static SaliencyMatrix zeros(int stride, int height, int width);

    double at(int u, int v) const { return grid[static_cast<std::size_t>(u) * width + v]; }
    double& at(int u, int v) { return grid[static_cast<std::size_t>(u) * width + v]; }
};

// Boxes that shrink below one cell at the target stride are skipped, counted
// here rather than failing the rasterization.
struct RasterizeStats {
    std::size_t boxes_skipped = 0;
};

// Paints each label's confidence over the grid cells whose pixel centers fall
// inside its box; overlaps keep the maximum confidence, uncovered cells stay
// 0. Cell (u,v) has its center at ((v+0.5)*stride, (u+0.5)*stride) pixels.
SaliencyMatrix rasterize_saliency(const PseudoLabelSet& labels, int stride, int grid_h,
                                  int grid_w, RasterizeStats* stats = nullptr);

// Same rasterization with confidence pinned to 1 inside every box, for
// images whose boxes come from ground-truth annotations.
SaliencyMatrix saliency_from_ground_truth(std::span<const BBox> boxes, int stride, int grid_h,
                                          int grid_w, RasterizeStats* stats = nullptr);

// out[c,u,v] = m[u,v] * f[c,u,v] + f[c,u,v]; the matrix broadcasts across
// channels. m == 0 reproduces f bit-for-bit, m == 1 doubles it.
FeatureMap reweight_features(const FeatureMap& f, const SaliencyMatrix& m);

// Pulls a gradient w.r.t. the reweighted map back to the plain map:
// out[c,u,v] = (1 + m[u,v]) * grad[c,u,v].
FeatureMap reweight_backward(const FeatureMap& grad_reweighted, const SaliencyMatrix& m);

}  // namespace xda
