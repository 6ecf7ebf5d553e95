#pragma once

#include "hspi/classifier.hpp"
#include "hspi/spi.hpp"

namespace hspi {

struct OcclusionResult {
    Tensor saliency;  // H x W in [0,1]
    bool degenerate = false;
};

// Occlusion saliency: per grid cell, the drop in the predicted-class logit
// when that cell's pixel footprint is zeroed, min-max normalized over cells.
inline OcclusionResult occlusion_saliency(const Classifier& model, const Tensor& x0,
                                          int grid) {
    int h = x0.dim(0), w = x0.dim(1);
    ForwardCtx ctx;
    Tensor base = forward_logits(model, x0, ctx);
    int cls = base.data[kClassDiseased] > base.data[kClassNormal] ? kClassDiseased
                                                                  : kClassNormal;
    Grid drops(grid, grid);
    for (int r = 0; r < grid; ++r)
        for (int c = 0; c < grid; ++c) {
            Grid e = one_hot_invert<float>(r, c, grid, grid);
            Tensor occluded = apply_mask(x0, upsample_nearest(e, h, w));
            Tensor logits = forward_logits(model, occluded, ctx);
            drops.at(r, c) = base.data[std::size_t(cls)] - logits.data[std::size_t(cls)];
        }

    float lo = drops.v[0], hi = drops.v[0];
    for (float v : drops.v) { lo = std::min(lo, v); hi = std::max(hi, v); }

    OcclusionResult out;
    if (hi - lo <= 0.0f) {
        out.saliency = Tensor({h, w});
        out.degenerate = true;
        return out;
    }
    for (float& v : drops.v) v = (v - lo) / (hi - lo);
    out.saliency = upsample_nearest(drops, h, w);
    return out;
}

}  // namespace hspi
