#pragma once

#include <cmath>
#include <utility>

#include "splatkit/grid.hpp"
#include "splatkit/parallel.hpp"

namespace splatkit {

// Backward warping (gather): output[p] is the bilinear sample of src at
// p + flow[p]. Sample positions outside [0, w-1] x [0, h-1] are clamped to
// the border and flagged 0 in the mask so downstream stages can discount
// them; clamping keeps border values usable instead of injecting zeros.
inline std::pair<Grid, Mask> backward_warp(const Grid& src, const FlowField& flow,
                                           int threads = 1) {
    require_same_extent(src, flow, "backward_warp");
    require_channels(flow, 2, "backward_warp");
    const int h = src.height();
    const int w = src.width();
    const int ch = src.channels();
    Grid out(h, w, ch);
    Mask mask(h, w, 1);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* frow = flow.row(y);
            float* orow = out.row(y);
            float* mrow = mask.row(y);
            for (int x = 0; x < w; ++x) {
                float sx = static_cast<float>(x) + frow[2 * x + 0];
                float sy = static_cast<float>(y) + frow[2 * x + 1];
                const bool inside =
                    sx >= 0.0f && sx <= static_cast<float>(w - 1) &&
                    sy >= 0.0f && sy <= static_cast<float>(h - 1);
                if (!inside) {
                    sx = std::min(std::max(sx, 0.0f), static_cast<float>(w - 1));
                    sy = std::min(std::max(sy, 0.0f), static_cast<float>(h - 1));
                }
                const int x0 = static_cast<int>(std::floor(sx));
                const int y0 = static_cast<int>(std::floor(sy));
                const int x1 = std::min(x0 + 1, w - 1);
                const int y1 = std::min(y0 + 1, h - 1);
                const float fx = sx - static_cast<float>(x0);
                const float fy = sy - static_cast<float>(y0);
                const float w00 = (1.0f - fx) * (1.0f - fy);
                const float w10 = fx * (1.0f - fy);
                const float w01 = (1.0f - fx) * fy;
                const float w11 = fx * fy;
                const float* r0 = src.row(y0);
                const float* r1 = src.row(y1);
                for (int c = 0; c < ch; ++c) {
                    orow[x * ch + c] = w00 * r0[x0 * ch + c] + w10 * r0[x1 * ch + c] +
                                       w01 * r1[x0 * ch + c] + w11 * r1[x1 * ch + c];
                }
                mrow[x] = inside ? 1.0f : 0.0f;
            }
        }
    });
    return {std::move(out), std::move(mask)};
}

// Plain per-pixel double-precision gather with the same contract as
// backward_warp. Test oracle for the optimized path; keep it boring.
inline Grid reference_backward_warp(const Grid& src, const FlowField& flow) {
    require_same_extent(src, flow, "reference_backward_warp");
    require_channels(flow, 2, "reference_backward_warp");
    const int h = src.height();
    const int w = src.width();
    const int ch = src.channels();
    Grid out(h, w, ch);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sx = x + static_cast<double>(flow.at(y, x, 0));
            double sy = y + static_cast<double>(flow.at(y, x, 1));
            sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
            sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - x0;
            const double fy = sy - y0;
            for (int c = 0; c < ch; ++c) {
                const double v =
                    (1.0 - fx) * (1.0 - fy) * src.at(y0, x0, c) +
                    fx * (1.0 - fy) * src.at(y0, x1, c) +
                    (1.0 - fx) * fy * src.at(y1, x0, c) +
                    fx * fy * src.at(y1, x1, c);
                out.at(y, x, c) = static_cast<float>(v);
            }
        }
    }
    return out;
}

}  // namespace splatkit
