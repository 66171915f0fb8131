#pragma once

#include <cmath>

#include "splatkit/grid.hpp"
#include "splatkit/parallel.hpp"
#include "splatkit/warp.hpp"

namespace splatkit {

// The six tuneable weights combining the reliability measures into the
// splatting metric (collision resolution) and the merging metric (blending
// the two warped frames). All default to 1.
struct MetricParams {
    float splat_photo = 1.0f;
    float splat_flow = 1.0f;
    float splat_varia = 1.0f;
    float merge_photo = 1.0f;
    float merge_flow = 1.0f;
    float merge_varia = 1.0f;
};

// Per-channel 3x3 binomial blur, separable (1,2,1)/4 per axis, clamp-to-edge.
inline Grid gaussian_blur3(const Grid& g, int threads = 1) {
    const int h = g.height(), w = g.width(), ch = g.channels();
    Grid tmp(h, w, ch);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* in = g.row(y);
            float* out = tmp.row(y);
            for (int x = 0; x < w; ++x) {
                const int xm = std::max(x - 1, 0);
                const int xp = std::min(x + 1, w - 1);
                for (int c = 0; c < ch; ++c) {
                    out[x * ch + c] = 0.25f * in[xm * ch + c] + 0.5f * in[x * ch + c] +
                                      0.25f * in[xp * ch + c];
                }
            }
        }
    });
    Grid out(h, w, ch);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* rm = tmp.row(std::max(y - 1, 0));
            const float* r0 = tmp.row(y);
            const float* rp = tmp.row(std::min(y + 1, h - 1));
            float* o = out.row(y);
            for (int i = 0; i < w * ch; ++i) o[i] = 0.25f * rm[i] + 0.5f * r0[i] + 0.25f * rp[i];
        }
    });
    return out;
}

// Photometric consistency: per-pixel L2 norm across color channels of
// I0 - backward_warp(I1, F01). Border samples are clamped, not zeroed, so the
// measure is not poisoned at the frame edge.
inline Grid psi_photo(const Grid& i0, const Grid& i1, const FlowField& f01, int threads = 1) {
    require_same_shape(i0, i1, "psi_photo");
    require_same_extent(i0, f01, "psi_photo");
    Grid warped = backward_warp(i1, f01, threads).first;
    const int h = i0.height(), w = i0.width(), ch = i0.channels();
    Grid out(h, w, 1);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* a = i0.row(y);
            const float* b = warped.row(y);
            float* o = out.row(y);
            for (int x = 0; x < w; ++x) {
                float acc = 0.0f;
                for (int c = 0; c < ch; ++c) {
                    const float d = a[x * ch + c] - b[x * ch + c];
                    acc += d * d;
                }
                o[x] = std::sqrt(acc);
            }
        }
    });
    return out;
}

// Forward-backward flow consistency: per-pixel L2 norm of
// F01 + backward_warp(F10, F01). Zero where the flow of a pixel mapped to the
// target maps straight back to the source.
inline Grid psi_flow(const FlowField& f01, const FlowField& f10, int threads = 1) {
    require_same_shape(f01, f10, "psi_flow");
    require_channels(f01, 2, "psi_flow");
    Grid warped = backward_warp(f10, f01, threads).first;
    const int h = f01.height(), w = f01.width();
    Grid out(h, w, 1);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* a = f01.row(y);
            const float* b = warped.row(y);
            float* o = out.row(y);
            for (int x = 0; x < w; ++x) {
                const float du = a[2 * x + 0] + b[2 * x + 0];
                const float dv = a[2 * x + 1] + b[2 * x + 1];
                o[x] = std::sqrt(du * du + dv * dv);
            }
        }
    });
    return out;
}

// Local flow variance: L2 norm over the two flow channels of
// sqrt(G(F^2) - G(F)^2) with G the 3x3 Gaussian. The per-channel variance is
// clamped at zero first; floating-point cancellation pushes it to ~-1e-7 in
// flat regions. High along motion boundaries, zero on locally constant flow.
inline Grid psi_varia(const FlowField& f01, int threads = 1) {
    require_channels(f01, 2, "psi_varia");
    const int h = f01.height(), w = f01.width();
    Grid sq(h, w, 2);
    for (std::size_t i = 0; i < f01.size(); ++i) sq.data()[i] = f01.data()[i] * f01.data()[i];
    Grid gm = gaussian_blur3(f01, threads);
    Grid gs = gaussian_blur3(sq, threads);
    Grid out(h, w, 1);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* m = gm.row(y);
            const float* s = gs.row(y);
            float* o = out.row(y);
            for (int x = 0; x < w; ++x) {
                const float vu = std::max(0.0f, s[2 * x + 0] - m[2 * x + 0] * m[2 * x + 0]);
                const float vv = std::max(0.0f, s[2 * x + 1] - m[2 * x + 1] * m[2 * x + 1]);
                o[x] = std::sqrt(vu + vv);
            }
        }
    });
    return out;
}

// Combines the three measures into one reliability metric:
// 1/(1 + a_p psi_p) + 1/(1 + a_f psi_f) + 1/(1 + a_v psi_v), in (0, 3] for
// nonnegative inputs and strictly decreasing in each measure.
inline Grid combine(const Grid& psi_p, const Grid& psi_f, const Grid& psi_v, float alpha_p,
                    float alpha_f, float alpha_v, int threads = 1) {
    require_same_shape(psi_p, psi_f, "combine");
    require_same_shape(psi_p, psi_v, "combine");
    require_channels(psi_p, 1, "combine");
    const int h = psi_p.height(), w = psi_p.width();
    Grid out(h, w, 1);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* p = psi_p.row(y);
            const float* f = psi_f.row(y);
            const float* v = psi_v.row(y);
            float* o = out.row(y);
            for (int x = 0; x < w; ++x) {
                o[x] = 1.0f / (1.0f + alpha_p * p[x]) + 1.0f / (1.0f + alpha_f * f[x]) +
                       1.0f / (1.0f + alpha_v * v[x]);
            }
        }
    });
    return out;
}

}  // namespace splatkit
