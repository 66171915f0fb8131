#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "splatkit/grid.hpp"
#include "splatkit/metrics.hpp"
#include "splatkit/parallel.hpp"

namespace splatkit {

struct ConvLayer {
    int out_ch = 0;
    int in_ch = 0;
    std::vector<float> kernel;  // out_ch * in_ch * 3 * 3, row-major per tap
    std::vector<float> bias;    // out_ch
    std::vector<float> prelu;   // out_ch slopes; empty on the final layer
};

// The loadable guided upsampler: four 3x3 convolutions with PReLU between
// them. Layer 0 consumes [flow(2), guide0(C), guide1(C), psi_photo, psi_flow,
// psi_varia] = 2 + 2C + 3 channels; the final layer emits the 2-channel flow
// residual. Hidden widths are whatever the weight file says.
struct UpsamplerWeights {
    std::vector<ConvLayer> layers;

    void validate() const {
        if (layers.size() != 4)
            throw IoError("upsampler weights: expected 4 layers, got " +
                          std::to_string(layers.size()));
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const ConvLayer& layer = layers[l];
            const std::string where = "upsampler weights: layer " + std::to_string(l);
            if (layer.out_ch < 1 || layer.in_ch < 1)
                throw IoError(where + ": nonpositive channel count");
            if (layer.kernel.size() !=
                static_cast<std::size_t>(layer.out_ch) * layer.in_ch * 9)
                throw IoError(where + ": kernel size mismatch");
            if (layer.bias.size() != static_cast<std::size_t>(layer.out_ch))
                throw IoError(where + ": bias size mismatch");
            const bool wants_prelu = l + 1 < layers.size();
            if (wants_prelu && layer.prelu.size() != static_cast<std::size_t>(layer.out_ch))
                throw IoError(where + ": missing PReLU slopes");
            if (!wants_prelu && !layer.prelu.empty())
                throw IoError(where + ": final layer must not carry PReLU slopes");
            if (l > 0 && layer.in_ch != layers[l - 1].out_ch)
                throw IoError(where + ": input channels " + std::to_string(layer.in_ch) +
                              " do not match layer " + std::to_string(l - 1) + " output " +
                              std::to_string(layers[l - 1].out_ch));
        }
        if (layers.back().out_ch != 2)
            throw IoError("upsampler weights: layer 3 must output 2 channels, got " +
                          std::to_string(layers.back().out_ch));
        const int in0 = layers.front().in_ch;
        if (in0 < 7 || (in0 - 5) % 2 != 0)
            throw IoError("upsampler weights: layer 0 input channels " + std::to_string(in0) +
                          " do not decompose as 2 + 2C + 3");
    }

    // Image channel count the weights were built for.
    int guide_channels() const { return (layers.front().in_ch - 5) / 2; }

    // All-zero weights of a given hidden width: the identity upsampler, whose
    // residual vanishes and which therefore reproduces the bilinear baseline.
    static UpsamplerWeights zeros(int image_channels, int hidden = 16) {
        UpsamplerWeights w;
        const int in0 = 2 + 2 * image_channels + 3;
        const int chain[5] = {in0, hidden, hidden, hidden, 2};
        for (int l = 0; l < 4; ++l) {
            ConvLayer layer;
            layer.in_ch = chain[l];
            layer.out_ch = chain[l + 1];
            layer.kernel.assign(static_cast<std::size_t>(layer.out_ch) * layer.in_ch * 9, 0.0f);
            layer.bias.assign(layer.out_ch, 0.0f);
            if (l < 3) layer.prelu.assign(layer.out_ch, 0.25f);
            w.layers.push_back(std::move(layer));
        }
        return w;
    }
};

// Doubles the spatial resolution of a flow field with bilinear interpolation
// and doubles the displacement values so they stay in output-resolution
// pixels. Output pixel X samples input position (X + 0.5)/2 - 0.5 (pixel-area
// convention, matching downsample_2x), clamped to the border.
inline FlowField bilinear_upsample_flow(const FlowField& flow, int threads = 1) {
    require_channels(flow, 2, "bilinear_upsample_flow");
    const int h = flow.height(), w = flow.width();
    const int oh = 2 * h, ow = 2 * w;
    FlowField out(oh, ow, 2);
    parallel_rows(oh, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float sy = std::min(std::max((y + 0.5f) * 0.5f - 0.5f, 0.0f),
                                      static_cast<float>(h - 1));
            const int y0 = static_cast<int>(std::floor(sy));
            const int y1 = std::min(y0 + 1, h - 1);
            const float fy = sy - y0;
            const float* r0 = flow.row(y0);
            const float* r1 = flow.row(y1);
            float* o = out.row(y);
            for (int x = 0; x < ow; ++x) {
                const float sx = std::min(std::max((x + 0.5f) * 0.5f - 0.5f, 0.0f),
                                          static_cast<float>(w - 1));
                const int x0 = static_cast<int>(std::floor(sx));
                const int x1 = std::min(x0 + 1, w - 1);
                const float fx = sx - x0;
                for (int c = 0; c < 2; ++c) {
                    const float top = (1.0f - fx) * r0[2 * x0 + c] + fx * r0[2 * x1 + c];
                    const float bot = (1.0f - fx) * r1[2 * x0 + c] + fx * r1[2 * x1 + c];
                    o[2 * x + c] = 2.0f * ((1.0f - fy) * top + fy * bot);
                }
            }
        }
    });
    return out;
}

// Stride-1 3x3 convolution with clamp-to-edge padding plus bias.
inline Grid conv3x3(const Grid& input, const ConvLayer& layer, int threads = 1) {
    if (layer.in_ch != input.channels())
        throw ShapeError("conv3x3: layer expects " + std::to_string(layer.in_ch) +
                         " input channels, got " + std::to_string(input.channels()));
    const int h = input.height(), w = input.width();
    const int ic = layer.in_ch, oc = layer.out_ch;
    Grid out(h, w, oc);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* rows[3] = {input.row(std::max(y - 1, 0)), input.row(y),
                                    input.row(std::min(y + 1, h - 1))};
            float* o = out.row(y);
            for (int x = 0; x < w; ++x) {
                const int xs[3] = {std::max(x - 1, 0), x, std::min(x + 1, w - 1)};
                for (int co = 0; co < oc; ++co) {
                    float acc = layer.bias[co];
                    const float* k = layer.kernel.data() + static_cast<std::size_t>(co) * ic * 9;
                    for (int ci = 0; ci < ic; ++ci) {
                        for (int j = 0; j < 3; ++j) {
                            const float* r = rows[j];
                            acc += k[ci * 9 + j * 3 + 0] * r[xs[0] * ic + ci] +
                                   k[ci * 9 + j * 3 + 1] * r[xs[1] * ic + ci] +
                                   k[ci * 9 + j * 3 + 2] * r[xs[2] * ic + ci];
                        }
                    }
                    o[x * oc + co] = acc;
                }
            }
        }
    });
    return out;
}

// Per-channel parametric ReLU: x if x >= 0 else slope_c * x.
inline Grid prelu(const Grid& g, const std::vector<float>& slopes, int threads = 1) {
    if (slopes.size() != static_cast<std::size_t>(g.channels()))
        throw ShapeError("prelu: " + std::to_string(slopes.size()) + " slopes for " +
                         std::to_string(g.channels()) + " channels");
    const int h = g.height(), w = g.width(), ch = g.channels();
    Grid out(h, w, ch);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* in = g.row(y);
            float* o = out.row(y);
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < ch; ++c) {
                    const float v = in[x * ch + c];
                    o[x * ch + c] = v >= 0.0f ? v : slopes[c] * v;
                }
        }
    });
    return out;
}

struct FlowPair {
    FlowField fwd;  // F_0->1
    FlowField bwd;  // F_1->0
};

namespace detail {

inline Grid upsampler_residual(const FlowField& up_flow, const FlowField& up_other,
                               const Grid& guide_src, const Grid& guide_dst,
                               const UpsamplerWeights& weights, int threads) {
    const int h = up_flow.height(), w = up_flow.width();
    const int gc = guide_src.channels();
    Grid pp = psi_photo(guide_src, guide_dst, up_flow, threads);
    Grid pf = psi_flow(up_flow, up_other, threads);
    Grid pv = psi_varia(up_flow, threads);

    const int fc = 2 + 2 * gc + 3;
    Grid features(h, w, fc);
    for (int y = 0; y < h; ++y) {
        float* o = features.row(y);
        const float* fl = up_flow.row(y);
        const float* g0 = guide_src.row(y);
        const float* g1 = guide_dst.row(y);
        const float* mp = pp.row(y);
        const float* mf = pf.row(y);
        const float* mv = pv.row(y);
        for (int x = 0; x < w; ++x) {
            float* px = o + static_cast<std::size_t>(x) * fc;
            px[0] = fl[2 * x + 0];
            px[1] = fl[2 * x + 1];
            for (int c = 0; c < gc; ++c) px[2 + c] = g0[x * gc + c];
            for (int c = 0; c < gc; ++c) px[2 + gc + c] = g1[x * gc + c];
            px[2 + 2 * gc + 0] = mp[x];
            px[2 + 2 * gc + 1] = mf[x];
            px[2 + 2 * gc + 2] = mv[x];
        }
    }

    Grid x = std::move(features);
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        x = conv3x3(x, weights.layers[l], threads);
        if (!weights.layers[l].prelu.empty()) x = prelu(x, weights.layers[l].prelu, threads);
    }
    return x;
}

}  // namespace detail

// One guided 2x upsampling step for a flow pair. Both directions are
// bilinearly upsampled, then a shared 4-layer network predicts a residual
// correction per direction from the upsampled flow, the two high-resolution
// guide frames, and the three reliability measures. With all-zero weights the
// output equals the bilinear baseline exactly.
inline FlowPair guided_upsample_step(const FlowField& f01, const FlowField& f10,
                                     const Grid& i0_hi, const Grid& i1_hi,
                                     const UpsamplerWeights& weights, int threads = 1) {
    require_same_shape(f01, f10, "guided_upsample_step");
    require_channels(f01, 2, "guided_upsample_step");
    require_same_shape(i0_hi, i1_hi, "guided_upsample_step");
    if (i0_hi.height() != 2 * f01.height() || i0_hi.width() != 2 * f01.width())
        throw ShapeError("guided_upsample_step: guides must be exactly 2x the flow resolution");
    weights.validate();
    if (weights.guide_channels() != i0_hi.channels())
        throw ShapeError("guided_upsample_step: weights built for " +
                         std::to_string(weights.guide_channels()) + "-channel guides, got " +
                         std::to_string(i0_hi.channels()));

    FlowField up_f = bilinear_upsample_flow(f01, threads);
    FlowField up_b = bilinear_upsample_flow(f10, threads);
    Grid res_f = detail::upsampler_residual(up_f, up_b, i0_hi, i1_hi, weights, threads);
    Grid res_b = detail::upsampler_residual(up_b, up_f, i1_hi, i0_hi, weights, threads);

    for (std::size_t i = 0; i < up_f.size(); ++i) up_f.data()[i] += res_f.data()[i];
    for (std::size_t i = 0; i < up_b.size(); ++i) up_b.data()[i] += res_b.data()[i];
    return {std::move(up_f), std::move(up_b)};
}

// Runs the guided step `iterations` times, coarsest first. The guide pyramid
// is ordered fine-to-coarse: pyramid[0] holds the full-resolution frames,
// pyramid[1] the half-resolution ones, and so on; level k must be exactly
// 2^(iterations - k) times the flow resolution.
inline FlowPair iterative_upsample(const FlowField& f01, const FlowField& f10,
                                   const std::vector<std::pair<Grid, Grid>>& guide_pyramid,
                                   int iterations, const UpsamplerWeights& weights,
                                   int threads = 1) {
    if (iterations != 1 && iterations != 2)
        throw std::invalid_argument("iterative_upsample: iterations must be 1 or 2");
    if (guide_pyramid.size() != static_cast<std::size_t>(iterations))
        throw ShapeError("iterative_upsample: need " + std::to_string(iterations) +
                         " pyramid levels, got " + std::to_string(guide_pyramid.size()));
    FlowPair pair{f01, f10};
    for (int step = 0; step < iterations; ++step) {
        const auto& guides = guide_pyramid[iterations - 1 - step];
        pair = guided_upsample_step(pair.fwd, pair.bwd, guides.first, guides.second, weights,
                                    threads);
    }
    return pair;
}

}  // namespace splatkit
