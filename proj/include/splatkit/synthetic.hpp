#pragma once

#include <cmath>

#include "splatkit/grid.hpp"

namespace splatkit {

// Analytic test scenes: every scene provides frames at arbitrary t in closed
// form together with the exact inter-frame flows, so synthesis output can be
// scored against ground truth without any estimation in the loop.

namespace detail {

constexpr float kTwoPi = 6.28318530717958647692f;

// Smooth periodic texture with period (w, h); range stays inside [0, 1].
inline float periodic_texture(float x, float y, int c, int w, int h) {
    const float fx = x / static_cast<float>(w);
    const float fy = y / static_cast<float>(h);
    const float phase = 1.7f * static_cast<float>(c);
    return 0.5f + 0.18f * std::sin(kTwoPi * 3.0f * fx + phase) +
           0.18f * std::sin(kTwoPi * 2.0f * fy + 0.6f * phase + 0.9f) +
           0.14f * std::sin(kTwoPi * (5.0f * fx + 7.0f * fy) + 0.3f * phase + 2.3f);
}

// Smooth aperiodic texture for scenes that never wrap.
inline float smooth_texture(float x, float y, int c) {
    const float phase = 2.1f * static_cast<float>(c);
    return 0.5f + 0.17f * std::sin(0.11f * x + 0.5f * phase + 0.7f) +
           0.17f * std::sin(0.073f * y + 0.3f * phase + 1.9f) +
           0.16f * std::sin(0.041f * (x + 1.6f * y) + phase);
}

// Linear edge coverage: 1 well inside, 0 well outside, ramping over
// [-feather, feather] around distance == half.
inline float axis_coverage(float coord, float center, float half, float feather) {
    const float d = std::fabs(coord - center);
    return std::min(std::max((half + feather - d) / (2.0f * feather), 0.0f), 1.0f);
}

}  // namespace detail

// Whole frame translates by (dx, dy) per unit time over a periodic texture,
// so the constant flow is exact everywhere and frames never reveal content.
struct TranslateScene {
    int height = 128;
    int width = 128;
    float dx = 8.0f;
    float dy = 0.0f;
    int channels = 3;

    Grid frame(float t) const {
        Grid g(height, width, channels);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < channels; ++c)
                    g.at(y, x, c) = detail::periodic_texture(x - t * dx, y - t * dy, c, width,
                                                             height);
        return g;
    }
    FlowField flow_fwd() const {
        FlowField f(height, width, 2);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                f.at(y, x, 0) = dx;
                f.at(y, x, 1) = dy;
            }
        return f;
    }
    FlowField flow_bwd() const {
        FlowField f(height, width, 2);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                f.at(y, x, 0) = -dx;
                f.at(y, x, 1) = -dy;
            }
        return f;
    }
};

// A bright feathered square moves by (dx, dy) over a static dark background.
// Flow is (dx, dy) on the square's support at the source frame and zero
// elsewhere; edge pixels mix both motions and are excluded from the interior
// mask.
struct SquareScene {
    int height = 128;
    int width = 128;
    float cx = 48.0f;
    float cy = 64.0f;
    float half = 18.0f;
    float feather = 1.5f;
    float dx = 8.0f;
    float dy = 0.0f;
    int channels = 3;

    float coverage(float x, float y, float t) const {
        return detail::axis_coverage(x, cx + t * dx, half, feather) *
               detail::axis_coverage(y, cy + t * dy, half, feather);
    }

    Grid frame(float t) const {
        static constexpr float kBg[3] = {0.10f, 0.12f, 0.14f};
        static constexpr float kFg[3] = {0.85f, 0.80f, 0.72f};
        Grid g(height, width, channels);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const float cov = coverage(static_cast<float>(x), static_cast<float>(y), t);
                for (int c = 0; c < channels; ++c)
                    g.at(y, x, c) = kBg[c % 3] + (kFg[c % 3] - kBg[c % 3]) * cov;
            }
        return g;
    }

    FlowField flow_at(float t, float u, float v) const {
        FlowField f(height, width, 2);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const bool on = coverage(static_cast<float>(x), static_cast<float>(y), t) > 0.0f;
                f.at(y, x, 0) = on ? u : 0.0f;
                f.at(y, x, 1) = on ? v : 0.0f;
            }
        return f;
    }
    FlowField flow_fwd() const { return flow_at(0.0f, dx, dy); }
    FlowField flow_bwd() const { return flow_at(1.0f, -dx, -dy); }

    // Pixels whose ground truth at time t is unambiguous: static background
    // away from the whole swept band, plus the square interior away from its
    // edges. `margin` keeps splat-footprint spill out of the measurement.
    Mask interior(float t, float margin = 6.0f) const {
        Mask m(height, width, 1);
        const float lo_x = std::min(cx, cx + dx) - half - feather - margin;
        const float hi_x = std::max(cx, cx + dx) + half + feather + margin;
        const float lo_y = std::min(cy, cy + dy) - half - feather - margin;
        const float hi_y = std::max(cy, cy + dy) + half + feather + margin;
        const float cxt = cx + t * dx;
        const float cyt = cy + t * dy;
        const float inner = half - feather - margin;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const bool outside_band = x < lo_x || x > hi_x || y < lo_y || y > hi_y;
                const bool deep_inside = inner > 0.0f && std::fabs(x - cxt) <= inner &&
                                         std::fabs(y - cyt) <= inner;
                m.at(y, x) = (outside_band || deep_inside) ? 1.0f : 0.0f;
            }
        return m;
    }
};

// Divergent motion about the frame center: F(p) = s * (p - c), a uniform
// expansion by (1 + s) per unit time.
struct ZoomScene {
    int height = 128;
    int width = 128;
    float s = 0.1f;
    int channels = 3;

    float center_x() const { return static_cast<float>(width - 1) / 2.0f; }
    float center_y() const { return static_cast<float>(height - 1) / 2.0f; }

    Grid frame(float t) const {
        const float k = 1.0f + t * s;
        const float cx = center_x(), cy = center_y();
        Grid g(height, width, channels);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const float sx = (x + t * s * cx) / k;
                const float sy = (y + t * s * cy) / k;
                for (int c = 0; c < channels; ++c)
                    g.at(y, x, c) = detail::smooth_texture(sx, sy, c);
            }
        return g;
    }
    FlowField flow_fwd() const {
        FlowField f(height, width, 2);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                f.at(y, x, 0) = s * (x - center_x());
                f.at(y, x, 1) = s * (y - center_y());
            }
        return f;
    }
    FlowField flow_bwd() const {
        const float k = -s / (1.0f + s);
        FlowField f(height, width, 2);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                f.at(y, x, 0) = k * (x - center_x());
                f.at(y, x, 1) = k * (y - center_y());
            }
        return f;
    }
};

// A textured foreground square slides over a static textured background,
// occluding it on the leading side and revealing it on the trailing side; the
// revealed strip is visible only in frame 1 and the covered strip only in
// frame 0.
struct OccludeScene {
    int height = 128;
    int width = 128;
    float cx = 44.0f;
    float cy = 64.0f;
    float half = 20.0f;
    float feather = 1.5f;
    float dx = 14.0f;
    float dy = 0.0f;
    int channels = 3;

    float coverage(float x, float y, float t) const {
        return detail::axis_coverage(x, cx + t * dx, half, feather) *
               detail::axis_coverage(y, cy + t * dy, half, feather);
    }

    Grid frame(float t) const {
        Grid g(height, width, channels);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const float cov = coverage(static_cast<float>(x), static_cast<float>(y), t);
                const float fx = static_cast<float>(x);
                const float fy = static_cast<float>(y);
                for (int c = 0; c < channels; ++c) {
                    const float bg = detail::smooth_texture(fx, fy, c);
                    // Foreground texture rides with the square.
                    const float fg = 0.25f + 0.75f * detail::smooth_texture(
                                                          fx - t * dx + 31.0f,
                                                          fy - t * dy + 57.0f, c + 3);
                    g.at(y, x, c) = bg + (std::min(fg, 1.0f) - bg) * cov;
                }
            }
        return g;
    }

    FlowField flow_at(float t, float u, float v) const {
        FlowField f(height, width, 2);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const bool on = coverage(static_cast<float>(x), static_cast<float>(y), t) > 0.0f;
                f.at(y, x, 0) = on ? u : 0.0f;
                f.at(y, x, 1) = on ? v : 0.0f;
            }
        return f;
    }
    FlowField flow_fwd() const { return flow_at(0.0f, dx, dy); }
    FlowField flow_bwd() const { return flow_at(1.0f, -dx, -dy); }

    // Background visible in frame 0 but covered by the square in frame 1.
    Mask covered_region() const {
        Mask m(height, width, 1);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const float c0 = coverage(static_cast<float>(x), static_cast<float>(y), 0.0f);
                const float c1 = coverage(static_cast<float>(x), static_cast<float>(y), 1.0f);
                m.at(y, x) = (c0 == 0.0f && c1 == 1.0f) ? 1.0f : 0.0f;
            }
        return m;
    }
};

}  // namespace splatkit
