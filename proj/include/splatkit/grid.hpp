#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace splatkit {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense H x W x C raster of 32-bit floats, row-major, channel-interleaved:
// index(y, x, c) = (y * width + x) * channels + c. Pixel centers sit at
// integer coordinates; x is the column (horizontal), y the row (vertical).
class Grid {
public:
    Grid() = default;

    Grid(int height, int width, int channels, float fill = 0.0f)
        : height_(height), width_(width), channels_(channels),
          data_(check_dims(height, width, channels), fill) {}

    static Grid from_data(int height, int width, int channels, std::vector<float> data) {
        Grid g;
        if (data.size() != check_dims(height, width, channels)) {
            throw ShapeError("Grid::from_data: data length " + std::to_string(data.size()) +
                             " does not match " + std::to_string(height) + "x" +
                             std::to_string(width) + "x" + std::to_string(channels));
        }
        g.height_ = height;
        g.width_ = width;
        g.channels_ = channels;
        g.data_ = std::move(data);
        return g;
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
    const float& at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_ * channels_; }
    const float* row(int y) const {
        return data_.data() + static_cast<std::size_t>(y) * width_ * channels_;
    }

    std::size_t index(int y, int x, int c = 0) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    bool same_shape(const Grid& o) const {
        return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
    }

    void fill(float v) { data_.assign(data_.size(), v); }

private:
    static std::size_t check_dims(int height, int width, int channels) {
        if (height < 1 || width < 1 || channels < 1) {
            throw ShapeError("Grid: dimensions must be at least 1x1x1, got " +
                             std::to_string(height) + "x" + std::to_string(width) + "x" +
                             std::to_string(channels));
        }
        return static_cast<std::size_t>(height) * width * channels;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

// A flow field is a 2-channel grid of pixel displacements: channel 0 is the
// horizontal component u, channel 1 the vertical component v. A displacement
// maps source pixel q to the continuous position q + (u, v); targets may fall
// outside the grid.
using FlowField = Grid;

// Single-channel grid holding exactly 0.0 or 1.0 per pixel.
using Mask = Grid;

inline void require_same_shape(const Grid& a, const Grid& b, const char* where) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(where) + ": shape mismatch, " +
                         std::to_string(a.height()) + "x" + std::to_string(a.width()) + "x" +
                         std::to_string(a.channels()) + " vs " + std::to_string(b.height()) +
                         "x" + std::to_string(b.width()) + "x" + std::to_string(b.channels()));
    }
}

inline void require_same_extent(const Grid& a, const Grid& b, const char* where) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw ShapeError(std::string(where) + ": extent mismatch, " +
                         std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                         std::to_string(b.height()) + "x" + std::to_string(b.width()));
    }
}

inline void require_channels(const Grid& g, int channels, const char* where) {
    if (g.channels() != channels) {
        throw ShapeError(std::string(where) + ": expected " + std::to_string(channels) +
                         " channels, got " + std::to_string(g.channels()));
    }
}

// Halves the spatial resolution by averaging each 2x2 block. Odd dimensions
// round up: the last row/column of blocks averages only the pixels that
// exist, so borders are not darkened by zero padding.
inline Grid downsample_2x(const Grid& g) {
    if (g.height() < 2 || g.width() < 2) {
        throw ShapeError("downsample_2x: grid must be at least 2x2, got " +
                         std::to_string(g.height()) + "x" + std::to_string(g.width()));
    }
    const int oh = (g.height() + 1) / 2;
    const int ow = (g.width() + 1) / 2;
    const int ch = g.channels();
    Grid out(oh, ow, ch);
    for (int y = 0; y < oh; ++y) {
        const int y0 = 2 * y;
        const int y1 = std::min(y0 + 2, g.height());
        for (int x = 0; x < ow; ++x) {
            const int x0 = 2 * x;
            const int x1 = std::min(x0 + 2, g.width());
            const int count = (y1 - y0) * (x1 - x0);
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx)
                        acc += g.at(yy, xx, c);
                out.at(y, x, c) = static_cast<float>(acc / count);
            }
        }
    }
    return out;
}

// Downsamples a flow field; displacements are halved so they stay expressed
// in pixels of the output resolution.
inline FlowField downsample_2x_flow(const FlowField& flow) {
    require_channels(flow, 2, "downsample_2x_flow");
    Grid out = downsample_2x(flow);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= 0.5f;
    return out;
}

// Peak signal-to-noise ratio in dB; +infinity when the grids are identical.
inline double psnr(const Grid& a, const Grid& b, double peak) {
    require_same_shape(a, b, "psnr");
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
    double se = 0.0;
    const float* pa = a.data();
    const float* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace splatkit
