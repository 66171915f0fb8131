#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "splatkit/grid.hpp"
#include "splatkit/metrics.hpp"
#include "splatkit/upsample.hpp"

namespace splatkit {

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path);
    return bytes;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path);
}

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline void put_f32le(std::vector<std::uint8_t>& out, float v) {
    put_u32le(out, std::bit_cast<std::uint32_t>(v));
}

inline std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32le(const std::uint8_t* p) { return std::bit_cast<float>(get_u32le(p)); }

inline std::string lower_ext(const std::string& path) {
    const std::size_t dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Middlebury .flo
//
//   bytes 0-3   the float 202021.25 stored little-endian ("PIEH")
//   bytes 4-7   width  as a signed 32-bit integer
//   bytes 8-11  height as a signed 32-bit integer
//   bytes 12-   h*w interleaved (u, v) 32-bit floats, row-major
// ---------------------------------------------------------------------------

constexpr float kFloMagic = 202021.25f;

inline std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
    require_channels(flow, 2, "encode_flo");
    std::vector<std::uint8_t> out;
    out.reserve(12 + flow.size() * 4);
    detail::put_f32le(out, kFloMagic);
    detail::put_u32le(out, static_cast<std::uint32_t>(flow.width()));
    detail::put_u32le(out, static_cast<std::uint32_t>(flow.height()));
    for (std::size_t i = 0; i < flow.size(); ++i) detail::put_f32le(out, flow.data()[i]);
    return out;
}

inline FlowField decode_flo(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12) throw IoError("flo: truncated header");
    if (detail::get_f32le(bytes.data()) != kFloMagic)
        throw IoError("flo: bad magic (expected 202021.25, wrong endianness or not a .flo file)");
    const std::int32_t w = static_cast<std::int32_t>(detail::get_u32le(bytes.data() + 4));
    const std::int32_t h = static_cast<std::int32_t>(detail::get_u32le(bytes.data() + 8));
    if (w < 1 || h < 1 || w > 99999 || h > 99999)
        throw IoError("flo: illegal dimensions " + std::to_string(w) + "x" + std::to_string(h));
    const std::size_t need = 12 + static_cast<std::size_t>(w) * h * 2 * 4;
    if (bytes.size() < need) throw IoError("flo: file too short");
    if (bytes.size() > need) throw IoError("flo: file too long");
    FlowField flow(h, w, 2);
    for (std::size_t i = 0; i < flow.size(); ++i)
        flow.data()[i] = detail::get_f32le(bytes.data() + 12 + i * 4);
    return flow;
}

inline FlowField read_flo(const std::string& path) {
    try {
        return decode_flo(detail::read_file_bytes(path));
    } catch (const IoError& e) {
        throw IoError(path + ": " + e.what());
    }
}

inline void write_flo(const FlowField& flow, const std::string& path) {
    detail::write_file_bytes(path, encode_flo(flow));
}

// ---------------------------------------------------------------------------
// PFM: "PF" (3 channels) or "Pf" (1 channel), then "<width> <height>", then a
// scale whose sign encodes endianness (negative = little). Rows are stored
// bottom to top. Lossless float round trips; the scale magnitude is ignored.
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_pfm(const Grid& g) {
    if (g.channels() != 1 && g.channels() != 3)
        throw IoError("pfm: only 1- or 3-channel grids, got " + std::to_string(g.channels()));
    std::ostringstream header;
    header << (g.channels() == 3 ? "PF" : "Pf") << '\n'
           << g.width() << ' ' << g.height() << '\n'
           << "-1.0" << '\n';
    const std::string h = header.str();
    std::vector<std::uint8_t> out(h.begin(), h.end());
    out.reserve(out.size() + g.size() * 4);
    for (int y = g.height() - 1; y >= 0; --y) {
        const float* row = g.row(y);
        for (int i = 0; i < g.width() * g.channels(); ++i) detail::put_f32le(out, row[i]);
    }
    return out;
}

inline Grid decode_pfm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    const auto next_token = [&]() -> std::string {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
        if (start == pos) throw IoError("pfm: truncated header");
        return std::string(bytes.begin() + start, bytes.begin() + pos);
    };
    const std::string magic = next_token();
    int channels = 0;
    if (magic == "PF")
        channels = 3;
    else if (magic == "Pf")
        channels = 1;
    else
        throw IoError("pfm: bad magic '" + magic + "'");
    int w = 0, h = 0;
    float scale = 0.0f;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        scale = std::stof(next_token());
    } catch (const std::exception&) {
        throw IoError("pfm: malformed header fields");
    }
    if (w < 1 || h < 1) throw IoError("pfm: illegal dimensions");
    if (scale == 0.0f) throw IoError("pfm: zero scale");
    if (pos >= bytes.size()) throw IoError("pfm: missing data");
    ++pos;  // exactly one whitespace byte separates the header from the data
    const bool little = scale < 0.0f;
    const std::size_t count = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() - pos < count * 4) throw IoError("pfm: file too short");
    Grid g(h, w, channels);
    std::size_t i = 0;
    for (int y = h - 1; y >= 0; --y) {
        float* row = g.row(y);
        for (int k = 0; k < w * channels; ++k, ++i) {
            const std::uint8_t* p = bytes.data() + pos + i * 4;
            std::uint32_t u = detail::get_u32le(p);
            if (!little) u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) |
                             ((u >> 24) & 0xffu);
            row[k] = std::bit_cast<float>(u);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// PNG (8-bit, via libpng's simplified API). Values map to [0, 1] as v/255;
// writing clamps to [0, 1] and quantizes round-half-away-from-zero.
// ---------------------------------------------------------------------------

inline Grid read_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError(path + ": png decode failed: " + image.message);
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const int channels = gray ? 1 : 3;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    const png_color background = {0, 0, 0};
    if (!png_image_finish_read(&image, &background, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError(path + ": png decode failed: " + image.message);
    }
    Grid g(static_cast<int>(image.height), static_cast<int>(image.width), channels);
    for (std::size_t i = 0; i < g.size(); ++i)
        g.data()[i] = static_cast<float>(buffer[i]) / 255.0f;
    return g;
}

inline void write_png(const Grid& g, const std::string& path) {
    if (g.channels() != 1 && g.channels() != 3)
        throw IoError("png: only 1- or 3-channel grids, got " + std::to_string(g.channels()));
    std::vector<std::uint8_t> buffer(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const float v = std::min(std::max(g.data()[i], 0.0f), 1.0f);
        buffer[i] = static_cast<std::uint8_t>(std::floor(v * 255.0f + 0.5f));
    }
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(g.width());
    image.height = static_cast<png_uint_32>(g.height());
    image.format = g.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
        throw IoError(path + ": png encode failed: " + std::string(image.message));
}

inline Grid read_image(const std::string& path) {
    const std::string ext = detail::lower_ext(path);
    if (ext == "png") return read_png(path);
    if (ext == "pfm") return decode_pfm(detail::read_file_bytes(path));
    throw IoError(path + ": unsupported image format '" + ext + "'");
}

inline void write_image(const Grid& g, const std::string& path) {
    const std::string ext = detail::lower_ext(path);
    if (ext == "png") {
        write_png(g, path);
    } else if (ext == "pfm") {
        detail::write_file_bytes(path, encode_pfm(g));
    } else {
        throw IoError(path + ": unsupported image format '" + ext + "'");
    }
}

// ---------------------------------------------------------------------------
// Flow visualization: hue from the flow direction, saturation from the
// magnitude relative to max_mag (pass <= 0 to use the field's maximum).
// Zero flow maps to white.
// ---------------------------------------------------------------------------

inline Grid flow_to_color(const FlowField& flow, float max_mag = 0.0f) {
    require_channels(flow, 2, "flow_to_color");
    const int h = flow.height(), w = flow.width();
    if (max_mag <= 0.0f) {
        for (int y = 0; y < h; ++y) {
            const float* f = flow.row(y);
            for (int x = 0; x < w; ++x) {
                const float u = f[2 * x], v = f[2 * x + 1];
                if (std::fabs(u) < 1e9f && std::fabs(v) < 1e9f)
                    max_mag = std::max(max_mag, std::sqrt(u * u + v * v));
            }
        }
        if (max_mag <= 0.0f) max_mag = 1.0f;
    }
    Grid out(h, w, 3);
    for (int y = 0; y < h; ++y) {
        const float* f = flow.row(y);
        float* o = out.row(y);
        for (int x = 0; x < w; ++x) {
            const float u = f[2 * x], v = f[2 * x + 1];
            const float mag = std::sqrt(u * u + v * v);
            const float sat = std::min(mag / max_mag, 1.0f);
            float hue = std::atan2(v, u);  // [-pi, pi]
            if (hue < 0.0f) hue += 6.2831853f;
            const float sector = hue * (3.0f / 3.14159265f);  // [0, 6)
            const int k = std::min(static_cast<int>(sector), 5);
            const float frac = sector - k;
            const float p = 1.0f - sat;
            const float q = 1.0f - sat * frac;
            const float r = 1.0f - sat * (1.0f - frac);
            float rgb[3];
            switch (k) {
                case 0: rgb[0] = 1.0f; rgb[1] = r; rgb[2] = p; break;
                case 1: rgb[0] = q; rgb[1] = 1.0f; rgb[2] = p; break;
                case 2: rgb[0] = p; rgb[1] = 1.0f; rgb[2] = r; break;
                case 3: rgb[0] = p; rgb[1] = q; rgb[2] = 1.0f; break;
                case 4: rgb[0] = r; rgb[1] = p; rgb[2] = 1.0f; break;
                default: rgb[0] = 1.0f; rgb[1] = p; rgb[2] = q; break;
            }
            o[3 * x + 0] = rgb[0];
            o[3 * x + 1] = rgb[1];
            o[3 * x + 2] = rgb[2];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metric parameter file: plain text, one "key value" pair per line, '#'
// starts a comment. All six keys are required.
// ---------------------------------------------------------------------------

inline MetricParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    MetricParams params;
    bool seen[6] = {false, false, false, false, false, false};
    const char* names[6] = {"alpha_splat_photo", "alpha_splat_flow", "alpha_splat_varia",
                            "alpha_merge_photo", "alpha_merge_flow", "alpha_merge_varia"};
    float* slots[6] = {&params.splat_photo, &params.splat_flow, &params.splat_varia,
                       &params.merge_photo, &params.merge_flow, &params.merge_varia};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        float value = 0.0f;
        if (!(ls >> value) || !std::isfinite(value))
            throw IoError(path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
        bool known = false;
        for (int i = 0; i < 6; ++i) {
            if (key == names[i]) {
                *slots[i] = value;
                seen[i] = true;
                known = true;
                break;
            }
        }
        if (!known)
            throw IoError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    for (int i = 0; i < 6; ++i)
        if (!seen[i]) throw IoError(path + ": missing key '" + std::string(names[i]) + "'");
    return params;
}

inline void save_params(const MetricParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "alpha_splat_photo " << params.splat_photo << '\n'
        << "alpha_splat_flow " << params.splat_flow << '\n'
        << "alpha_splat_varia " << params.splat_varia << '\n'
        << "alpha_merge_photo " << params.merge_photo << '\n'
        << "alpha_merge_flow " << params.merge_flow << '\n'
        << "alpha_merge_varia " << params.merge_varia << '\n';
    if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Upsampler weight file, little-endian throughout:
//
//   "SKWT"  | u32 version (1) | u32 layer_count
//   per layer: u32 out_ch, u32 in_ch, u32 kh, u32 kw, u32 has_prelu
//   per layer: kernel floats (out*in*kh*kw), bias floats, prelu floats
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_upsampler_weights(const UpsamplerWeights& w) {
    w.validate();
    std::vector<std::uint8_t> out{'S', 'K', 'W', 'T'};
    detail::put_u32le(out, 1);
    detail::put_u32le(out, static_cast<std::uint32_t>(w.layers.size()));
    for (const ConvLayer& layer : w.layers) {
        detail::put_u32le(out, static_cast<std::uint32_t>(layer.out_ch));
        detail::put_u32le(out, static_cast<std::uint32_t>(layer.in_ch));
        detail::put_u32le(out, 3);
        detail::put_u32le(out, 3);
        detail::put_u32le(out, layer.prelu.empty() ? 0 : 1);
    }
    for (const ConvLayer& layer : w.layers) {
        for (float v : layer.kernel) detail::put_f32le(out, v);
        for (float v : layer.bias) detail::put_f32le(out, v);
        for (float v : layer.prelu) detail::put_f32le(out, v);
    }
    return out;
}

inline UpsamplerWeights decode_upsampler_weights(const std::vector<std::uint8_t>& bytes) {
    constexpr int kMaxChannels = 4096;
    if (bytes.size() < 12 || bytes[0] != 'S' || bytes[1] != 'K' || bytes[2] != 'W' ||
        bytes[3] != 'T')
        throw IoError("weights: bad magic");
    if (detail::get_u32le(bytes.data() + 4) != 1) throw IoError("weights: unsupported version");
    const std::uint32_t layer_count = detail::get_u32le(bytes.data() + 8);
    if (layer_count != 4)
        throw IoError("weights: expected 4 layers, got " + std::to_string(layer_count));
    std::size_t pos = 12;
    const auto take_u32 = [&]() {
        if (bytes.size() - pos < 4) throw IoError("weights: truncated header");
        const std::uint32_t v = detail::get_u32le(bytes.data() + pos);
        pos += 4;
        return v;
    };
    UpsamplerWeights w;
    std::vector<bool> has_prelu;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        ConvLayer layer;
        layer.out_ch = static_cast<int>(take_u32());
        layer.in_ch = static_cast<int>(take_u32());
        const std::uint32_t kh = take_u32();
        const std::uint32_t kw = take_u32();
        has_prelu.push_back(take_u32() != 0);
        if (kh != 3 || kw != 3)
            throw IoError("weights: layer " + std::to_string(l) + ": kernel must be 3x3");
        if (layer.out_ch < 1 || layer.out_ch > kMaxChannels || layer.in_ch < 1 ||
            layer.in_ch > kMaxChannels)
            throw IoError("weights: layer " + std::to_string(l) + ": implausible channel count");
        w.layers.push_back(std::move(layer));
    }
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        ConvLayer& layer = w.layers[l];
        const std::size_t nk = static_cast<std::size_t>(layer.out_ch) * layer.in_ch * 9;
        const std::size_t nb = static_cast<std::size_t>(layer.out_ch);
        const std::size_t np = has_prelu[l] ? nb : 0;
        if ((bytes.size() - pos) / 4 < nk + nb + np)
            throw IoError("weights: layer " + std::to_string(l) + ": truncated payload");
        layer.kernel.resize(nk);
        for (std::size_t i = 0; i < nk; ++i, pos += 4)
            layer.kernel[i] = detail::get_f32le(bytes.data() + pos);
        layer.bias.resize(nb);
        for (std::size_t i = 0; i < nb; ++i, pos += 4)
            layer.bias[i] = detail::get_f32le(bytes.data() + pos);
        layer.prelu.resize(np);
        for (std::size_t i = 0; i < np; ++i, pos += 4)
            layer.prelu[i] = detail::get_f32le(bytes.data() + pos);
    }
    if (pos != bytes.size()) throw IoError("weights: trailing bytes");
    w.validate();
    return w;
}

inline UpsamplerWeights load_upsampler_weights(const std::string& path) {
    try {
        return decode_upsampler_weights(detail::read_file_bytes(path));
    } catch (const IoError& e) {
        throw IoError(path + ": " + e.what());
    }
}

inline void save_upsampler_weights(const UpsamplerWeights& w, const std::string& path) {
    detail::write_file_bytes(path, encode_upsampler_weights(w));
}

}  // namespace splatkit
