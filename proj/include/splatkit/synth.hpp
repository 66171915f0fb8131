#pragma once

#include <cmath>
#include <cstring>
#include <memory>
#include <utility>
#include <vector>

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define SPLATKIT_X86 1
#endif

#include "splatkit/grid.hpp"
#include "splatkit/metrics.hpp"
#include "splatkit/parallel.hpp"
#include "splatkit/splat.hpp"
#include "splatkit/warp.hpp"

namespace splatkit {

// What to write at pixels left uncovered by both projections:
// ZeroMotionBlend blends the input frames in place, (1-t) I0[p] + t I1[p].
enum class HolePolicy { ZeroMotionBlend };

struct SynthesisConfig {
    SplatKernel kernel = SplatKernel::gaussian();
    MetricParams metrics;
    // Minimum accumulated splat weight for a projected pixel to count as
    // covered. A fully covered destination under area-preserving motion
    // accumulates ~1.0 with the bilinear kernel; values well below that
    // indicate the source lattice was stretched past reliable coverage.
    float eps_valid = 0.7f;
    HolePolicy hole_policy = HolePolicy::ZeroMotionBlend;
    int threads = 1;
};

// F_0->t = t * F_0->1 under the linear motion assumption. The backward
// direction is obtained symmetrically by passing 1-t with F_1->0.
inline FlowField time_scaled_flow(const FlowField& flow, float t) {
    require_channels(flow, 2, "time_scaled_flow");
    if (!(t >= 0.0f && t <= 1.0f))
        throw std::invalid_argument("time_scaled_flow: t must be in [0, 1]");
    FlowField out(flow.height(), flow.width(), 2);
    for (std::size_t i = 0; i < flow.size(); ++i) out.data()[i] = t * flow.data()[i];
    return out;
}

struct Projection {
    FlowField flow_back;  // F_t->src: at each covered target, points back to the source frame
    Grid merge_metric;    // the source frame's merge metric carried to time t
    Mask valid;           // splat denominator > eps_valid
};

namespace detail {

// The metric-valued z of the synthesis pipeline lives in (0, 3]; anything
// within this bound keeps exp(z) and exp(-blockmax) comfortably finite, so
// the factored fast path below applies.
constexpr float kFastviableZLimit = 60.0f;
constexpr int kProjBlockShift = 3;  // 8x8 destination blocks for the max pre-pass

inline float max_abs_value(const Grid& g) {
    float m = 0.0f;
    for (std::size_t i = 0; i < g.size(); ++i) m = std::max(m, std::fabs(g.data()[i]));
    return m;
}

inline Grid exp_grid(const Grid& g) {
    Grid out(g.height(), g.width(), g.channels());
    for (std::size_t i = 0; i < g.size(); ++i) out.data()[i] = std::exp(g.data()[i]);
    return out;
}

// Per-axis Gaussian tap weights at quantized fractional offsets. Row b holds
// the four weights exp(-((k-1) - b/kBins)^2 / (2 sigma^2)); the half-bin
// quantization perturbs weights by ~1e-3 relative, which cancels in the
// softmax ratio for locally constant payloads and is far inside the
// coverage/hole margins elsewhere.
struct GaussianWeightTable {
    static constexpr int kBins = 1024;
    std::vector<float> data;

    explicit GaussianWeightTable(float sigma) : data(4 * (kBins + 1)) {
        const float inv2s2 = 1.0f / (2.0f * sigma * sigma);
        for (int b = 0; b <= kBins; ++b) {
            const float f = static_cast<float>(b) / static_cast<float>(kBins);
            for (int k = 0; k < 4; ++k) {
                const float d = static_cast<float>(k - 1) - f;
                data[4 * b + k] = std::exp(-(d * d) * inv2s2);
            }
        }
    }
    const float* row(float frac) const {
        const int b = static_cast<int>(frac * static_cast<float>(kBins) + 0.5f);
        return data.data() + 4 * b;
    }
};

// Raw projection accumulator: per destination pixel four interleaved softmax
// sums [flow_back_u, flow_back_v, merge_metric, weight] plus a separate plain
// kernel-coverage sum used for hole detection (coverage is independent of z,
// so validity means the same thing whatever the metric values are). Views
// per-thread scratch slots; the next accumulate call on the same slot in the
// same thread invalidates it.
struct ProjectionAccum {
    int height = 0;
    int width = 0;
    float* acc = nullptr;
    float* cov = nullptr;

    const float* at(int y, int x) const {
        return acc + (static_cast<std::size_t>(y) * width + x) * 4;
    }
    float coverage(int y, int x) const {
        return cov[static_cast<std::size_t>(y) * width + x];
    }
};

// Scratch buffers reused across frames so only the first projection of a
// session pays the page first-touch.
inline float* projection_scratch(std::size_t count, int slot) {
    thread_local std::unique_ptr<float[]> buffers[4];
    thread_local std::size_t capacity[4] = {0, 0, 0, 0};
    if (capacity[slot] < count) {
        buffers[slot] = std::make_unique_for_overwrite<float[]>(count);
        capacity[slot] = count;
    }
    return buffers[slot].get();
}

#if defined(SPLATKIT_X86)
// Interior 4x4 tap block, AVX2+FMA version: each footprint row is 16
// contiguous accumulator floats, updated as two 8-wide fmas, plus a 4-wide
// coverage fma.
__attribute__((target("avx2,fma"))) inline void accumulate_taps_avx2(
    float* acc, float* cov, int w, int x0, int y0, const float* wx, const float* wy, float eq,
    const float* pv, const float* er0, const float* er1, int jsplit, const int cbx[4]) {
    const __m128 pv4 = _mm_loadu_ps(pv);
    const __m256 pv8 = _mm256_set_m128(pv4, pv4);
    const __m128 wx4 = _mm_loadu_ps(wx);
    for (int j = 0; j < 4; ++j) {
        const float* er = j < jsplit ? er0 : er1;
        const __m128 er4 = _mm_set_ps(er[cbx[3]], er[cbx[2]], er[cbx[1]], er[cbx[0]]);
        const __m128 wt4 = _mm_mul_ps(_mm_mul_ps(wx4, _mm_set1_ps(wy[j] * eq)), er4);
        const __m256 w01 = _mm256_set_m128(_mm_shuffle_ps(wt4, wt4, 0x55),
                                           _mm_shuffle_ps(wt4, wt4, 0x00));
        const __m256 w23 = _mm256_set_m128(_mm_shuffle_ps(wt4, wt4, 0xFF),
                                           _mm_shuffle_ps(wt4, wt4, 0xAA));
        const std::size_t row = static_cast<std::size_t>(y0 + j) * w + x0;
        float* arow = acc + row * 4;
        _mm256_storeu_ps(arow, _mm256_fmadd_ps(w01, pv8, _mm256_loadu_ps(arow)));
        _mm256_storeu_ps(arow + 8, _mm256_fmadd_ps(w23, pv8, _mm256_loadu_ps(arow + 8)));
        float* crow = cov + row;
        _mm_storeu_ps(crow, _mm_fmadd_ps(wx4, _mm_set1_ps(wy[j]), _mm_loadu_ps(crow)));
    }
}

inline bool have_avx2() {
    static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok;
}
#endif

// Sequential Gaussian projection specialized for bounded z: one block-granular
// max pre-pass provides the per-destination stabilizer zmax as a shared upper
// bound per 8x8 block (any per-destination upper bound cancels exactly in the
// normalized ratio), after which every tap weight factors into
// table(fx) * table(fy) * exp(z[q]) * exp(-zmax[block]). exp(z) arrives
// precomputed so multi-frame synthesis pays for it once per pair. The flow is
// scaled by `scale` on the fly and the 4-float payload [-u, -v, metric, 1]
// lands in one interleaved accumulator.
inline ProjectionAccum project_flow_gaussian_accumulate(const FlowField& flow, float scale,
                                                        const Grid& msplat, const Grid& ez,
                                                        const Grid& mmerge, float sigma,
                                                        int scratch_slot = 0) {
    const int h = flow.height(), w = flow.width();
    const int bw = (w + 7) >> kProjBlockShift;
    const int bh = (h + 7) >> kProjBlockShift;
    const float lowest = std::numeric_limits<float>::lowest();

    std::vector<float> zmax(static_cast<std::size_t>(bw) * bh, lowest);
    for (int y = 0; y < h; ++y) {
        const float* f = flow.row(y);
        const float* z = msplat.row(y);
        for (int x = 0; x < w; ++x) {
            const float tx = static_cast<float>(x) + scale * f[2 * x + 0];
            const float ty = static_cast<float>(y) + scale * f[2 * x + 1];
            if (!(tx > -8.0f && tx < static_cast<float>(w) + 8.0f) ||
                !(ty > -8.0f && ty < static_cast<float>(h) + 8.0f))
                continue;
            const int x0 = static_cast<int>(std::floor(tx)) - 1;
            const int y0 = static_cast<int>(std::floor(ty)) - 1;
            const int cx0 = std::max(x0, 0), cx1 = std::min(x0 + 3, w - 1);
            const int cy0 = std::max(y0, 0), cy1 = std::min(y0 + 3, h - 1);
            if (cx0 > cx1 || cy0 > cy1) continue;
            const float zq = z[x];
            for (int by = cy0 >> kProjBlockShift; by <= (cy1 >> kProjBlockShift); ++by) {
                float* row = zmax.data() + static_cast<std::size_t>(by) * bw;
                for (int bx = cx0 >> kProjBlockShift; bx <= (cx1 >> kProjBlockShift); ++bx) {
                    if (zq > row[bx]) row[bx] = zq;
                }
            }
        }
    }

    std::vector<float> emax(zmax.size());
    for (std::size_t i = 0; i < zmax.size(); ++i)
        emax[i] = zmax[i] == lowest ? 0.0f : std::exp(-zmax[i]);

    const GaussianWeightTable table(sigma);
    ProjectionAccum out;
    out.height = h;
    out.width = w;
    const std::size_t pixels = static_cast<std::size_t>(h) * w;
    out.acc = projection_scratch(pixels * 4, scratch_slot);
    out.cov = projection_scratch(pixels, scratch_slot + 2);
    std::memset(out.acc, 0, pixels * 4 * sizeof(float));
    std::memset(out.cov, 0, pixels * sizeof(float));
    float* acc = out.acc;
    float* cov = out.cov;

    for (int y = 0; y < h; ++y) {
        const float* f = flow.row(y);
        const float* e = ez.row(y);
        const float* mm = mmerge.row(y);
        for (int x = 0; x < w; ++x) {
            const float u = scale * f[2 * x + 0];
            const float v = scale * f[2 * x + 1];
            const float tx = static_cast<float>(x) + u;
            const float ty = static_cast<float>(y) + v;
            if (!(tx > -8.0f && tx < static_cast<float>(w) + 8.0f) ||
                !(ty > -8.0f && ty < static_cast<float>(h) + 8.0f))
                continue;
            const float bx0f = std::floor(tx);
            const float by0f = std::floor(ty);
            const int x0 = static_cast<int>(bx0f) - 1;
            const int y0 = static_cast<int>(by0f) - 1;
            const float* wx = table.row(tx - bx0f);
            const float* wy = table.row(ty - by0f);
            const float eq = e[x];
            const float pv[4] = {-u, -v, mm[x], 1.0f};

            if (x0 >= 0 && y0 >= 0 && x0 + 3 < w && y0 + 3 < h) {
                // Row block index changes at most once inside the footprint.
                const int by0 = y0 >> kProjBlockShift;
                const int jsplit = std::min(4, 8 - (y0 & 7));
                const float* er0 = emax.data() + static_cast<std::size_t>(by0) * bw;
                const float* er1 = er0 + (jsplit < 4 ? bw : 0);
                const int cbx[4] = {x0 >> kProjBlockShift, (x0 + 1) >> kProjBlockShift,
                                    (x0 + 2) >> kProjBlockShift, (x0 + 3) >> kProjBlockShift};
#if defined(SPLATKIT_X86)
                if (have_avx2()) {
                    accumulate_taps_avx2(acc, cov, w, x0, y0, wx, wy, eq, pv, er0, er1, jsplit,
                                         cbx);
                    continue;
                }
#endif
                for (int j = 0; j < 4; ++j) {
                    const float* er = j < jsplit ? er0 : er1;
                    const float wyj = wy[j] * eq;
                    float wt[4];
                    for (int i = 0; i < 4; ++i) wt[i] = wx[i] * wyj * er[cbx[i]];
                    const std::size_t row = static_cast<std::size_t>(y0 + j) * w + x0;
                    float* arow = acc + row * 4;
                    for (int i = 0; i < 4; ++i)
                        for (int c = 0; c < 4; ++c) arow[4 * i + c] += wt[i] * pv[c];
                    float* crow = cov + row;
                    for (int i = 0; i < 4; ++i) crow[i] += wx[i] * wy[j];
                }
            } else {
                for (int j = 0; j < 4; ++j) {
                    const int py = y0 + j;
                    if (py < 0 || py >= h) continue;
                    const float wyj = wy[j] * eq;
                    const float* erow = emax.data() +
                                        static_cast<std::size_t>(py >> kProjBlockShift) * bw;
                    for (int i = 0; i < 4; ++i) {
                        const int px = x0 + i;
                        if (px < 0 || px >= w) continue;
                        const float wt = wx[i] * wyj * erow[px >> kProjBlockShift];
                        const std::size_t at = static_cast<std::size_t>(py) * w + px;
                        float* a = acc + at * 4;
                        for (int c = 0; c < 4; ++c) a[c] += wt * pv[c];
                        cov[at] += wx[i] * wy[j];
                    }
                }
            }
        }
    }
    return out;
}

inline Projection project_flow_gaussian_fast(const FlowField& flow, float scale,
                                             const Grid& msplat, const Grid& ez,
                                             const Grid& mmerge, float sigma,
                                             float eps_valid) {
    ProjectionAccum r = project_flow_gaussian_accumulate(flow, scale, msplat, ez, mmerge, sigma);
    const int h = r.height, w = r.width;
    Projection out;
    out.flow_back = FlowField(h, w, 2);
    out.merge_metric = Grid(h, w, 1);
    out.valid = Mask(h, w, 1);
    for (int y = 0; y < h; ++y) {
        const float* a = r.at(y, 0);
        const float* cv = r.cov + static_cast<std::size_t>(y) * w;
        float* fb = out.flow_back.row(y);
        float* mm = out.merge_metric.row(y);
        float* vd = out.valid.row(y);
        for (int x = 0; x < w; ++x) {
            const float wt = a[4 * x + 3];
            if (cv[x] > eps_valid && wt > 0.0f) {
                const float inv = 1.0f / wt;
                fb[2 * x + 0] = a[4 * x + 0] * inv;
                fb[2 * x + 1] = a[4 * x + 1] * inv;
                mm[x] = a[4 * x + 2] * inv;
                vd[x] = 1.0f;
            } else {
                fb[2 * x + 0] = 0.0f;
                fb[2 * x + 1] = 0.0f;
                mm[x] = 0.0f;
                vd[x] = 0.0f;
            }
        }
    }
    return out;
}

// Fused normalize + backward warp + merge + hole fill over both directions'
// raw accumulators. Mirrors the public-op composition pixel for pixel while
// skipping the intermediate full-frame buffers.
inline Grid finalize_frame_fast(const ProjectionAccum& a0, const ProjectionAccum& a1,
                                const Grid& i0, const Grid& i1, float t, float eps_valid) {
    constexpr float kDegenerateEps = 1e-7f;
    const int h = i0.height(), w = i0.width(), ch = i0.channels();
    Grid out(h, w, ch);
    float c0[16], c1[16];  // gathered samples; images carry few channels

    const auto sample = [&](const Grid& src, int x, int y, const float* a, float inv,
                            float* dst) -> bool {
        float sx = static_cast<float>(x) + a[0] * inv;
        float sy = static_cast<float>(y) + a[1] * inv;
        const bool inside = sx >= 0.0f && sx <= static_cast<float>(w - 1) && sy >= 0.0f &&
                            sy <= static_cast<float>(h - 1);
        if (!inside) return false;
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
            dst[c] = w00 * r0[x0 * ch + c] + w10 * r0[x1 * ch + c] + w01 * r1[x0 * ch + c] +
                     w11 * r1[x1 * ch + c];
        }
        return true;
    };

    for (int y = 0; y < h; ++y) {
        const float* r0 = a0.at(y, 0);
        const float* r1 = a1.at(y, 0);
        const float* cv0 = a0.cov + static_cast<std::size_t>(y) * w;
        const float* cv1 = a1.cov + static_cast<std::size_t>(y) * w;
        const float* p0 = i0.row(y);
        const float* p1 = i1.row(y);
        float* o = out.row(y);
        for (int x = 0; x < w; ++x) {
            const float wt0 = r0[4 * x + 3];
            const float wt1 = r1[4 * x + 3];
            float m0 = 0.0f, m1 = 0.0f;
            bool b0 = false, b1 = false;
            if (cv0[x] > eps_valid && wt0 > 0.0f) {
                const float inv = 1.0f / wt0;
                m0 = r0[4 * x + 2] * inv;
                b0 = sample(i0, x, y, r0 + 4 * x, inv, c0);
            }
            if (cv1[x] > eps_valid && wt1 > 0.0f) {
                const float inv = 1.0f / wt1;
                m1 = r1[4 * x + 2] * inv;
                b1 = sample(i1, x, y, r1 + 4 * x, inv, c1);
            }
            if (b0 && b1) {
                if (t == 0.0f) {
                    for (int c = 0; c < ch; ++c) o[x * ch + c] = c0[c];
                } else if (t == 1.0f) {
                    for (int c = 0; c < ch; ++c) o[x * ch + c] = c1[c];
                } else {
                    const float w0 = (1.0f - t) * m0;
                    const float w1 = t * m1;
                    const float den = w0 + w1;
                    if (den < kDegenerateEps) {
                        for (int c = 0; c < ch; ++c)
                            o[x * ch + c] = (1.0f - t) * c0[c] + t * c1[c];
                    } else {
                        const float inv = 1.0f / den;
                        for (int c = 0; c < ch; ++c)
                            o[x * ch + c] = (w0 * c0[c] + w1 * c1[c]) * inv;
                    }
                }
            } else if (b0) {
                for (int c = 0; c < ch; ++c) o[x * ch + c] = c0[c];
            } else if (b1) {
                for (int c = 0; c < ch; ++c) o[x * ch + c] = c1[c];
            } else {
                for (int c = 0; c < ch; ++c)
                    o[x * ch + c] = (1.0f - t) * p0[x * ch + c] + t * p1[x * ch + c];
            }
        }
    }
    return out;
}

// Generic projection through the exact stable softmax splat.
inline Projection project_flow_generic(const FlowField& f_to_t, const Grid& msplat,
                                       const Grid& mmerge, const SplatKernel& kernel,
                                       float eps_valid, int threads) {
    const int h = f_to_t.height(), w = f_to_t.width();
    Grid payload(h, w, 3);
    for (int y = 0; y < h; ++y) {
        const float* f = f_to_t.row(y);
        const float* m = mmerge.row(y);
        float* p = payload.row(y);
        for (int x = 0; x < w; ++x) {
            p[3 * x + 0] = -f[2 * x + 0];
            p[3 * x + 1] = -f[2 * x + 1];
            p[3 * x + 2] = m[x];
        }
    }
    SplatResult r = splat_softmax(payload, f_to_t, msplat, kernel, SoftmaxMode::Stable, threads);

    Projection out;
    out.flow_back = FlowField(h, w, 2);
    out.merge_metric = Grid(h, w, 1);
    out.valid = Mask(h, w, 1);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* val = r.value.row(y);
            const float* wt = r.weight.row(y);
            float* fb = out.flow_back.row(y);
            float* mm = out.merge_metric.row(y);
            float* vd = out.valid.row(y);
            for (int x = 0; x < w; ++x) {
                if (wt[x] > eps_valid) {
                    const float inv = 1.0f / wt[x];
                    fb[2 * x + 0] = val[3 * x + 0] * inv;
                    fb[2 * x + 1] = val[3 * x + 1] * inv;
                    mm[x] = val[3 * x + 2] * inv;
                    vd[x] = 1.0f;
                } else {
                    fb[2 * x + 0] = 0.0f;
                    fb[2 * x + 1] = 0.0f;
                    mm[x] = 0.0f;
                    vd[x] = 0.0f;
                }
            }
        }
    });
    return out;
}

}  // namespace detail

// Splats the flow itself (plus the merge metric) to time t with one stable
// softmax splat keyed by the splatting metric. The splatted payload is the
// negated flow: a pixel arriving at p from q looks back along -F_src->t. The
// merge metric rides along as an extra payload channel, which halves the
// scatter bandwidth versus splatting it separately.
inline Projection project_flow(const FlowField& f_to_t, const Grid& msplat, const Grid& mmerge,
                               const SplatKernel& kernel, float eps_valid, int threads = 1) {
    require_same_extent(f_to_t, msplat, "project_flow");
    require_same_extent(f_to_t, mmerge, "project_flow");
    require_channels(f_to_t, 2, "project_flow");
    require_channels(msplat, 1, "project_flow");
    require_channels(mmerge, 1, "project_flow");
    if (kernel.variant == SplatKernel::Variant::Gaussian4x4 && threads <= 1 &&
        detail::max_abs_value(msplat) <= detail::kFastviableZLimit) {
        Grid ez = detail::exp_grid(msplat);
        return detail::project_flow_gaussian_fast(f_to_t, 1.0f, msplat, ez, mmerge, kernel.sigma,
                                                  eps_valid);
    }
    return detail::project_flow_generic(f_to_t, msplat, mmerge, kernel, eps_valid, threads);
}

// Metric-weighted merge of the two warped frames:
//   I_t = [(1-t) M0 I0t + t M1 I1t] / [(1-t) M0 + t M1]
// Pixels valid on one side only copy that side; pixels valid on neither stay
// holes (mask 0) for the caller to fill. t == 0 and t == 1 short-circuit to
// the exact endpoint frame. A degenerate denominator with both sides valid
// falls back to the plain blend (1-t) I0t + t I1t.
inline std::pair<Grid, Mask> merge_frames(const Grid& i0t, const Grid& i1t, const Grid& m0t,
                                          const Grid& m1t, const Mask& v0, const Mask& v1,
                                          float t, int threads = 1) {
    require_same_shape(i0t, i1t, "merge_frames");
    require_same_extent(i0t, m0t, "merge_frames");
    require_same_extent(i0t, m1t, "merge_frames");
    require_same_extent(i0t, v0, "merge_frames");
    require_same_extent(i0t, v1, "merge_frames");
    require_channels(m0t, 1, "merge_frames");
    require_channels(m1t, 1, "merge_frames");
    constexpr float kDegenerateEps = 1e-7f;
    const int h = i0t.height(), w = i0t.width(), ch = i0t.channels();
    Grid out(h, w, ch);
    Mask mask(h, w, 1);
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* a = i0t.row(y);
            const float* b = i1t.row(y);
            const float* m0 = m0t.row(y);
            const float* m1 = m1t.row(y);
            const float* p0 = v0.row(y);
            const float* p1 = v1.row(y);
            float* o = out.row(y);
            float* mk = mask.row(y);
            for (int x = 0; x < w; ++x) {
                const bool b0 = p0[x] != 0.0f;
                const bool b1 = p1[x] != 0.0f;
                if (b0 && b1) {
                    if (t == 0.0f) {
                        for (int c = 0; c < ch; ++c) o[x * ch + c] = a[x * ch + c];
                    } else if (t == 1.0f) {
                        for (int c = 0; c < ch; ++c) o[x * ch + c] = b[x * ch + c];
                    } else {
                        const float w0 = (1.0f - t) * m0[x];
                        const float w1 = t * m1[x];
                        const float den = w0 + w1;
                        if (den < kDegenerateEps) {
                            for (int c = 0; c < ch; ++c)
                                o[x * ch + c] = (1.0f - t) * a[x * ch + c] + t * b[x * ch + c];
                        } else {
                            const float inv = 1.0f / den;
                            for (int c = 0; c < ch; ++c)
                                o[x * ch + c] = (w0 * a[x * ch + c] + w1 * b[x * ch + c]) * inv;
                        }
                    }
                    mk[x] = 1.0f;
                } else if (b0) {
                    for (int c = 0; c < ch; ++c) o[x * ch + c] = a[x * ch + c];
                    mk[x] = 1.0f;
                } else if (b1) {
                    for (int c = 0; c < ch; ++c) o[x * ch + c] = b[x * ch + c];
                    mk[x] = 1.0f;
                } else {
                    for (int c = 0; c < ch; ++c) o[x * ch + c] = 0.0f;
                    mk[x] = 0.0f;
                }
            }
        }
    });
    return {std::move(out), std::move(mask)};
}

// Per-pair state shared by every interpolated frame: the reliability maps and
// both directions' splat/merge metrics depend only on the inter-frame flows,
// so they are computed once. References the inputs; keep them alive.
struct SynthesisContext {
    const Grid* i0 = nullptr;
    const Grid* i1 = nullptr;
    const FlowField* f01 = nullptr;
    const FlowField* f10 = nullptr;
    Grid msplat0, mmerge0, msplat1, mmerge1;
    Grid ez0, ez1;  // exp(msplat), reused by the fast projection path
    bool fast_projection = false;
    SynthesisConfig cfg;
};

inline SynthesisContext prepare_synthesis(const Grid& i0, const Grid& i1, const FlowField& f01,
                                          const FlowField& f10, const SynthesisConfig& cfg) {
    require_same_shape(i0, i1, "synthesize");
    require_same_extent(i0, f01, "synthesize");
    require_same_shape(f01, f10, "synthesize");
    require_channels(f01, 2, "synthesize");
    const int threads = cfg.threads;
    SynthesisContext ctx;
    ctx.i0 = &i0;
    ctx.i1 = &i1;
    ctx.f01 = &f01;
    ctx.f10 = &f10;
    ctx.cfg = cfg;

    const MetricParams& m = cfg.metrics;
    {
        Grid pp = psi_photo(i0, i1, f01, threads);
        Grid pf = psi_flow(f01, f10, threads);
        Grid pv = psi_varia(f01, threads);
        ctx.msplat0 = combine(pp, pf, pv, m.splat_photo, m.splat_flow, m.splat_varia, threads);
        ctx.mmerge0 = combine(pp, pf, pv, m.merge_photo, m.merge_flow, m.merge_varia, threads);
    }
    {
        Grid pp = psi_photo(i1, i0, f10, threads);
        Grid pf = psi_flow(f10, f01, threads);
        Grid pv = psi_varia(f10, threads);
        ctx.msplat1 = combine(pp, pf, pv, m.splat_photo, m.splat_flow, m.splat_varia, threads);
        ctx.mmerge1 = combine(pp, pf, pv, m.merge_photo, m.merge_flow, m.merge_varia, threads);
    }
    ctx.fast_projection =
        cfg.kernel.variant == SplatKernel::Variant::Gaussian4x4 && threads <= 1 &&
        detail::max_abs_value(ctx.msplat0) <= detail::kFastviableZLimit &&
        detail::max_abs_value(ctx.msplat1) <= detail::kFastviableZLimit;
    if (ctx.fast_projection) {
        ctx.ez0 = detail::exp_grid(ctx.msplat0);
        ctx.ez1 = detail::exp_grid(ctx.msplat1);
    }
    return ctx;
}

// The per-frame part of the pipeline: scale flows to t, project them (and the
// merge metrics) forward, backward-warp the input frames along the projected
// flows, merge, fill residual holes.
inline Grid synthesize_frame(const SynthesisContext& ctx, float t) {
    if (!(t >= 0.0f && t <= 1.0f))
        throw std::invalid_argument("synthesize: t must be in [0, 1]");
    const SynthesisConfig& cfg = ctx.cfg;
    const int threads = cfg.threads;

    if (ctx.fast_projection) {
        detail::ProjectionAccum a0 = detail::project_flow_gaussian_accumulate(
            *ctx.f01, t, ctx.msplat0, ctx.ez0, ctx.mmerge0, cfg.kernel.sigma, 0);
        detail::ProjectionAccum a1 = detail::project_flow_gaussian_accumulate(
            *ctx.f10, 1.0f - t, ctx.msplat1, ctx.ez1, ctx.mmerge1, cfg.kernel.sigma, 1);
        return detail::finalize_frame_fast(a0, a1, *ctx.i0, *ctx.i1, t, cfg.eps_valid);
    }

    FlowField f0t = time_scaled_flow(*ctx.f01, t);
    FlowField f1t = time_scaled_flow(*ctx.f10, 1.0f - t);
    Projection p0 = project_flow(f0t, ctx.msplat0, ctx.mmerge0, cfg.kernel, cfg.eps_valid, threads);
    Projection p1 = project_flow(f1t, ctx.msplat1, ctx.mmerge1, cfg.kernel, cfg.eps_valid, threads);

    auto [i0t, w0] = backward_warp(*ctx.i0, p0.flow_back, threads);
    auto [i1t, w1] = backward_warp(*ctx.i1, p1.flow_back, threads);

    // A projected pixel is usable if it received enough splat weight and its
    // back-warp sample landed inside the source frame.
    for (std::size_t i = 0; i < w0.size(); ++i)
        w0.data()[i] = (w0.data()[i] != 0.0f && p0.valid.data()[i] != 0.0f) ? 1.0f : 0.0f;
    for (std::size_t i = 0; i < w1.size(); ++i)
        w1.data()[i] = (w1.data()[i] != 0.0f && p1.valid.data()[i] != 0.0f) ? 1.0f : 0.0f;

    auto [out, mask] = merge_frames(i0t, i1t, p0.merge_metric, p1.merge_metric, w0, w1, t, threads);

    const int h = out.height(), w = out.width(), ch = out.channels();
    parallel_rows(h, threads, [&](int ys, int ye) {
        for (int y = ys; y < ye; ++y) {
            const float* mk = mask.row(y);
            const float* a = ctx.i0->row(y);
            const float* b = ctx.i1->row(y);
            float* o = out.row(y);
            for (int x = 0; x < w; ++x) {
                if (mk[x] != 0.0f) continue;
                for (int c = 0; c < ch; ++c)
                    o[x * ch + c] = (1.0f - t) * a[x * ch + c] + t * b[x * ch + c];
            }
        }
    });
    return out;
}

inline Grid synthesize(const Grid& i0, const Grid& i1, const FlowField& f01, const FlowField& f10,
                       float t, const SynthesisConfig& cfg = {}) {
    SynthesisContext ctx = prepare_synthesis(i0, i1, f01, f10, cfg);
    return synthesize_frame(ctx, t);
}

// Multi-frame synthesis: the metric maps are prepared once and reused, so the
// marginal cost of each extra frame is flow scaling + projection + warping +
// merging only. Matches per-t synthesize calls exactly.
inline std::vector<Grid> synthesize_multi(const Grid& i0, const Grid& i1, const FlowField& f01,
                                          const FlowField& f10, const std::vector<float>& times,
                                          const SynthesisConfig& cfg = {}) {
    for (float t : times) {
        if (!(t >= 0.0f && t <= 1.0f))
            throw std::invalid_argument("synthesize_multi: times must be in [0, 1]");
    }
    std::vector<Grid> frames;
    if (times.empty()) {
        require_same_shape(i0, i1, "synthesize_multi");
        return frames;
    }
    SynthesisContext ctx = prepare_synthesis(i0, i1, f01, f10, cfg);
    frames.reserve(times.size());
    for (float t : times) frames.push_back(synthesize_frame(ctx, t));
    return frames;
}

// Direct color splatting: softmax-splat the image itself to time t. Kept as a
// comparison surface; it softens detail that the flow-splat route preserves.
inline std::pair<Grid, Mask> forward_warp_direct(const Grid& image, const FlowField& f_to_t,
                                                 const Grid& msplat, const SplatKernel& kernel,
                                                 float eps_valid, int threads = 1) {
    SplatResult r = splat_softmax(image, f_to_t, msplat, kernel, SoftmaxMode::Stable, threads);
    const int h = image.height(), w = image.width(), ch = image.channels();
    Grid out(h, w, ch);
    Mask valid(h, w, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (r.weight.at(y, x) > eps_valid) {
                const float inv = 1.0f / r.weight.at(y, x);
                for (int c = 0; c < ch; ++c) out.at(y, x, c) = r.value.at(y, x, c) * inv;
                valid.at(y, x) = 1.0f;
            }
        }
    }
    return {std::move(out), std::move(valid)};
}

// Flow splatting route: project the flow to time t, then backward-warp the
// image along the projected flow.
inline std::pair<Grid, Mask> forward_warp_via_flow(const Grid& image, const FlowField& f_to_t,
                                                   const Grid& msplat, const SplatKernel& kernel,
                                                   float eps_valid, int threads = 1) {
    Grid dummy_metric(f_to_t.height(), f_to_t.width(), 1);
    Projection p = project_flow(f_to_t, msplat, dummy_metric, kernel, eps_valid, threads);
    auto [out, inb] = backward_warp(image, p.flow_back, threads);
    for (std::size_t i = 0; i < inb.size(); ++i)
        inb.data()[i] = (inb.data()[i] != 0.0f && p.valid.data()[i] != 0.0f) ? 1.0f : 0.0f;
    return {std::move(out), std::move(inb)};
}

}  // namespace splatkit
