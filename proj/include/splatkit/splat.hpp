#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>

#include "splatkit/grid.hpp"
#include "splatkit/parallel.hpp"

namespace splatkit {

// Forward-warping kernels. The bilinear kernel b(u) = max(0, 1-|u_x|) *
// max(0, 1-|u_y|) has a 2x2 footprint; the Gaussian kernel
// w(u) = exp(-(u_x^2 + u_y^2) / (2 sigma^2)) is evaluated on the 4x4 integer
// positions from floor(target)-1 to floor(target)+2 in each axis. Gaussian
// weights are intentionally unnormalized: softmax splatting divides the
// accumulated numerator by the accumulated denominator, which cancels any
// global kernel scale.
struct SplatKernel {
    enum class Variant { Bilinear2x2, Gaussian4x4 };

    Variant variant = Variant::Gaussian4x4;
    float sigma = 1.0f;

    static SplatKernel bilinear() { return {Variant::Bilinear2x2, 1.0f}; }
    static SplatKernel gaussian(float sigma = 1.0f) {
        if (!(sigma > 0.0f)) throw std::invalid_argument("SplatKernel: sigma must be positive");
        return {Variant::Gaussian4x4, sigma};
    }
};

// Denominators at or below this threshold mark a destination as not validly
// covered. Well above the subnormal range, well below any single bilinear
// weight a practical flow produces.
constexpr float kSplatValidEps = 1e-7f;

struct SplatResult {
    Grid value;   // numerator accumulation, same channel count as the input
    Grid weight;  // denominator accumulation, single channel
    Mask valid;   // weight > kSplatValidEps

    // value / weight where valid, `fill` elsewhere.
    Grid normalized(float fill = 0.0f) const {
        Grid out(value.height(), value.width(), value.channels(), fill);
        const int ch = value.channels();
        for (int y = 0; y < value.height(); ++y) {
            for (int x = 0; x < value.width(); ++x) {
                if (valid.at(y, x) == 0.0f) continue;
                const float inv = 1.0f / weight.at(y, x);
                for (int c = 0; c < ch; ++c) out.at(y, x, c) = value.at(y, x, c) * inv;
            }
        }
        return out;
    }
};

enum class SoftmaxMode { Naive, Stable };

namespace detail {

// Flow components at or beyond this magnitude are treated as unknown and the
// source pixel is skipped (Middlebury convention; also guards NaN).
constexpr float kFlowLimit = 1e9f;

// exp underflows to zero below roughly -103; Gaussian taps whose exponent
// argument exceeds this are treated as zero-weight for footprint membership.
constexpr float kGaussianArgCutoff = 103.0f;

struct BilinearEval {
    static constexpr int extent = 2;
    int x0 = 0, y0 = 0;
    float wx[2] = {0, 0}, wy[2] = {0, 0};

    void bind(const SplatKernel&) {}
    void setup(float tx, float ty) {
        const float bx = std::floor(tx);
        const float by = std::floor(ty);
        x0 = static_cast<int>(bx);
        y0 = static_cast<int>(by);
        const float fx = tx - bx;
        const float fy = ty - by;
        wx[0] = 1.0f - fx;
        wx[1] = fx;
        wy[0] = 1.0f - fy;
        wy[1] = fy;
    }
    bool member(int i, int j) const { return wx[i] > 0.0f && wy[j] > 0.0f; }
    float weight(int i, int j) const { return wx[i] * wy[j]; }
    float weight_shifted(int i, int j, float shift) const {
        return wx[i] * wy[j] * std::exp(shift);
    }
};

struct GaussianEval {
    static constexpr int extent = 4;
    int x0 = 0, y0 = 0;
    float dx2[4] = {0, 0, 0, 0}, dy2[4] = {0, 0, 0, 0};
    float inv2s2 = 0.5f;

    void bind(const SplatKernel& k) { inv2s2 = 1.0f / (2.0f * k.sigma * k.sigma); }
    void setup(float tx, float ty) {
        x0 = static_cast<int>(std::floor(tx)) - 1;
        y0 = static_cast<int>(std::floor(ty)) - 1;
        for (int i = 0; i < 4; ++i) {
            const float dx = static_cast<float>(x0 + i) - tx;
            const float dy = static_cast<float>(y0 + i) - ty;
            dx2[i] = dx * dx;
            dy2[i] = dy * dy;
        }
    }
    float arg(int i, int j) const { return (dx2[i] + dy2[j]) * inv2s2; }
    bool member(int i, int j) const { return arg(i, j) < kGaussianArgCutoff; }
    float weight(int i, int j) const { return std::exp(-arg(i, j)); }
    float weight_shifted(int i, int j, float shift) const {
        return std::exp(shift - arg(i, j));
    }
};

template <bool Atomic>
inline void accum_add(float& slot, float v) {
    if constexpr (Atomic) {
        std::atomic_ref<float>(slot).fetch_add(v, std::memory_order_relaxed);
    } else {
        slot += v;
    }
}

template <bool Atomic>
inline void accum_max(float& slot, float v) {
    if constexpr (Atomic) {
        std::atomic_ref<float> ref(slot);
        float cur = ref.load(std::memory_order_relaxed);
        while (v > cur && !ref.compare_exchange_weak(cur, v, std::memory_order_relaxed)) {
        }
    } else {
        if (v > slot) slot = v;
    }
}

template <class Eval>
inline bool splat_target(const float* frow, int x, int y, Eval& eval) {
    const float u = frow[2 * x + 0];
    const float v = frow[2 * x + 1];
    if (!(std::fabs(u) < kFlowLimit) || !(std::fabs(v) < kFlowLimit)) return false;
    eval.setup(static_cast<float>(x) + u, static_cast<float>(y) + v);
    return true;
}

template <class Eval, bool Atomic>
void splat_sum_rows(const Grid& v, const FlowField& flow, const SplatKernel& kernel,
                    Grid& value, Grid& weight, int ys, int ye) {
    const int h = v.height(), w = v.width(), ch = v.channels();
    Eval eval;
    eval.bind(kernel);
    for (int y = ys; y < ye; ++y) {
        const float* frow = flow.row(y);
        const float* vrow = v.row(y);
        for (int x = 0; x < w; ++x) {
            if (!splat_target(frow, x, y, eval)) continue;
            for (int j = 0; j < Eval::extent; ++j) {
                const int py = eval.y0 + j;
                if (py < 0 || py >= h) continue;
                for (int i = 0; i < Eval::extent; ++i) {
                    const int px = eval.x0 + i;
                    if (px < 0 || px >= w || !eval.member(i, j)) continue;
                    const float wt = eval.weight(i, j);
                    const std::size_t base = value.index(py, px, 0);
                    for (int c = 0; c < ch; ++c)
                        accum_add<Atomic>(value.data()[base + c], wt * vrow[x * ch + c]);
                    accum_add<Atomic>(weight.data()[weight.index(py, px)], wt);
                }
            }
        }
    }
}

template <class Eval, bool Atomic>
void splat_max_rows(const Grid& z, const FlowField& flow, const SplatKernel& kernel,
                    Grid& out, int ys, int ye) {
    const int h = z.height(), w = z.width();
    Eval eval;
    eval.bind(kernel);
    for (int y = ys; y < ye; ++y) {
        const float* frow = flow.row(y);
        const float* zrow = z.row(y);
        for (int x = 0; x < w; ++x) {
            if (!splat_target(frow, x, y, eval)) continue;
            const float zq = zrow[x];
            for (int j = 0; j < Eval::extent; ++j) {
                const int py = eval.y0 + j;
                if (py < 0 || py >= h) continue;
                for (int i = 0; i < Eval::extent; ++i) {
                    const int px = eval.x0 + i;
                    if (px < 0 || px >= w || !eval.member(i, j)) continue;
                    accum_max<Atomic>(out.data()[out.index(py, px)], zq);
                }
            }
        }
    }
}

// shift_of(x, zq) yields the exponent shift: zq for naive splatting,
// zq - zmax[target] for stable splatting.
template <class Eval, bool Atomic, class ShiftFn>
void splat_exp_rows(const Grid& v, const FlowField& flow, const Grid& z,
                    const SplatKernel& kernel, const ShiftFn& shift_of, Grid& value,
                    Grid& weight, int ys, int ye) {
    const int h = v.height(), w = v.width(), ch = v.channels();
    Eval eval;
    eval.bind(kernel);
    for (int y = ys; y < ye; ++y) {
        const float* frow = flow.row(y);
        const float* vrow = v.row(y);
        const float* zrow = z.row(y);
        for (int x = 0; x < w; ++x) {
            if (!splat_target(frow, x, y, eval)) continue;
            const float zq = zrow[x];
            for (int j = 0; j < Eval::extent; ++j) {
                const int py = eval.y0 + j;
                if (py < 0 || py >= h) continue;
                for (int i = 0; i < Eval::extent; ++i) {
                    const int px = eval.x0 + i;
                    if (px < 0 || px >= w || !eval.member(i, j)) continue;
                    const float wt = eval.weight_shifted(i, j, shift_of(py, px, zq));
                    const std::size_t base = value.index(py, px, 0);
                    for (int c = 0; c < ch; ++c)
                        accum_add<Atomic>(value.data()[base + c], wt * vrow[x * ch + c]);
                    accum_add<Atomic>(weight.data()[weight.index(py, px)], wt);
                }
            }
        }
    }
}

inline Mask weight_validity(const Grid& weight) {
    Mask valid(weight.height(), weight.width(), 1);
    for (std::size_t i = 0; i < weight.size(); ++i)
        valid.data()[i] = weight.data()[i] > kSplatValidEps ? 1.0f : 0.0f;
    return valid;
}

}  // namespace detail

// Kernel weight for an offset u = p - (q + flow[q]) between destination pixel
// p and the continuous splat target of source q.
inline float kernel_weight(float ux, float uy, const SplatKernel& kernel) {
    if (kernel.variant == SplatKernel::Variant::Bilinear2x2) {
        return std::max(0.0f, 1.0f - std::fabs(ux)) * std::max(0.0f, 1.0f - std::fabs(uy));
    }
    // 4x4 footprint: offsets live in (-2, 2] per axis around the target.
    if (ux <= -2.0f || ux > 2.0f || uy <= -2.0f || uy > 2.0f) return 0.0f;
    const float inv2s2 = 1.0f / (2.0f * kernel.sigma * kernel.sigma);
    return std::exp(-((ux * ux + uy * uy) * inv2s2));
}

// Summation splatting: every source pixel q scatters w * v[q] into value and
// w into weight for each destination p in the kernel footprint of
// q + flow[q]. Targets outside the grid are dropped, not clamped.
inline SplatResult splat_sum(const Grid& v, const FlowField& flow, const SplatKernel& kernel,
                             int threads = 1) {
    require_same_extent(v, flow, "splat_sum");
    require_channels(flow, 2, "splat_sum");
    SplatResult r;
    r.value = Grid(v.height(), v.width(), v.channels());
    r.weight = Grid(v.height(), v.width(), 1);
    using V = SplatKernel::Variant;
    parallel_rows(v.height(), threads, [&](int ys, int ye) {
        if (threads <= 1) {
            if (kernel.variant == V::Bilinear2x2)
                detail::splat_sum_rows<detail::BilinearEval, false>(v, flow, kernel, r.value,
                                                                    r.weight, ys, ye);
            else
                detail::splat_sum_rows<detail::GaussianEval, false>(v, flow, kernel, r.value,
                                                                    r.weight, ys, ye);
        } else {
            if (kernel.variant == V::Bilinear2x2)
                detail::splat_sum_rows<detail::BilinearEval, true>(v, flow, kernel, r.value,
                                                                   r.weight, ys, ye);
            else
                detail::splat_sum_rows<detail::GaussianEval, true>(v, flow, kernel, r.value,
                                                                   r.weight, ys, ye);
        }
    });
    r.valid = detail::weight_validity(r.weight);
    return r;
}

// Max splatting: out[p] is the maximum z[q] over all sources whose kernel
// footprint covers p with nonzero weight. Uncovered pixels carry the lowest
// finite float as sentinel. Used as the pre-pass that makes softmax splatting
// numerically stable; not differentiable, and does not need to be.
inline Grid splat_max(const Grid& z, const FlowField& flow, const SplatKernel& kernel,
                      int threads = 1) {
    require_same_extent(z, flow, "splat_max");
    require_channels(z, 1, "splat_max");
    require_channels(flow, 2, "splat_max");
    Grid out(z.height(), z.width(), 1, std::numeric_limits<float>::lowest());
    using V = SplatKernel::Variant;
    parallel_rows(z.height(), threads, [&](int ys, int ye) {
        if (threads <= 1) {
            if (kernel.variant == V::Bilinear2x2)
                detail::splat_max_rows<detail::BilinearEval, false>(z, flow, kernel, out, ys, ye);
            else
                detail::splat_max_rows<detail::GaussianEval, false>(z, flow, kernel, out, ys, ye);
        } else {
            if (kernel.variant == V::Bilinear2x2)
                detail::splat_max_rows<detail::BilinearEval, true>(z, flow, kernel, out, ys, ye);
            else
                detail::splat_max_rows<detail::GaussianEval, true>(z, flow, kernel, out, ys, ye);
        }
    });
    return out;
}

// Softmax splatting: summation splatting with per-source weights scaled by
// exp(z). Naive mode exponentiates z[q] directly and overflows once z exceeds
// roughly 88; it exists for tests and comparisons. Stable mode first
// max-splats z to the destinations and uses exp(z[q] - zmax[p]) per tap, so
// every exponent argument is nonpositive and the result is finite for any
// finite z. A global shift of z leaves stable results unchanged.
inline SplatResult splat_softmax(const Grid& v, const FlowField& flow, const Grid& z,
                                 const SplatKernel& kernel, SoftmaxMode mode,
                                 int threads = 1) {
    require_same_extent(v, flow, "splat_softmax");
    require_same_extent(v, z, "splat_softmax");
    require_channels(z, 1, "splat_softmax");
    require_channels(flow, 2, "splat_softmax");
    SplatResult r;
    r.value = Grid(v.height(), v.width(), v.channels());
    r.weight = Grid(v.height(), v.width(), 1);

    Grid zmax;
    if (mode == SoftmaxMode::Stable) zmax = splat_max(z, flow, kernel, threads);

    const auto shift_naive = [](int, int, float zq) { return zq; };
    const auto shift_stable = [&zmax](int py, int px, float zq) {
        return zq - zmax.at(py, px);
    };

    using V = SplatKernel::Variant;
    parallel_rows(v.height(), threads, [&](int ys, int ye) {
        const auto run = [&](auto eval_tag, auto atomic_tag, const auto& shift) {
            using Eval = decltype(eval_tag);
            detail::splat_exp_rows<Eval, decltype(atomic_tag)::value>(v, flow, z, kernel, shift,
                                                                      r.value, r.weight, ys, ye);
        };
        const bool atomic = threads > 1;
        if (kernel.variant == V::Bilinear2x2) {
            if (mode == SoftmaxMode::Stable) {
                atomic ? run(detail::BilinearEval{}, std::true_type{}, shift_stable)
                       : run(detail::BilinearEval{}, std::false_type{}, shift_stable);
            } else {
                atomic ? run(detail::BilinearEval{}, std::true_type{}, shift_naive)
                       : run(detail::BilinearEval{}, std::false_type{}, shift_naive);
            }
        } else {
            if (mode == SoftmaxMode::Stable) {
                atomic ? run(detail::GaussianEval{}, std::true_type{}, shift_stable)
                       : run(detail::GaussianEval{}, std::false_type{}, shift_stable);
            } else {
                atomic ? run(detail::GaussianEval{}, std::true_type{}, shift_naive)
                       : run(detail::GaussianEval{}, std::false_type{}, shift_naive);
            }
        }
    });
    r.valid = detail::weight_validity(r.weight);
    return r;
}

}  // namespace splatkit
