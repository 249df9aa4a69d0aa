#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "msaan/tensor.hpp"

// Forward tensor kernels. All of them are pure functions with deterministic
// reduction order; per-element accumulation happens in double regardless of
// the storage scalar.

namespace msaan {

namespace detail {

template <std::floating_point S>
void check_conv_args(const TensorT<S>& x, const TensorT<S>& kernel, std::span<const S> bias, int stride, int pad,
                     int groups) {
    MSAAN_CHECK(stride >= 1, "conv2d stride must be >= 1");
    MSAAN_CHECK(pad >= 0, "conv2d pad must be >= 0");
    MSAAN_CHECK(groups >= 1, "conv2d groups must be >= 1");
    const int kh = kernel.dims.h, kw = kernel.dims.w;
    MSAAN_CHECK(kh == kw && (kh == 1 || kh == 3), "conv2d kernel must be 1x1 or 3x3");
    MSAAN_CHECK(kernel.dims.n % groups == 0, "conv2d c_out must be divisible by groups");
    MSAAN_CHECK(x.dims.c == groups * kernel.dims.c,
                "conv2d input channels " + std::to_string(x.dims.c) + " != groups*c_in_per_group " +
                    std::to_string(groups * kernel.dims.c));
    MSAAN_CHECK(bias.empty() || static_cast<int>(bias.size()) == kernel.dims.n,
                "conv2d bias length must equal c_out");
    MSAAN_CHECK(x.dims.h + 2 * pad >= kh && x.dims.w + 2 * pad >= kw, "conv2d input too small for kernel");
}

}  // namespace detail

// Cross-correlation (no kernel flip), zero padding.
template <std::floating_point S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& kernel, std::span<const S> bias, int stride, int pad,
                  int groups = 1) {
    detail::check_conv_args(x, kernel, bias, stride, pad, groups);
    const int kh = kernel.dims.h, kw = kernel.dims.w;
    const int c_out = kernel.dims.n, c_in_g = kernel.dims.c;
    const int oh = (x.dims.h + 2 * pad - kh) / stride + 1;
    const int ow = (x.dims.w + 2 * pad - kw) / stride + 1;
    const int out_per_group = c_out / groups;
    const int H = x.dims.h, W = x.dims.w;
    TensorT<S> out(x.dims.n, c_out, oh, ow);

    // One tap at a time, swept along contiguous rows into a per-plane double
    // accumulator; the tap order is fixed, so results are deterministic.
    const int64_t plane_work = int64_t(oh) * ow * c_in_g * kh * kw;
    parallel_for(int64_t(x.dims.n) * c_out, [&](int64_t plane) {
        const int n = static_cast<int>(plane / c_out);
        const int co = static_cast<int>(plane % c_out);
        const int g = co / out_per_group;
        std::vector<double> acc(int64_t(oh) * ow, bias.empty() ? 0.0 : static_cast<double>(bias[co]));
        for (int ci = 0; ci < c_in_g; ++ci) {
            const S* src = x.plane(n, g * c_in_g + ci);
            const S* wk = kernel.plane(co, ci);
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const double wv = static_cast<double>(wk[ky * kw + kx]);
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H) continue;
                        // valid ox range for this horizontal tap
                        int lo = 0, hi = ow;
                        while (lo < hi && lo * stride + kx - pad < 0) ++lo;
                        while (hi > lo && (hi - 1) * stride + kx - pad >= W) --hi;
                        const S* srow = src + int64_t(iy) * W + (lo * stride + kx - pad);
                        double* arow = acc.data() + int64_t(oy) * ow;
                        if (stride == 1) {
                            for (int ox = lo; ox < hi; ++ox) arow[ox] += wv * static_cast<double>(srow[ox - lo]);
                        } else {
                            for (int ox = lo; ox < hi; ++ox)
                                arow[ox] += wv * static_cast<double>(srow[int64_t(ox - lo) * stride]);
                        }
                    }
                }
            }
        }
        S* dst = out.plane(n, co);
        for (int64_t i = 0; i < int64_t(oh) * ow; ++i) dst[i] = static_cast<S>(acc[i]);
    }, grain_for(plane_work));
    return out;
}

template <std::floating_point S>
TensorT<S> conv2d(const TensorT<S>& x, const ConvWeightsT<S>& w, int stride, int pad) {
    return conv2d<S>(x, w.kernel, std::span<const S>(w.bias), stride, pad, w.groups);
}

// Per-channel 3x3 spatial filter, stride 1, pad 1.
template <std::floating_point S>
TensorT<S> depthwise_conv2d(const TensorT<S>& x, const TensorT<S>& kernel, std::span<const S> bias) {
    MSAAN_CHECK(kernel.dims.n == x.dims.c && kernel.dims.c == 1,
                "depthwise_conv2d requires groups == channels (kernel dims (c,1,3,3))");
    MSAAN_CHECK(kernel.dims.h == 3 && kernel.dims.w == 3, "depthwise_conv2d kernel must be 3x3");
    return conv2d<S>(x, kernel, bias, /*stride=*/1, /*pad=*/1, /*groups=*/x.dims.c);
}

template <std::floating_point S>
TensorT<S> depthwise_conv2d(const TensorT<S>& x, const ConvWeightsT<S>& w) {
    MSAAN_CHECK(w.groups == x.dims.c, "depthwise_conv2d requires groups == channels");
    return depthwise_conv2d<S>(x, w.kernel, std::span<const S>(w.bias));
}

// Output cell (i,j) takes the max over input rows [floor(i*h/oh), ceil((i+1)*h/oh))
// and the analogous column window; every input pixel is covered.
// When argmax is non-null it receives the flat input index of each maximum
// (first occurrence in row-major scan order, so ties resolve to the lowest
// linear index).
template <std::floating_point S>
TensorT<S> adaptive_max_pool(const TensorT<S>& x, int out_h, int out_w, std::vector<int64_t>* argmax = nullptr) {
    MSAAN_CHECK(out_h >= 1 && out_w >= 1 && out_h <= x.dims.h && out_w <= x.dims.w,
                "adaptive_max_pool output dims must be within [1, input dims]");
    TensorT<S> out(x.dims.n, x.dims.c, out_h, out_w);
    if (argmax) argmax->assign(out.numel(), -1);

    const int64_t planes = int64_t(x.dims.n) * x.dims.c;
    const int64_t plane_work = int64_t(x.dims.h) * x.dims.w;
    parallel_for(planes, [&](int64_t plane) {
        const int n = static_cast<int>(plane / x.dims.c);
        const int c = static_cast<int>(plane % x.dims.c);
        const S* src = x.plane(n, c);
        S* dst = out.plane(n, c);
        for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = static_cast<int>((int64_t(oy) * x.dims.h) / out_h);
            const int y1 = static_cast<int>((int64_t(oy + 1) * x.dims.h + out_h - 1) / out_h);
            for (int ox = 0; ox < out_w; ++ox) {
                const int x0 = static_cast<int>((int64_t(ox) * x.dims.w) / out_w);
                const int x1 = static_cast<int>((int64_t(ox + 1) * x.dims.w + out_w - 1) / out_w);
                S best = src[int64_t(y0) * x.dims.w + x0];
                int64_t best_idx = x.index(n, c, y0, x0);
                for (int iy = y0; iy < y1; ++iy) {
                    for (int ix = x0; ix < x1; ++ix) {
                        const S v = src[int64_t(iy) * x.dims.w + ix];
                        if (v > best) {
                            best = v;
                            best_idx = x.index(n, c, iy, ix);
                        }
                    }
                }
                dst[int64_t(oy) * out_w + ox] = best;
                if (argmax) (*argmax)[out.index(n, c, oy, ox)] = best_idx;
            }
        }
    }, grain_for(plane_work));
    return out;
}

// out(i,j) = in(floor(i*h/out_h), floor(j*w/out_w))
template <std::floating_point S>
TensorT<S> nearest_upsample(const TensorT<S>& x, int out_h, int out_w) {
    MSAAN_CHECK(out_h >= x.dims.h && out_w >= x.dims.w, "nearest_upsample output dims must be >= input dims");
    TensorT<S> out(x.dims.n, x.dims.c, out_h, out_w);
    const int64_t planes = int64_t(x.dims.n) * x.dims.c;
    parallel_for(planes, [&](int64_t plane) {
        const int n = static_cast<int>(plane / x.dims.c);
        const int c = static_cast<int>(plane % x.dims.c);
        const S* src = x.plane(n, c);
        S* dst = out.plane(n, c);
        for (int oy = 0; oy < out_h; ++oy) {
            const int iy = static_cast<int>((int64_t(oy) * x.dims.h) / out_h);
            for (int ox = 0; ox < out_w; ++ox) {
                const int ix = static_cast<int>((int64_t(ox) * x.dims.w) / out_w);
                dst[int64_t(oy) * out_w + ox] = src[int64_t(iy) * x.dims.w + ix];
            }
        }
    }, grain_for(int64_t(out_h) * out_w));
    return out;
}

namespace detail {

// Half-pixel source coordinate (align-corners = false), clamped to the grid.
inline double source_coord(int out_idx, int in_size, int out_size) {
    const double c = (out_idx + 0.5) * static_cast<double>(in_size) / out_size - 0.5;
    return std::clamp(c, 0.0, static_cast<double>(in_size - 1));
}

struct AxisTap {
    int start = 0;
    std::vector<double> weights;  // normalized, clamped-to-edge
};

inline double keys_cubic(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

// Bicubic taps for one axis. When downscaling, the kernel is stretched by the
// downscale factor (antialiasing). Out-of-range taps fold onto the clamped
// edge sample; weights are normalized to sum to 1.
inline std::vector<AxisTap> bicubic_taps(int in_size, int out_size) {
    const double ratio = static_cast<double>(out_size) / in_size;
    const double kscale = std::min(ratio, 1.0);
    const double support = 2.0 / kscale;
    std::vector<AxisTap> taps(out_size);
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) / ratio - 0.5;
        const int jlo = static_cast<int>(std::ceil(center - support));
        const int jhi = static_cast<int>(std::floor(center + support));
        const int clo = std::clamp(jlo, 0, in_size - 1);
        const int chi = std::clamp(jhi, 0, in_size - 1);
        AxisTap tap;
        tap.start = clo;
        tap.weights.assign(chi - clo + 1, 0.0);
        double total = 0.0;
        for (int j = jlo; j <= jhi; ++j) {
            const double w = keys_cubic((center - j) * kscale);
            const int jj = std::clamp(j, 0, in_size - 1);
            tap.weights[jj - clo] += w;
            total += w;
        }
        for (double& w : tap.weights) w /= total;
        taps[o] = std::move(tap);
    }
    return taps;
}

}  // namespace detail

// Separable linear interpolation with the half-pixel coordinate convention.
template <std::floating_point S>
TensorT<S> bilinear_resize(const TensorT<S>& x, int out_h, int out_w) {
    MSAAN_CHECK(out_h >= 1 && out_w >= 1, "bilinear_resize output dims must be >= 1");
    TensorT<S> out(x.dims.n, x.dims.c, out_h, out_w);
    const int64_t planes = int64_t(x.dims.n) * x.dims.c;
    parallel_for(planes, [&](int64_t plane) {
        const int n = static_cast<int>(plane / x.dims.c);
        const int c = static_cast<int>(plane % x.dims.c);
        const S* src = x.plane(n, c);
        S* dst = out.plane(n, c);
        for (int oy = 0; oy < out_h; ++oy) {
            const double sy = detail::source_coord(oy, x.dims.h, out_h);
            const int y0 = static_cast<int>(sy);
            const int y1 = std::min(y0 + 1, x.dims.h - 1);
            const double fy = sy - y0;
            for (int ox = 0; ox < out_w; ++ox) {
                const double sx = detail::source_coord(ox, x.dims.w, out_w);
                const int x0 = static_cast<int>(sx);
                const int x1 = std::min(x0 + 1, x.dims.w - 1);
                const double fx = sx - x0;
                const double top = (1.0 - fx) * src[int64_t(y0) * x.dims.w + x0] + fx * src[int64_t(y0) * x.dims.w + x1];
                const double bot = (1.0 - fx) * src[int64_t(y1) * x.dims.w + x0] + fx * src[int64_t(y1) * x.dims.w + x1];
                dst[int64_t(oy) * out_w + ox] = static_cast<S>((1.0 - fy) * top + fy * bot);
            }
        }
    }, grain_for(int64_t(out_h) * out_w * 8));
    return out;
}

// Separable Keys cubic (a = -0.5), antialiased on downscale.
template <std::floating_point S>
TensorT<S> bicubic_resize(const TensorT<S>& x, int out_h, int out_w) {
    MSAAN_CHECK(out_h >= 1 && out_w >= 1, "bicubic_resize output dims must be >= 1");
    const auto taps_x = detail::bicubic_taps(x.dims.w, out_w);
    const auto taps_y = detail::bicubic_taps(x.dims.h, out_h);
    TensorT<S> out(x.dims.n, x.dims.c, out_h, out_w);
    const int64_t planes = int64_t(x.dims.n) * x.dims.c;
    parallel_for(planes, [&](int64_t plane) {
        const int n = static_cast<int>(plane / x.dims.c);
        const int c = static_cast<int>(plane % x.dims.c);
        const S* src = x.plane(n, c);
        // horizontal pass, kept in double
        std::vector<double> tmp(int64_t(x.dims.h) * out_w);
        for (int iy = 0; iy < x.dims.h; ++iy) {
            const S* row = src + int64_t(iy) * x.dims.w;
            for (int ox = 0; ox < out_w; ++ox) {
                const auto& t = taps_x[ox];
                double acc = 0.0;
                for (size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * row[t.start + k];
                tmp[int64_t(iy) * out_w + ox] = acc;
            }
        }
        S* dst = out.plane(n, c);
        for (int oy = 0; oy < out_h; ++oy) {
            const auto& t = taps_y[oy];
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = 0.0;
                for (size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * tmp[int64_t(t.start + k) * out_w + ox];
                dst[int64_t(oy) * out_w + ox] = static_cast<S>(acc);
            }
        }
    }, grain_for(int64_t(x.dims.h + out_h) * out_w * 8));
    return out;
}

// out[n, c, i*r+di, j*r+dj] = in[n, c*r*r + di*r + dj, i, j]
template <std::floating_point S>
TensorT<S> pixel_shuffle(const TensorT<S>& x, int r) {
    MSAAN_CHECK(r >= 1, "pixel_shuffle factor must be >= 1");
    MSAAN_CHECK(x.dims.c % (r * r) == 0, "pixel_shuffle requires channels divisible by r^2");
    const int oc = x.dims.c / (r * r);
    TensorT<S> out(x.dims.n, oc, x.dims.h * r, x.dims.w * r);
    for (int n = 0; n < x.dims.n; ++n) {
        for (int c = 0; c < oc; ++c) {
            for (int di = 0; di < r; ++di) {
                for (int dj = 0; dj < r; ++dj) {
                    const S* src = x.plane(n, c * r * r + di * r + dj);
                    for (int i = 0; i < x.dims.h; ++i) {
                        S* dst = out.plane(n, c) + int64_t(i * r + di) * out.dims.w + dj;
                        for (int j = 0; j < x.dims.w; ++j) dst[int64_t(j) * r] = src[int64_t(i) * x.dims.w + j];
                    }
                }
            }
        }
    }
    return out;
}

// Normalizes the channel vector at each (n,h,w) position to zero mean / unit
// population variance, then applies the per-channel affine.
template <std::floating_point S>
TensorT<S> layer_norm(const TensorT<S>& x, std::span<const S> scale, std::span<const S> shift, S eps) {
    MSAAN_CHECK(eps > 0, "layer_norm eps must be > 0");
    MSAAN_CHECK(static_cast<int>(scale.size()) == x.dims.c && static_cast<int>(shift.size()) == x.dims.c,
                "layer_norm scale/shift length must equal channel count");
    TensorT<S> out(x.dims);
    const int C = x.dims.c;
    const int64_t hw = int64_t(x.dims.h) * x.dims.w;
    std::vector<double> mean(hw), inv(hw);
    for (int n = 0; n < x.dims.n; ++n) {
        std::fill(mean.begin(), mean.end(), 0.0);
        for (int c = 0; c < C; ++c) {
            const S* src = x.plane(n, c);
            for (int64_t p = 0; p < hw; ++p) mean[p] += src[p];
        }
        for (int64_t p = 0; p < hw; ++p) mean[p] /= C;
        std::fill(inv.begin(), inv.end(), 0.0);
        for (int c = 0; c < C; ++c) {
            const S* src = x.plane(n, c);
            for (int64_t p = 0; p < hw; ++p) {
                const double d = src[p] - mean[p];
                inv[p] += d * d;
            }
        }
        for (int64_t p = 0; p < hw; ++p) inv[p] = 1.0 / std::sqrt(inv[p] / C + static_cast<double>(eps));
        for (int c = 0; c < C; ++c) {
            const S* src = x.plane(n, c);
            S* dst = out.plane(n, c);
            const double sc = scale[c], sh = shift[c];
            for (int64_t p = 0; p < hw; ++p) dst[p] = static_cast<S>((src[p] - mean[p]) * inv[p] * sc + sh);
        }
    }
    return out;
}

// Exact Gaussian-CDF form: x * Phi(x), with the error function evaluated at
// the storage precision.
template <std::floating_point S>
S gelu_scalar(S x) {
    if constexpr (std::is_same_v<S, float>) {
        return x * 0.5f * (1.0f + std::erf(x * 0.70710678f));
    } else {
        return static_cast<S>(x * 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)));
    }
}

template <std::floating_point S>
TensorT<S> gelu(const TensorT<S>& x) {
    TensorT<S> out(x.dims);
    for (int64_t i = 0; i < x.numel(); ++i) out.data[i] = gelu_scalar(x.data[i]);
    return out;
}

// (n,c,1,1) spatial mean per channel.
template <std::floating_point S>
TensorT<S> global_avg_pool(const TensorT<S>& x) {
    TensorT<S> out(x.dims.n, x.dims.c, 1, 1);
    const int64_t hw = int64_t(x.dims.h) * x.dims.w;
    for (int n = 0; n < x.dims.n; ++n) {
        for (int c = 0; c < x.dims.c; ++c) {
            const S* src = x.plane(n, c);
            double acc = 0.0;
            for (int64_t i = 0; i < hw; ++i) acc += src[i];
            out.at(n, c, 0, 0) = static_cast<S>(acc / hw);
        }
    }
    return out;
}

// Five contiguous channel groups shifted one pixel left/right/up/down/none,
// zero fill at the vacated border.
template <std::floating_point S>
TensorT<S> shift5(const TensorT<S>& x) {
    MSAAN_CHECK(x.dims.c % 5 == 0, "shift_conv requires channels divisible by 5");
    const int gsize = x.dims.c / 5;
    TensorT<S> out(x.dims);
    const int H = x.dims.h, W = x.dims.w;
    for (int n = 0; n < x.dims.n; ++n) {
        for (int c = 0; c < x.dims.c; ++c) {
            const int dir = c / gsize;  // 0:left 1:right 2:up 3:down 4:none
            const S* src = x.plane(n, c);
            S* dst = out.plane(n, c);
            for (int y = 0; y < H; ++y) {
                for (int xx = 0; xx < W; ++xx) {
                    int sy = y, sx = xx;
                    switch (dir) {
                        case 0: sx = xx + 1; break;
                        case 1: sx = xx - 1; break;
                        case 2: sy = y + 1; break;
                        case 3: sy = y - 1; break;
                        default: break;
                    }
                    dst[int64_t(y) * W + xx] =
                        (sy < 0 || sy >= H || sx < 0 || sx >= W) ? S(0) : src[int64_t(sy) * W + sx];
                }
            }
        }
    }
    return out;
}

// Shift the channel groups, then apply a 1x1 convolution.
template <std::floating_point S>
TensorT<S> shift_conv(const TensorT<S>& x, const TensorT<S>& kernel, std::span<const S> bias) {
    MSAAN_CHECK(kernel.dims.h == 1 && kernel.dims.w == 1, "shift_conv uses a 1x1 kernel");
    return conv2d<S>(shift5(x), kernel, bias, 1, 0, 1);
}

template <std::floating_point S>
TensorT<S> shift_conv(const TensorT<S>& x, const ConvWeightsT<S>& w) {
    MSAAN_CHECK(w.groups == 1, "shift_conv kernel must be ungrouped");
    return shift_conv<S>(x, w.kernel, std::span<const S>(w.bias));
}

namespace detail {

// In-place radix-2 Cooley-Tukey; size must be a power of two.
inline void fft1d(std::complex<double>* a, int n, bool conjugate) {
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = (conjugate ? 2.0 : -2.0) * std::numbers::pi / len;
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// Unnormalized 2-D transform of one plane; conjugate=true applies the
// opposite twiddle sign (used by the frequency-loss adjoint).
inline void fft2d_plane(std::vector<std::complex<double>>& buf, int h, int w, bool conjugate) {
    for (int y = 0; y < h; ++y) fft1d(buf.data() + int64_t(y) * w, w, conjugate);
    std::vector<std::complex<double>> col(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[y] = buf[int64_t(y) * w + x];
        fft1d(col.data(), h, conjugate);
        for (int y = 0; y < h; ++y) buf[int64_t(y) * w + x] = col[y];
    }
}

}  // namespace detail

// Unnormalized forward 2-D DFT of each (n,c) plane:
// F(u,v) = sum_{i,j} x(i,j) * exp(-2*pi*i*(u*i/h + v*j/w)).
template <std::floating_point S>
ComplexTensorT<S> fft2(const TensorT<S>& x) {
    MSAAN_CHECK(is_pow2(x.dims.h) && is_pow2(x.dims.w), "fft2 requires power-of-two spatial dims");
    TensorT<S> re(x.dims), im(x.dims);
    const int64_t planes = int64_t(x.dims.n) * x.dims.c;
    const int H = x.dims.h, W = x.dims.w;
    parallel_for(planes, [&](int64_t plane) {
        const int n = static_cast<int>(plane / x.dims.c);
        const int c = static_cast<int>(plane % x.dims.c);
        const S* src = x.plane(n, c);
        std::vector<std::complex<double>> buf(int64_t(H) * W);
        for (int64_t i = 0; i < int64_t(H) * W; ++i) buf[i] = {static_cast<double>(src[i]), 0.0};
        detail::fft2d_plane(buf, H, W, /*conjugate=*/false);
        S* rp = re.plane(n, c);
        S* ip = im.plane(n, c);
        for (int64_t i = 0; i < int64_t(H) * W; ++i) {
            rp[i] = static_cast<S>(buf[i].real());
            ip[i] = static_cast<S>(buf[i].imag());
        }
    }, grain_for(int64_t(H) * W * 32));
    return {std::move(re), std::move(im)};
}

// --- elementwise helpers used across the engine ---

template <std::floating_point S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    MSAAN_CHECK(a.dims == b.dims, "add: dims mismatch " + a.dims.str() + " vs " + b.dims.str());
    TensorT<S> out(a.dims);
    for (int64_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

namespace detail {

// Broadcast index of `b` matching element i of the full tensor `a`.
// Supported b shapes: same as a, (n,c,1,1), or (1,1,1,1).
template <std::floating_point S>
int64_t bcast_index(const TensorT<S>& a, const TensorT<S>& b, int64_t i) {
    if (a.dims == b.dims) return i;
    if (b.dims.numel() == 1) return 0;
    const int64_t hw = int64_t(a.dims.h) * a.dims.w;
    return i / hw;  // (n,c,1,1)
}

template <std::floating_point S>
void check_bcast(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    const bool ok = a.dims == b.dims || b.dims.numel() == 1 ||
                    (b.dims.n == a.dims.n && b.dims.c == a.dims.c && b.dims.h == 1 && b.dims.w == 1);
    MSAAN_CHECK(ok, std::string(op) + ": cannot broadcast " + b.dims.str() + " onto " + a.dims.str());
}

}  // namespace detail

template <std::floating_point S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_bcast(a, b, "sub");
    TensorT<S> out(a.dims);
    for (int64_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] - b.data[detail::bcast_index(a, b, i)];
    return out;
}

template <std::floating_point S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_bcast(a, b, "mul");
    TensorT<S> out(a.dims);
    for (int64_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] * b.data[detail::bcast_index(a, b, i)];
    return out;
}

template <std::floating_point S>
TensorT<S> scale(const TensorT<S>& a, S factor) {
    TensorT<S> out(a.dims);
    for (int64_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] * factor;
    return out;
}

template <std::floating_point S>
TensorT<S> concat_channels(const std::vector<TensorT<S>>& parts) {
    MSAAN_CHECK(!parts.empty(), "concat_channels: empty input");
    int total_c = 0;
    for (const auto& p : parts) {
        MSAAN_CHECK(p.dims.n == parts[0].dims.n && p.dims.h == parts[0].dims.h && p.dims.w == parts[0].dims.w,
                    "concat_channels: n/h/w mismatch");
        total_c += p.dims.c;
    }
    TensorT<S> out(parts[0].dims.n, total_c, parts[0].dims.h, parts[0].dims.w);
    const int64_t hw = int64_t(out.dims.h) * out.dims.w;
    for (int n = 0; n < out.dims.n; ++n) {
        int co = 0;
        for (const auto& p : parts) {
            for (int c = 0; c < p.dims.c; ++c, ++co)
                std::copy_n(p.plane(n, c), hw, out.plane(n, co));
        }
    }
    return out;
}

// Channels [lo, hi).
template <std::floating_point S>
TensorT<S> slice_channels(const TensorT<S>& x, int lo, int hi) {
    MSAAN_CHECK(0 <= lo && lo < hi && hi <= x.dims.c, "slice_channels: bad range");
    TensorT<S> out(x.dims.n, hi - lo, x.dims.h, x.dims.w);
    const int64_t hw = int64_t(x.dims.h) * x.dims.w;
    for (int n = 0; n < x.dims.n; ++n)
        for (int c = lo; c < hi; ++c) std::copy_n(x.plane(n, c), hw, out.plane(n, c - lo));
    return out;
}

template <std::floating_point S>
TensorT<S> clamp01(const TensorT<S>& x) {
    TensorT<S> out(x.dims);
    for (int64_t i = 0; i < x.numel(); ++i) out.data[i] = std::clamp(x.data[i], S(0), S(1));
    return out;
}

}  // namespace msaan
