#pragma once

#include <span>
#include <vector>

#include "msaan/kernels.hpp"

// Adjoints of the forward kernels: each routine maps the gradient with
// respect to a kernel's output back onto its inputs (and weights, where
// applicable). Shapes follow the forward contracts; validity of the
// argument combination is assumed to have been checked by the forward pass.

namespace msaan {

struct ConvGrads {
    Tensor dx;
    Tensor dkernel;
    std::vector<float> dbias;
};

inline ConvGrads conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& gout, int stride, int pad,
                                 int groups, bool need_dx = true) {
    const int kh = kernel.dims.h, kw = kernel.dims.w;
    const int c_out = kernel.dims.n, c_in_g = kernel.dims.c;
    const int out_per_group = c_out / groups;
    const int oh = gout.dims.h, ow = gout.dims.w;

    ConvGrads g;
    g.dkernel = Tensor(kernel.dims);
    g.dbias.assign(c_out, 0.0f);
    if (need_dx) g.dx = Tensor(x.dims);

    // bias: plain sum over batch and spatial positions
    for (int co = 0; co < c_out; ++co) {
        double acc = 0.0;
        for (int n = 0; n < x.dims.n; ++n) {
            const float* gp = gout.plane(n, co);
            for (int64_t i = 0; i < int64_t(oh) * ow; ++i) acc += gp[i];
        }
        g.dbias[co] = static_cast<float>(acc);
    }

    // weights: dW[co][ci][ky][kx] = sum over n,oy,ox of x * gout
    const int64_t dw_work = int64_t(c_in_g) * kh * kw * x.dims.n * oh * ow;
    parallel_for(c_out, [&](int64_t co64) {
        const int co = static_cast<int>(co64);
        const int grp = co / out_per_group;
        for (int ci = 0; ci < c_in_g; ++ci) {
            float* wk = g.dkernel.plane(co, ci);
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    double acc = 0.0;
                    for (int n = 0; n < x.dims.n; ++n) {
                        const float* src = x.plane(n, grp * c_in_g + ci);
                        const float* gp = gout.plane(n, co);
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= x.dims.h) continue;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= x.dims.w) continue;
                                acc += static_cast<double>(src[int64_t(iy) * x.dims.w + ix]) *
                                       static_cast<double>(gp[int64_t(oy) * ow + ox]);
                            }
                        }
                    }
                    wk[ky * kw + kx] = static_cast<float>(acc);
                }
            }
        }
    }, grain_for(dw_work));

    // input: transpose of the forward tap sweep, one (n, c_in) plane per
    // task with a double accumulator
    if (need_dx) {
        const int H = x.dims.h, W = x.dims.w;
        const int c_in = x.dims.c;
        const int64_t dx_work = int64_t(out_per_group) * oh * ow * kh * kw;
        parallel_for(int64_t(x.dims.n) * c_in, [&](int64_t plane) {
            const int n = static_cast<int>(plane / c_in);
            const int cin = static_cast<int>(plane % c_in);
            const int grp = cin / c_in_g;
            const int ci = cin % c_in_g;
            std::vector<double> acc(int64_t(H) * W, 0.0);
            for (int k = 0; k < out_per_group; ++k) {
                const int co = grp * out_per_group + k;
                const float* gp = gout.plane(n, co);
                const float* wk = kernel.plane(co, ci);
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = static_cast<double>(wk[ky * kw + kx]);
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            int lo = 0, hi = ow;
                            while (lo < hi && lo * stride + kx - pad < 0) ++lo;
                            while (hi > lo && (hi - 1) * stride + kx - pad >= W) --hi;
                            double* arow = acc.data() + int64_t(iy) * W + (lo * stride + kx - pad);
                            const float* grow = gp + int64_t(oy) * ow;
                            if (stride == 1) {
                                for (int ox = lo; ox < hi; ++ox) arow[ox - lo] += wv * static_cast<double>(grow[ox]);
                            } else {
                                for (int ox = lo; ox < hi; ++ox)
                                    arow[int64_t(ox - lo) * stride] += wv * static_cast<double>(grow[ox]);
                            }
                        }
                    }
                }
            }
            float* dst = g.dx.plane(n, cin);
            for (int64_t i = 0; i < int64_t(H) * W; ++i) dst[i] = static_cast<float>(acc[i]);
        }, grain_for(dx_work));
    }
    return g;
}

// Gradient goes to the recorded argmax element of each window.
inline Tensor adaptive_max_pool_backward(const std::vector<int64_t>& argmax, const Tensor& gout, Dims in_dims) {
    Tensor dx(in_dims);
    for (int64_t i = 0; i < gout.numel(); ++i) dx.data[argmax[i]] += gout.data[i];
    return dx;
}

inline Tensor nearest_upsample_backward(const Tensor& gout, Dims in_dims) {
    Tensor dx(in_dims);
    const int64_t planes = int64_t(in_dims.n) * in_dims.c;
    parallel_for(planes, [&](int64_t plane) {
        const int n = static_cast<int>(plane / in_dims.c);
        const int c = static_cast<int>(plane % in_dims.c);
        float* dst = dx.plane(n, c);
        const float* gp = gout.plane(n, c);
        for (int oy = 0; oy < gout.dims.h; ++oy) {
            const int iy = static_cast<int>((int64_t(oy) * in_dims.h) / gout.dims.h);
            for (int ox = 0; ox < gout.dims.w; ++ox) {
                const int ix = static_cast<int>((int64_t(ox) * in_dims.w) / gout.dims.w);
                dst[int64_t(iy) * in_dims.w + ix] += gp[int64_t(oy) * gout.dims.w + ox];
            }
        }
    }, grain_for(int64_t(gout.dims.h) * gout.dims.w));
    return dx;
}

inline Tensor bilinear_resize_backward(const Tensor& gout, Dims in_dims) {
    Tensor dx(in_dims);
    const int64_t planes = int64_t(in_dims.n) * in_dims.c;
    parallel_for(planes, [&](int64_t plane) {
        const int n = static_cast<int>(plane / in_dims.c);
        const int c = static_cast<int>(plane % in_dims.c);
        float* dst = dx.plane(n, c);
        const float* gp = gout.plane(n, c);
        for (int oy = 0; oy < gout.dims.h; ++oy) {
            const double sy = detail::source_coord(oy, in_dims.h, gout.dims.h);
            const int y0 = static_cast<int>(sy);
            const int y1 = std::min(y0 + 1, in_dims.h - 1);
            const double fy = sy - y0;
            for (int ox = 0; ox < gout.dims.w; ++ox) {
                const double sx = detail::source_coord(ox, in_dims.w, gout.dims.w);
                const int x0 = static_cast<int>(sx);
                const int x1 = std::min(x0 + 1, in_dims.w - 1);
                const double fx = sx - x0;
                const float gv = gp[int64_t(oy) * gout.dims.w + ox];
                dst[int64_t(y0) * in_dims.w + x0] += static_cast<float>((1.0 - fy) * (1.0 - fx) * gv);
                dst[int64_t(y0) * in_dims.w + x1] += static_cast<float>((1.0 - fy) * fx * gv);
                dst[int64_t(y1) * in_dims.w + x0] += static_cast<float>(fy * (1.0 - fx) * gv);
                dst[int64_t(y1) * in_dims.w + x1] += static_cast<float>(fy * fx * gv);
            }
        }
    }, grain_for(int64_t(gout.dims.h) * gout.dims.w * 8));
    return dx;
}

inline Tensor bicubic_resize_backward(const Tensor& gout, Dims in_dims) {
    const auto taps_x = detail::bicubic_taps(in_dims.w, gout.dims.w);
    const auto taps_y = detail::bicubic_taps(in_dims.h, gout.dims.h);
    Tensor dx(in_dims);
    const int64_t planes = int64_t(in_dims.n) * in_dims.c;
    parallel_for(planes, [&](int64_t plane) {
        const int n = static_cast<int>(plane / in_dims.c);
        const int c = static_cast<int>(plane % in_dims.c);
        const float* gp = gout.plane(n, c);
        // transpose of the vertical pass
        std::vector<double> tmp(int64_t(in_dims.h) * gout.dims.w, 0.0);
        for (int oy = 0; oy < gout.dims.h; ++oy) {
            const auto& t = taps_y[oy];
            for (int ox = 0; ox < gout.dims.w; ++ox) {
                const double gv = gp[int64_t(oy) * gout.dims.w + ox];
                for (size_t k = 0; k < t.weights.size(); ++k)
                    tmp[int64_t(t.start + k) * gout.dims.w + ox] += t.weights[k] * gv;
            }
        }
        // transpose of the horizontal pass
        float* dst = dx.plane(n, c);
        for (int iy = 0; iy < in_dims.h; ++iy) {
            for (int ox = 0; ox < gout.dims.w; ++ox) {
                const double gv = tmp[int64_t(iy) * gout.dims.w + ox];
                if (gv == 0.0) continue;
                const auto& t = taps_x[ox];
                for (size_t k = 0; k < t.weights.size(); ++k)
                    dst[int64_t(iy) * in_dims.w + t.start + k] += static_cast<float>(t.weights[k] * gv);
            }
        }
    }, grain_for(int64_t(in_dims.h + gout.dims.h) * gout.dims.w * 8));
    return dx;
}

inline Tensor pixel_shuffle_backward(const Tensor& gout, int r) {
    Tensor dx(gout.dims.n, gout.dims.c * r * r, gout.dims.h / r, gout.dims.w / r);
    for (int n = 0; n < gout.dims.n; ++n) {
        for (int c = 0; c < gout.dims.c; ++c) {
            const float* gp = gout.plane(n, c);
            for (int di = 0; di < r; ++di) {
                for (int dj = 0; dj < r; ++dj) {
                    float* dst = dx.plane(n, c * r * r + di * r + dj);
                    for (int i = 0; i < dx.dims.h; ++i)
                        for (int j = 0; j < dx.dims.w; ++j)
                            dst[int64_t(i) * dx.dims.w + j] = gp[int64_t(i * r + di) * gout.dims.w + (j * r + dj)];
                }
            }
        }
    }
    return dx;
}

struct LayerNormGrads {
    Tensor dx;
    std::vector<float> dscale;
    std::vector<float> dshift;
};

inline LayerNormGrads layer_norm_backward(const Tensor& x, std::span<const float> scale, float eps,
                                          const Tensor& gout) {
    const int C = x.dims.c;
    const int64_t hw = int64_t(x.dims.h) * x.dims.w;
    LayerNormGrads g;
    g.dx = Tensor(x.dims);
    g.dscale.assign(C, 0.0f);
    g.dshift.assign(C, 0.0f);
    std::vector<double> dscale(C, 0.0), dshift(C, 0.0);
    std::vector<double> mean(hw), inv(hw), ghat_mean(hw), ghat_xhat_mean(hw);
    for (int n = 0; n < x.dims.n; ++n) {
        std::fill(mean.begin(), mean.end(), 0.0);
        for (int c = 0; c < C; ++c) {
            const float* src = x.plane(n, c);
            for (int64_t p = 0; p < hw; ++p) mean[p] += src[p];
        }
        for (int64_t p = 0; p < hw; ++p) mean[p] /= C;
        std::fill(inv.begin(), inv.end(), 0.0);
        for (int c = 0; c < C; ++c) {
            const float* src = x.plane(n, c);
            for (int64_t p = 0; p < hw; ++p) {
                const double d = src[p] - mean[p];
                inv[p] += d * d;
            }
        }
        for (int64_t p = 0; p < hw; ++p) inv[p] = 1.0 / std::sqrt(inv[p] / C + static_cast<double>(eps));

        std::fill(ghat_mean.begin(), ghat_mean.end(), 0.0);
        std::fill(ghat_xhat_mean.begin(), ghat_xhat_mean.end(), 0.0);
        for (int c = 0; c < C; ++c) {
            const float* src = x.plane(n, c);
            const float* gp = gout.plane(n, c);
            const double sc = scale[c];
            for (int64_t p = 0; p < hw; ++p) {
                const double xhat = (src[p] - mean[p]) * inv[p];
                const double gv = gp[p];
                dscale[c] += gv * xhat;
                dshift[c] += gv;
                ghat_mean[p] += gv * sc;
                ghat_xhat_mean[p] += gv * sc * xhat;
            }
        }
        for (int64_t p = 0; p < hw; ++p) {
            ghat_mean[p] /= C;
            ghat_xhat_mean[p] /= C;
        }
        for (int c = 0; c < C; ++c) {
            const float* src = x.plane(n, c);
            const float* gp = gout.plane(n, c);
            float* dst = g.dx.plane(n, c);
            const double sc = scale[c];
            for (int64_t p = 0; p < hw; ++p) {
                const double xhat = (src[p] - mean[p]) * inv[p];
                dst[p] = static_cast<float>(inv[p] * (double(gp[p]) * sc - ghat_mean[p] - xhat * ghat_xhat_mean[p]));
            }
        }
    }
    for (int c = 0; c < C; ++c) {
        g.dscale[c] = static_cast<float>(dscale[c]);
        g.dshift[c] = static_cast<float>(dshift[c]);
    }
    return g;
}

// d/dx gelu(x) = Phi(x) + x * phi(x)
inline Tensor gelu_backward(const Tensor& x, const Tensor& gout) {
    Tensor dx(x.dims);
    constexpr float inv_sqrt_2pi = 0.39894228f;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float xf = x.data[i];
        const float phi_cdf = 0.5f * (1.0f + std::erf(xf * 0.70710678f));
        const float phi_pdf = inv_sqrt_2pi * std::exp(-0.5f * xf * xf);
        dx.data[i] = (phi_cdf + xf * phi_pdf) * gout.data[i];
    }
    return dx;
}

inline Tensor global_avg_pool_backward(const Tensor& gout, Dims in_dims) {
    Tensor dx(in_dims);
    const int64_t hw = int64_t(in_dims.h) * in_dims.w;
    for (int n = 0; n < in_dims.n; ++n) {
        for (int c = 0; c < in_dims.c; ++c) {
            const float gv = gout.at(n, c, 0, 0) / static_cast<float>(hw);
            float* dst = dx.plane(n, c);
            for (int64_t i = 0; i < hw; ++i) dst[i] += gv;
        }
    }
    return dx;
}

// Transpose of shift5: each group shifts the opposite way (the zero-filled
// border contributes nothing).
inline Tensor shift5_backward(const Tensor& gout) {
    const int gsize = gout.dims.c / 5;
    Tensor dx(gout.dims);
    const int H = gout.dims.h, W = gout.dims.w;
    for (int n = 0; n < gout.dims.n; ++n) {
        for (int c = 0; c < gout.dims.c; ++c) {
            const int dir = c / gsize;
            const float* gp = gout.plane(n, c);
            float* dst = dx.plane(n, c);
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    int sy = y, sx = x;  // position in gout that read from (y,x)
                    switch (dir) {
                        case 0: sx = x - 1; break;
                        case 1: sx = x + 1; break;
                        case 2: sy = y - 1; break;
                        case 3: sy = y + 1; break;
                        default: break;
                    }
                    if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                    dst[int64_t(y) * W + x] = gp[int64_t(sy) * W + sx];
                }
            }
        }
    }
    return dx;
}

}  // namespace msaan
