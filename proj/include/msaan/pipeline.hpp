#pragma once

#include <utility>
#include <vector>

#include "msaan/image.hpp"
#include "msaan/kernels.hpp"

// Data protocol: bicubic degradation of HR references, paired patch
// sampling, and flip/rotation augmentation.

namespace msaan {

// Aligned HR/LR pair; HR dims are exactly LR dims * scale.
struct ImagePair {
    Image hr;
    Image lr;
    int scale = 0;
};

struct PatchBatch {
    Tensor lr;  // (b, 3, p, p) in [0,1]
    Tensor hr;  // (b, 3, p*scale, p*scale) in [0,1]
};

// BT.601 studio-swing luminance on the 0..255 scale: inputs in [0,1] map to
// [16, 235]. Single-channel input passes through unchanged.
inline float luma_bt601(float r, float g, float b) {
    return 65.481f * r + 128.553f * g + 24.966f * b + 16.0f;
}

inline std::vector<float> rgb_to_y(const Image& img) {
    std::vector<float> y(size_t(img.width) * img.height);
    if (img.channels == 1) {
        for (size_t i = 0; i < y.size(); ++i) y[i] = static_cast<float>(img.data[i]);
        return y;
    }
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j)
            y[size_t(i) * img.width + j] =
                luma_bt601(img.at(i, j, 0) / 255.0f, img.at(i, j, 1) / 255.0f, img.at(i, j, 2) / 255.0f);
    return y;
}

// (n,1,h,w) luminance plane from a [0,1] RGB tensor, still on the 0..255 scale.
inline Tensor rgb_to_y(const Tensor& t) {
    if (t.dims.c == 1) return t;
    MSAAN_CHECK(t.dims.c == 3, "rgb_to_y expects 1 or 3 channels");
    Tensor out(t.dims.n, 1, t.dims.h, t.dims.w);
    const int64_t hw = int64_t(t.dims.h) * t.dims.w;
    for (int n = 0; n < t.dims.n; ++n) {
        const float* r = t.plane(n, 0);
        const float* g = t.plane(n, 1);
        const float* b = t.plane(n, 2);
        float* dst = out.plane(n, 0);
        for (int64_t i = 0; i < hw; ++i) dst[i] = luma_bt601(r[i], g[i], b[i]);
    }
    return out;
}

// Center-crops HR to a multiple of scale, then synthesizes LR by antialiased
// bicubic downscaling with 8-bit re-quantization (round half away from zero).
inline ImagePair degrade_bicubic(const Image& hr, int scale) {
    MSAAN_CHECK(scale >= 2 && scale <= 4, "degradation scale must be 2, 3 or 4");
    MSAAN_CHECK(hr.width >= scale && hr.height >= scale, "image smaller than the scale factor");
    const int cw = hr.width - hr.width % scale;
    const int ch = hr.height - hr.height % scale;
    const int ox = (hr.width - cw) / 2;
    const int oy = (hr.height - ch) / 2;

    Image cropped(cw, ch, hr.channels);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            for (int c = 0; c < hr.channels; ++c) cropped.at(y, x, c) = hr.at(y + oy, x + ox, c);

    const Tensor lr_t = bicubic_resize(image_to_tensor(cropped), ch / scale, cw / scale);
    ImagePair pair;
    pair.hr = std::move(cropped);
    pair.lr = tensor_to_image(lr_t);
    pair.scale = scale;
    return pair;
}

// Uniformly random LR origin; the HR patch sits at origin*scale. Both
// patches come back normalized to [0,1] as (1,c,p,p) tensors.
inline std::pair<Tensor, Tensor> sample_patch_pair(const ImagePair& pair, int p, Rng& rng) {
    MSAAN_CHECK(pair.lr.width >= p && pair.lr.height >= p, "patch larger than the LR image");
    const int oy = static_cast<int>(rng.below(static_cast<uint32_t>(pair.lr.height - p + 1)));
    const int ox = static_cast<int>(rng.below(static_cast<uint32_t>(pair.lr.width - p + 1)));
    const int s = pair.scale;

    Tensor lr(1, pair.lr.channels, p, p);
    for (int c = 0; c < pair.lr.channels; ++c)
        for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x) lr.at(0, c, y, x) = pair.lr.at(oy + y, ox + x, c) / 255.0f;

    Tensor hr(1, pair.hr.channels, p * s, p * s);
    for (int c = 0; c < pair.hr.channels; ++c)
        for (int y = 0; y < p * s; ++y)
            for (int x = 0; x < p * s; ++x) hr.at(0, c, y, x) = pair.hr.at(oy * s + y, ox * s + x, c) / 255.0f;

    return {std::move(lr), std::move(hr)};
}

namespace detail {

inline Tensor hflip(const Tensor& t) {
    Tensor out(t.dims);
    for (int n = 0; n < t.dims.n; ++n)
        for (int c = 0; c < t.dims.c; ++c) {
            const float* src = t.plane(n, c);
            float* dst = out.plane(n, c);
            for (int y = 0; y < t.dims.h; ++y)
                for (int x = 0; x < t.dims.w; ++x)
                    dst[int64_t(y) * t.dims.w + x] = src[int64_t(y) * t.dims.w + (t.dims.w - 1 - x)];
        }
    return out;
}

// 90 degrees counter-clockwise; output dims are (w, h).
inline Tensor rot90(const Tensor& t) {
    Tensor out(t.dims.n, t.dims.c, t.dims.w, t.dims.h);
    for (int n = 0; n < t.dims.n; ++n)
        for (int c = 0; c < t.dims.c; ++c) {
            const float* src = t.plane(n, c);
            float* dst = out.plane(n, c);
            for (int y = 0; y < out.dims.h; ++y)
                for (int x = 0; x < out.dims.w; ++x)
                    dst[int64_t(y) * out.dims.w + x] = src[int64_t(x) * t.dims.w + (t.dims.w - 1 - y)];
        }
    return out;
}

}  // namespace detail

// Identical transform on both patches: horizontal flip with probability 1/2,
// then rotation by k*90 degrees, k uniform in {0,1,2,3}. Patches must be
// square so rotations keep the pairing intact.
inline void augment(Tensor& lr, Tensor& hr, Rng& rng) {
    MSAAN_CHECK(lr.dims.h == lr.dims.w && hr.dims.h == hr.dims.w, "augment requires square patches");
    const bool flip = rng.chance_half();
    const uint32_t quarter_turns = rng.below(4);
    if (flip) {
        lr = detail::hflip(lr);
        hr = detail::hflip(hr);
    }
    for (uint32_t k = 0; k < quarter_turns; ++k) {
        lr = detail::rot90(lr);
        hr = detail::rot90(hr);
    }
}

// Draws, augments and stacks `batch` patch pairs from the given image set.
inline PatchBatch make_batch(const std::vector<ImagePair>& pairs, int patch, int batch, Rng& rng) {
    MSAAN_CHECK(!pairs.empty(), "empty dataset");
    PatchBatch out;
    for (int b = 0; b < batch; ++b) {
        const uint32_t pick = rng.below(static_cast<uint32_t>(pairs.size()));
        auto [lr, hr] = sample_patch_pair(pairs[pick], patch, rng);
        augment(lr, hr, rng);
        if (b == 0) {
            out.lr = Tensor(batch, lr.dims.c, lr.dims.h, lr.dims.w);
            out.hr = Tensor(batch, hr.dims.c, hr.dims.h, hr.dims.w);
        }
        std::copy(lr.data.begin(), lr.data.end(), out.lr.data.begin() + b * lr.numel());
        std::copy(hr.data.begin(), hr.data.end(), out.hr.data.begin() + b * hr.numel());
    }
    return out;
}

}  // namespace msaan
