#pragma once

#include <array>
#include <string>
#include <vector>

#include "msaan/autograd.hpp"
#include "msaan/kernels.hpp"
#include "msaan/optim.hpp"

// The network: shallow feature extraction, a stack of spatial feature mixers
// (local enhancement, global modulation + multi-scale aggregation, gated
// feed-forward), and pixel-shuffle reconstruction over a bilinear skip.
//
// Forward composition is written once, generic over the value type:
//   TensorT<float>  - plain inference
//   TensorT<double> - high-precision reference path (finite differences)
//   Var             - recorded graph for training

namespace msaan {

constexpr float kLayerNormEps = 1e-6f;

struct ModelConfig {
    int n_blocks = 12;
    int channels = 40;
    int scale = 2;
    bool use_leb = true;
    bool use_gfm = true;
    bool use_mfa = true;
    bool use_fg = true;
    int figff_expansion = 2;

    int expanded_channels() const { return figff_expansion * channels; }

    void validate() const {
        MSAAN_CHECK(n_blocks >= 1, "n_blocks must be >= 1");
        MSAAN_CHECK(scale >= 2 && scale <= 4, "scale must be 2, 3 or 4");
        MSAAN_CHECK(figff_expansion >= 1, "figff_expansion must be >= 1");
        MSAAN_CHECK(channels % 4 == 0, "channels must be divisible by 4 (four-way channel split)");
        MSAAN_CHECK(channels % 5 == 0, "channels must be divisible by 5 (shift-conv channel groups)");
        const int e = expanded_channels();
        MSAAN_CHECK(e % 2 == 0, "expanded width must be divisible by 2 (gating split)");
        MSAAN_CHECK((e / 2) % 5 == 0 && e % 5 == 0,
                    "expanded width and its half must be divisible by 5 (shift-conv channel groups)");
    }

    bool operator==(const ModelConfig&) const = default;
};

// --- canonical parameter enumeration ---

enum class ParamInit { ConvKernel, ConvBias, One, Zero };

// Walks every learnable tensor in canonical (checkpoint) order.
// visit(name, dims, init kind, fan_in)
template <typename F>
void for_each_param(const ModelConfig& cfg, F&& visit) {
    const int C = cfg.channels;
    const int E = cfg.expanded_channels();
    const auto conv = [&](const std::string& name, int c_out, int c_in_g, int k, int fan_in) {
        visit(name + ".w", Dims{c_out, c_in_g, k, k}, ParamInit::ConvKernel, fan_in);
        visit(name + ".b", Dims{1, c_out, 1, 1}, ParamInit::ConvBias, fan_in);
    };
    conv("sfem", C, 3, 3, 27);
    for (int i = 0; i < cfg.n_blocks; ++i) {
        const std::string p = "sfm" + std::to_string(i) + ".";
        if (cfg.use_leb) conv(p + "leb.dw", C, 1, 3, 9);
        visit(p + "ln1.scale", Dims{1, C, 1, 1}, ParamInit::One, 0);
        visit(p + "ln1.shift", Dims{1, C, 1, 1}, ParamInit::Zero, 0);
        conv(p + "gfm.proj", C, C, 1, C);
        if (cfg.use_gfm) visit(p + "gfm.gamma", Dims{1, 1, 1, 1}, ParamInit::Zero, 0);
        if (cfg.use_mfa) {
            for (int g = 0; g < 4; ++g) conv(p + "mfa.dw" + std::to_string(g), C / 4, 1, 3, 9);
            conv(p + "mfa.fuse", C, C, 1, C);
            conv(p + "mfa.attn_proj", C, C, 1, C);
        }
        conv(p + "mfa.out", C, C, 1, C);
        visit(p + "ln2.scale", Dims{1, C, 1, 1}, ParamInit::One, 0);
        visit(p + "ln2.shift", Dims{1, C, 1, 1}, ParamInit::Zero, 0);
        conv(p + "figff.sc1", E, C, 1, C);
        if (cfg.use_fg) {
            conv(p + "figff.dw", E / 2, 1, 3, 9);
            conv(p + "figff.sc2", C, E / 2, 1, E / 2);
        } else {
            conv(p + "figff.dw", E, 1, 3, 9);
            conv(p + "figff.sc2", C, E, 1, E);
        }
    }
    conv("irm", 3 * cfg.scale * cfg.scale, C, 3, 9 * C);
}

// Fresh weights: convs uniform in +-sqrt(1/fan_in), layer-norm scale 1 /
// shift 0, modulation gamma 0. Draw order is the canonical parameter order.
inline ParamStore init_model_weights(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ParamStore store;
    Rng rng(seed);
    for_each_param(cfg, [&](const std::string& name, Dims dims, ParamInit kind, int fan_in) {
        Tensor t(dims);
        switch (kind) {
            case ParamInit::ConvKernel:
            case ParamInit::ConvBias: {
                const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
                for (auto& v : t.data) v = rng.uniform(-bound, bound);
                break;
            }
            case ParamInit::One:
                std::fill(t.data.begin(), t.data.end(), 1.0f);
                break;
            case ParamInit::Zero:
                break;
        }
        store.add(name, std::move(t));
    });
    return store;
}

// --- analytic parameter accounting ---

struct ParamCount {
    struct Row {
        std::string component;
        long long params;
    };
    std::vector<Row> rows;
    long long total = 0;
};

inline ParamCount param_count(const ModelConfig& cfg) {
    cfg.validate();
    const long long C = cfg.channels;
    const long long E = cfg.expanded_channels();
    const long long n = cfg.n_blocks;
    const long long r2 = static_cast<long long>(cfg.scale) * cfg.scale;

    const long long sfem = 27 * C + C;
    const long long leb = cfg.use_leb ? 9 * C + C : 0;
    const long long ln = 4 * C;  // two layer norms per block
    const long long gfm = C * C + C + (cfg.use_gfm ? 1 : 0);
    const long long mfa_core = cfg.use_mfa ? 4 * (9 * (C / 4) + C / 4) + 2 * (C * C + C) : 0;
    const long long mfa = mfa_core + (C * C + C);  // output projection always present
    const long long figff = cfg.use_fg ? (C * E + E) + (9 * (E / 2) + E / 2) + ((E / 2) * C + C)
                                       : (C * E + E) + (9 * E + E) + (E * C + C);
    const long long irm = 9 * C * 3 * r2 + 3 * r2;

    ParamCount pc;
    pc.rows = {{"sfem", sfem},          {"sfm.leb", n * leb},   {"sfm.ln", n * ln},
               {"sfm.gfm", n * gfm},    {"sfm.mfa", n * mfa},   {"sfm.figff", n * figff},
               {"irm", irm}};
    for (const auto& row : pc.rows) pc.total += row.params;
    return pc;
}

// --- weight references, generic over the value type ---

template <typename T>
struct ConvP {
    T w;
    T b;
};

template <typename T>
struct SfmP {
    ConvP<T> leb_dw;
    T ln1_scale, ln1_shift;
    ConvP<T> gfm_proj;
    T gfm_gamma;
    std::array<ConvP<T>, 4> mfa_dw;
    ConvP<T> mfa_fuse;
    ConvP<T> mfa_attn;
    ConvP<T> mfa_out;
    T ln2_scale, ln2_shift;
    ConvP<T> figff_sc1, figff_dw, figff_sc2;
};

template <typename T>
struct ModelP {
    ModelConfig cfg;
    ConvP<T> sfem;
    std::vector<SfmP<T>> sfms;
    ConvP<T> irm;
};

namespace detail {

template <typename Getter>
auto bind_model_impl(const ModelConfig& cfg, Getter&& get) {
    using T = decltype(get(std::string()));
    ModelP<T> m;
    m.cfg = cfg;
    m.sfem = {get("sfem.w"), get("sfem.b")};
    for (int i = 0; i < cfg.n_blocks; ++i) {
        const std::string p = "sfm" + std::to_string(i) + ".";
        SfmP<T> s;
        if (cfg.use_leb) s.leb_dw = {get(p + "leb.dw.w"), get(p + "leb.dw.b")};
        s.ln1_scale = get(p + "ln1.scale");
        s.ln1_shift = get(p + "ln1.shift");
        s.gfm_proj = {get(p + "gfm.proj.w"), get(p + "gfm.proj.b")};
        if (cfg.use_gfm) s.gfm_gamma = get(p + "gfm.gamma");
        if (cfg.use_mfa) {
            for (int g = 0; g < 4; ++g)
                s.mfa_dw[g] = {get(p + "mfa.dw" + std::to_string(g) + ".w"), get(p + "mfa.dw" + std::to_string(g) + ".b")};
            s.mfa_fuse = {get(p + "mfa.fuse.w"), get(p + "mfa.fuse.b")};
            s.mfa_attn = {get(p + "mfa.attn_proj.w"), get(p + "mfa.attn_proj.b")};
        }
        s.mfa_out = {get(p + "mfa.out.w"), get(p + "mfa.out.b")};
        s.ln2_scale = get(p + "ln2.scale");
        s.ln2_shift = get(p + "ln2.shift");
        s.figff_sc1 = {get(p + "figff.sc1.w"), get(p + "figff.sc1.b")};
        s.figff_dw = {get(p + "figff.dw.w"), get(p + "figff.dw.b")};
        s.figff_sc2 = {get(p + "figff.sc2.w"), get(p + "figff.sc2.b")};
        m.sfms.push_back(std::move(s));
    }
    m.irm = {get("irm.w"), get("irm.b")};
    return m;
}

}  // namespace detail

template <std::floating_point S>
ModelP<TensorT<S>> bind_model(const ModelConfig& cfg, const ParamStore& store) {
    return detail::bind_model_impl(cfg, [&](const std::string& name) { return cast<S>(store.at(name).value); });
}

// Graph binding for training; `leaves` receives (name, leaf) pairs so the
// gradients can be collected back into the store after backward().
inline ModelP<Var> bind_model_vars(const ModelConfig& cfg, const ParamStore& store, bool requires_grad,
                                   std::vector<std::pair<std::string, Var>>* leaves = nullptr) {
    return detail::bind_model_impl(cfg, [&](const std::string& name) {
        Var v = Var::leaf(store.at(name).value, requires_grad);
        if (leaves) leaves->emplace_back(name, v);
        return v;
    });
}

inline void collect_grads(const std::vector<std::pair<std::string, Var>>& leaves, ParamStore& store) {
    for (const auto& [name, var] : leaves) {
        Tensor g = var.grad_or_zeros();
        store.at(name).grad = std::move(g);
    }
}

// --- adapters so the generic forward reads identically for tensors and Vars ---

template <std::floating_point S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& kernel, const TensorT<S>& bias, int stride, int pad,
                  int groups = 1) {
    return conv2d<S>(x, kernel, std::span<const S>(bias.data), stride, pad, groups);
}

template <std::floating_point S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& scale, const TensorT<S>& shift, double eps) {
    return layer_norm<S>(x, std::span<const S>(scale.data), std::span<const S>(shift.data), static_cast<S>(eps));
}

template <std::floating_point S>
TensorT<S> shift_conv(const TensorT<S>& x, const TensorT<S>& kernel, const TensorT<S>& bias) {
    return shift_conv<S>(x, kernel, std::span<const S>(bias.data));
}

inline Var layer_norm(const Var& x, const Var& scale, const Var& shift, double eps) {
    return layer_norm(x, scale, shift, static_cast<float>(eps));
}

template <std::floating_point S>
const Dims& dims_of(const TensorT<S>& t) {
    return t.dims;
}

inline const Dims& dims_of(const Var& v) { return v.value().dims; }

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

// --- block forwards ---

// Residual 3x3 depthwise filter; identity when disabled.
template <typename T>
T leb_forward(const T& x, const SfmP<T>& w, const ModelConfig& cfg) {
    if (!cfg.use_leb) return x;
    return add(conv2d(x, w.leb_dw.w, w.leb_dw.b, 1, 1, dims_of(x).c), x);
}

// 1x1 projection, then offset each position by gamma times its deviation
// from the channel's spatial mean, then GeLU. With the modulation disabled
// only the projection + GeLU remain.
template <typename T>
T gfm_forward(const T& x, const SfmP<T>& w, const ModelConfig& cfg) {
    T x1 = conv2d(x, w.gfm_proj.w, w.gfm_proj.b, 1, 0, 1);
    if (cfg.use_gfm) {
        T centered = sub(x1, global_avg_pool(x1));
        x1 = add(x1, mul(centered, w.gfm_gamma));
    }
    return gelu(x1);
}

// Four channel groups processed at pyramid scales (max pool down, depthwise,
// nearest back up), fused 1x1, then gated against a projected copy of the
// input. Disabled form is the output projection alone.
template <typename T>
T mfa_forward(const T& m1, const SfmP<T>& w, const ModelConfig& cfg) {
    if (!cfg.use_mfa) return conv2d(m1, w.mfa_out.w, w.mfa_out.b, 1, 0, 1);
    const Dims d = dims_of(m1);
    MSAAN_CHECK(d.c % 4 == 0, "mfa: channels must be divisible by 4");
    const int group = d.c / 4;
    std::vector<T> scales;
    scales.reserve(4);
    for (int i = 0; i < 4; ++i) {
        T part = slice_channels(m1, i * group, (i + 1) * group);
        T pooled = i == 0 ? part : adaptive_max_pool(part, ceil_div(d.h, 1 << i), ceil_div(d.w, 1 << i));
        T feat = conv2d(pooled, w.mfa_dw[i].w, w.mfa_dw[i].b, 1, 1, group);
        scales.push_back(i == 0 ? std::move(feat) : nearest_upsample(feat, d.h, d.w));
    }
    T fused = conv2d(concat_channels(scales), w.mfa_fuse.w, w.mfa_fuse.b, 1, 0, 1);
    T attn = gelu(conv2d(m1, w.mfa_attn.w, w.mfa_attn.b, 1, 0, 1));
    T gated = mul(gelu(fused), attn);
    return conv2d(gated, w.mfa_out.w, w.mfa_out.b, 1, 0, 1);
}

template <typename T>
T msaa_forward(const T& x, const SfmP<T>& w, const ModelConfig& cfg) {
    return mfa_forward(gfm_forward(x, w, cfg), w, cfg);
}

// Shift-conv expansion, split-multiply feature gate, shift-conv back down.
// Without the gate, the full width runs through the depthwise refinement.
template <typename T>
T figff_forward(const T& x, const SfmP<T>& w, const ModelConfig& cfg) {
    T z = gelu(shift_conv(x, w.figff_sc1.w, w.figff_sc1.b));
    const int e = dims_of(z).c;
    if (cfg.use_fg) {
        T z1 = slice_channels(z, 0, e / 2);
        T z2 = slice_channels(z, e / 2, e);
        T gated = mul(conv2d(z2, w.figff_dw.w, w.figff_dw.b, 1, 1, e / 2), z1);
        return shift_conv(gated, w.figff_sc2.w, w.figff_sc2.b);
    }
    T refined = conv2d(z, w.figff_dw.w, w.figff_dw.b, 1, 1, e);
    return shift_conv(refined, w.figff_sc2.w, w.figff_sc2.b);
}

template <typename T>
T sfm_forward(const T& x, const SfmP<T>& w, const ModelConfig& cfg) {
    T z1 = leb_forward(x, w, cfg);
    T z2 = add(msaa_forward(layer_norm(z1, w.ln1_scale, w.ln1_shift, kLayerNormEps), w, cfg), z1);
    return add(figff_forward(layer_norm(z2, w.ln2_scale, w.ln2_shift, kLayerNormEps), w, cfg), z2);
}

// Full network: shallow conv, SFM stack with global residual, pixel-shuffle
// reconstruction plus the bilinear skip.
template <typename T>
T model_forward(const T& i_lr, const ModelP<T>& m) {
    MSAAN_CHECK(dims_of(i_lr).c == 3, "model input must have 3 channels");
    T f0 = conv2d(i_lr, m.sfem.w, m.sfem.b, 1, 1, 1);
    T f = f0;
    for (const auto& sfm : m.sfms) f = sfm_forward(f, sfm, m.cfg);
    T fdf = add(f, f0);
    T up = pixel_shuffle(conv2d(fdf, m.irm.w, m.irm.b, 1, 1, 1), m.cfg.scale);
    const Dims d = dims_of(i_lr);
    return add(up, bilinear_resize(i_lr, d.h * m.cfg.scale, d.w * m.cfg.scale));
}

// Plain float inference from a parameter store.
inline Tensor model_forward_tensor(const ModelConfig& cfg, const ParamStore& store, const Tensor& i_lr) {
    return model_forward(i_lr, bind_model<float>(cfg, store));
}

}  // namespace msaan
