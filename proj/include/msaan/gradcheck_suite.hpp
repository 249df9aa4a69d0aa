#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "msaan/autograd.hpp"
#include "msaan/model.hpp"

// Finite-difference validation of every kernel adjoint plus a small
// end-to-end model. Reference values come from the double-precision kernel
// instantiations, so the checks isolate adjoint bugs from float noise.

namespace msaan {

namespace detail {

inline Tensor rand_tensor(Rng& rng, Dims d, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(d);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Identity forward whose backward multiplies the gradient: a deliberately
// corrupted adjoint for negative-control tests.
inline Var debug_scale_grad(const Var& x, float factor) {
    auto n = make_node(x.value(), {&x});
    if (n->requires_grad) {
        auto xn = x.node();
        n->backprop = [xn, factor](Node& self) { accumulate(*xn, scale(self.grad, factor)); };
    }
    return Var(n);
}

inline double dot_ref(const TensorT<double>& a, const Tensor& weights) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.data[i] * weights.data[i];
    return acc;
}

}  // namespace detail

struct KernelCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    int64_t skipped = 0;
    bool pass = true;
};

struct GradSuiteReport {
    std::vector<KernelCheckResult> kernels;
    bool pass = true;
    double seconds = 0.0;
};

namespace detail {

struct KernelCheckCase {
    std::string name;
    std::vector<Tensor> point;
    // builds the scalar loss; `out_hook` wraps the kernel output (identity in
    // normal runs, gradient corruption in negative controls)
    std::function<Var(const std::vector<Var>&, const std::function<Var(const Var&)>&)> f_var;
    std::function<double(const std::vector<TensorT<double>>&)> f_ref;
};

inline std::vector<KernelCheckCase> make_kernel_cases(uint64_t seed) {
    Rng rng(seed * 1000003 + 17);
    std::vector<KernelCheckCase> cases;

    const auto readout = [](Dims d, Rng& r) { return rand_tensor(r, d); };

    {  // conv2d, 3x3 pad 1 with groups=2, plus bias
        KernelCheckCase c;
        c.name = "conv2d";
        Tensor x = rand_tensor(rng, {2, 4, 6, 5});
        Tensor k = rand_tensor(rng, {6, 2, 3, 3});
        Tensor b = rand_tensor(rng, {1, 6, 1, 1});
        Tensor r = readout({2, 6, 6, 5}, rng);
        c.point = {x, k, b};
        c.f_var = [r](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            Var out = hook(conv2d(p[0], p[1], p[2], 1, 1, 2));
            return sum_all(mul(out, Var::leaf(r, false)));
        };
        c.f_ref = [r](const std::vector<TensorT<double>>& p) {
            return dot_ref(conv2d(p[0], p[1], p[2], 1, 1, 2), r);
        };
        cases.push_back(std::move(c));
    }
    {  // depthwise conv (groups == channels)
        KernelCheckCase c;
        c.name = "depthwise_conv2d";
        Tensor x = rand_tensor(rng, {2, 5, 5, 6});
        Tensor k = rand_tensor(rng, {5, 1, 3, 3});
        Tensor b = rand_tensor(rng, {1, 5, 1, 1});
        Tensor r = readout({2, 5, 5, 6}, rng);
        c.point = {x, k, b};
        c.f_var = [r](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            Var out = hook(conv2d(p[0], p[1], p[2], 1, 1, 5));
            return sum_all(mul(out, Var::leaf(r, false)));
        };
        c.f_ref = [r](const std::vector<TensorT<double>>& p) {
            return dot_ref(conv2d(p[0], p[1], p[2], 1, 1, 5), r);
        };
        cases.push_back(std::move(c));
    }
    {  // adaptive max pool with awkward window sizes
        KernelCheckCase c;
        c.name = "adaptive_max_pool";
        Tensor x = rand_tensor(rng, {1, 3, 7, 6});
        Tensor r = readout({1, 3, 3, 2}, rng);
        c.point = {x};
        c.f_var = [r](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            Var out = hook(adaptive_max_pool(p[0], 3, 2));
            return sum_all(mul(out, Var::leaf(r, false)));
        };
        c.f_ref = [r](const std::vector<TensorT<double>>& p) {
            return dot_ref(adaptive_max_pool(p[0], 3, 2), r);
        };
        cases.push_back(std::move(c));
    }
    {  // nearest upsample
        KernelCheckCase c;
        c.name = "nearest_upsample";
        Tensor x = rand_tensor(rng, {1, 2, 3, 4});
        Tensor r = readout({1, 2, 7, 9}, rng);
        c.point = {x};
        c.f_var = [r](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            return sum_all(mul(hook(nearest_upsample(p[0], 7, 9)), Var::leaf(r, false)));
        };
        c.f_ref = [r](const std::vector<TensorT<double>>& p) { return dot_ref(nearest_upsample(p[0], 7, 9), r); };
        cases.push_back(std::move(c));
    }
    {  // bilinear, both directions
        KernelCheckCase c;
        c.name = "bilinear_resize";
        Tensor x = rand_tensor(rng, {1, 2, 5, 4});
        Tensor r1 = readout({1, 2, 8, 9}, rng);
        Tensor r2 = readout({1, 2, 3, 3}, rng);
        c.point = {x};
        c.f_var = [r1, r2](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            Var up = sum_all(mul(hook(bilinear_resize(p[0], 8, 9)), Var::leaf(r1, false)));
            Var down = sum_all(mul(hook(bilinear_resize(p[0], 3, 3)), Var::leaf(r2, false)));
            return add_scalars(up, down);
        };
        c.f_ref = [r1, r2](const std::vector<TensorT<double>>& p) {
            return dot_ref(bilinear_resize(p[0], 8, 9), r1) + dot_ref(bilinear_resize(p[0], 3, 3), r2);
        };
        cases.push_back(std::move(c));
    }
    {  // bicubic, upscale and antialiased downscale
        KernelCheckCase c;
        c.name = "bicubic_resize";
        Tensor x = rand_tensor(rng, {1, 2, 6, 5});
        Tensor r1 = readout({1, 2, 9, 8}, rng);
        Tensor r2 = readout({1, 2, 2, 3}, rng);
        c.point = {x};
        c.f_var = [r1, r2](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            Var up = sum_all(mul(hook(bicubic_resize(p[0], 9, 8)), Var::leaf(r1, false)));
            Var down = sum_all(mul(hook(bicubic_resize(p[0], 2, 3)), Var::leaf(r2, false)));
            return add_scalars(up, down);
        };
        c.f_ref = [r1, r2](const std::vector<TensorT<double>>& p) {
            return dot_ref(bicubic_resize(p[0], 9, 8), r1) + dot_ref(bicubic_resize(p[0], 2, 3), r2);
        };
        cases.push_back(std::move(c));
    }
    {  // pixel shuffle
        KernelCheckCase c;
        c.name = "pixel_shuffle";
        Tensor x = rand_tensor(rng, {1, 8, 3, 4});
        Tensor r = readout({1, 2, 6, 8}, rng);
        c.point = {x};
        c.f_var = [r](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            return sum_all(mul(hook(pixel_shuffle(p[0], 2)), Var::leaf(r, false)));
        };
        c.f_ref = [r](const std::vector<TensorT<double>>& p) { return dot_ref(pixel_shuffle(p[0], 2), r); };
        cases.push_back(std::move(c));
    }
    {  // layer norm incl. affine params
        KernelCheckCase c;
        c.name = "layer_norm";
        Tensor x = rand_tensor(rng, {2, 6, 3, 3});
        Tensor s = rand_tensor(rng, {1, 6, 1, 1}, 0.5f, 1.5f);
        Tensor b = rand_tensor(rng, {1, 6, 1, 1});
        Tensor r = readout({2, 6, 3, 3}, rng);
        c.point = {x, s, b};
        c.f_var = [r](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            return sum_all(mul(hook(layer_norm(p[0], p[1], p[2], kLayerNormEps)), Var::leaf(r, false)));
        };
        c.f_ref = [r](const std::vector<TensorT<double>>& p) {
            return dot_ref(layer_norm(p[0], p[1], p[2], double(kLayerNormEps)), r);
        };
        cases.push_back(std::move(c));
    }
    {  // gelu
        KernelCheckCase c;
        c.name = "gelu";
        Tensor x = rand_tensor(rng, {2, 3, 4, 4}, -3.0f, 3.0f);
        Tensor r = readout({2, 3, 4, 4}, rng);
        c.point = {x};
        c.f_var = [r](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            return sum_all(mul(hook(gelu(p[0])), Var::leaf(r, false)));
        };
        c.f_ref = [r](const std::vector<TensorT<double>>& p) { return dot_ref(gelu(p[0]), r); };
        cases.push_back(std::move(c));
    }
    {  // global average pool
        KernelCheckCase c;
        c.name = "global_avg_pool";
        Tensor x = rand_tensor(rng, {2, 4, 5, 3});
        Tensor r = readout({2, 4, 1, 1}, rng);
        c.point = {x};
        c.f_var = [r](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            return sum_all(mul(hook(global_avg_pool(p[0])), Var::leaf(r, false)));
        };
        c.f_ref = [r](const std::vector<TensorT<double>>& p) { return dot_ref(global_avg_pool(p[0]), r); };
        cases.push_back(std::move(c));
    }
    {  // shift conv (channel-group shifts + 1x1 conv)
        KernelCheckCase c;
        c.name = "shift_conv";
        Tensor x = rand_tensor(rng, {1, 5, 4, 6});
        Tensor k = rand_tensor(rng, {7, 5, 1, 1});
        Tensor b = rand_tensor(rng, {1, 7, 1, 1});
        Tensor r = readout({1, 7, 4, 6}, rng);
        c.point = {x, k, b};
        c.f_var = [r](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            return sum_all(mul(hook(shift_conv(p[0], p[1], p[2])), Var::leaf(r, false)));
        };
        c.f_ref = [r](const std::vector<TensorT<double>>& p) { return dot_ref(shift_conv(p[0], p[1], p[2]), r); };
        cases.push_back(std::move(c));
    }
    {  // frequency loss (2-D transform + padding + spectrum L1 adjoint)
        KernelCheckCase c;
        c.name = "fft2_loss";
        Tensor a = rand_tensor(rng, {1, 2, 6, 5});
        Tensor b = rand_tensor(rng, {1, 2, 6, 5});
        c.point = {a, b};
        c.f_var = [](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            return hook(fft_loss_node(p[0], p[1]));
        };
        c.f_ref = [](const std::vector<TensorT<double>>& p) {
            return spectrum_abs_mean<double>(sub(p[0], p[1]), nullptr);
        };
        cases.push_back(std::move(c));
    }
    {  // mean absolute difference
        KernelCheckCase c;
        c.name = "l1_loss";
        Tensor a = rand_tensor(rng, {2, 3, 4, 4});
        Tensor b = rand_tensor(rng, {2, 3, 4, 4});
        c.point = {a, b};
        c.f_var = [](const std::vector<Var>& p, const std::function<Var(const Var&)>& hook) {
            return hook(l1_loss_node(p[0], p[1]));
        };
        c.f_ref = [](const std::vector<TensorT<double>>& p) {
            double acc = 0.0;
            for (int64_t i = 0; i < p[0].numel(); ++i) acc += std::abs(p[0].data[i] - p[1].data[i]);
            return acc / p[0].numel();
        };
        cases.push_back(std::move(c));
    }
    return cases;
}

}  // namespace detail

// End-to-end model gradient check: every parameter tensor participates, with
// finite differences on a bounded random sample of elements per tensor.
inline KernelCheckResult model_grad_check(uint64_t seed, int n_blocks = 2, int channels = 20, int scale = 2,
                                          int max_elems_per_tensor = 4, const std::string& corrupt = "") {
    ModelConfig cfg;
    cfg.n_blocks = n_blocks;
    cfg.channels = channels;
    cfg.scale = scale;
    ParamStore store = init_model_weights(cfg, seed);
    Rng rng(seed ^ 0x5eed5eedULL);
    const Tensor input = detail::rand_tensor(rng, {1, 3, 8, 8}, 0.0f, 1.0f);
    const Tensor target = detail::rand_tensor(rng, {1, 3, 8 * scale, 8 * scale}, 0.0f, 1.0f);
    const bool corrupted = corrupt == "model";

    // analytic gradients
    std::vector<std::pair<std::string, Var>> leaves;
    const ModelP<Var> model = bind_model_vars(cfg, store, true, &leaves);
    Var out = model_forward(Var::leaf(input, false), model);
    if (corrupted) out = detail::debug_scale_grad(out, 1.05f);
    backward(mse_loss_node(out, Var::leaf(target, false)));

    const auto f_ref = [&](const std::string& pname, const TensorT<double>& value) {
        const auto m = detail::bind_model_impl(cfg, [&](const std::string& n) {
            if (n == pname) return value;
            return cast<double>(store.at(n).value);
        });
        const TensorT<double> sr = model_forward(cast<double>(input), m);
        double acc = 0.0;
        for (int64_t i = 0; i < sr.numel(); ++i) {
            const double d = sr.data[i] - double(target.data[i]);
            acc += d * d;
        }
        return acc / sr.numel();
    };

    KernelCheckResult result;
    result.name = "model_" + std::to_string(n_blocks) + "sfm_c" + std::to_string(channels) + "_x" +
                  std::to_string(scale);
    const double step = 1e-3, tol = 1e-3;
    for (const auto& [pname, leaf] : leaves) {
        const Tensor analytic = leaf.grad_or_zeros();
        TensorT<double> value = cast<double>(store.at(pname).value);
        double gscale = 0.0;
        for (float v : analytic.data) gscale = std::max(gscale, std::abs(double(v)));

        std::vector<int64_t> elems;
        if (analytic.numel() <= max_elems_per_tensor) {
            for (int64_t e = 0; e < analytic.numel(); ++e) elems.push_back(e);
        } else {
            for (int i = 0; i < max_elems_per_tensor; ++i)
                elems.push_back(rng.below(static_cast<uint32_t>(analytic.numel())));
        }
        for (int64_t e : elems) {
            const double orig = value.data[e];
            double rel = 0.0;
            for (double h = step;; h /= 4.0) {
                value.data[e] = orig + h;
                const double fp = f_ref(pname, value);
                value.data[e] = orig - h;
                const double fm = f_ref(pname, value);
                value.data[e] = orig;
                const double numeric = (fp - fm) / (2.0 * h);
                const double a = analytic.data[e];
                const double denom = std::max({std::abs(a), std::abs(numeric), 0.01 * gscale, 1e-12});
                rel = std::abs(a - numeric) / denom;
                if (rel <= tol || h < step / 1024.0) break;  // shrink past max-pool kinks
            }
            result.max_rel_err = std::max(result.max_rel_err, rel);
        }
    }
    result.pass = result.max_rel_err <= tol;
    return result;
}

// Runs the full suite over [base_seed, base_seed + n_seeds). `corrupt` names
// a component whose adjoint is deliberately scaled, for negative controls.
inline GradSuiteReport run_gradcheck_suite(uint64_t base_seed, int n_seeds, const std::string& corrupt = "") {
    const auto t0 = std::chrono::steady_clock::now();
    GradSuiteReport report;
    std::vector<KernelCheckResult> totals;

    for (int s = 0; s < n_seeds; ++s) {
        const uint64_t seed = base_seed + static_cast<uint64_t>(s);
        auto cases = detail::make_kernel_cases(seed);
        for (size_t i = 0; i < cases.size(); ++i) {
            auto& kc = cases[i];
            const bool corrupted = corrupt == kc.name;
            const auto hook = [corrupted](const Var& v) {
                return corrupted ? detail::debug_scale_grad(v, 1.05f) : v;
            };
            VarFn f = [&](const std::vector<Var>& p) { return kc.f_var(p, hook); };
            const GradCheckReport r = grad_check(f, kc.f_ref, kc.point, 1e-3, 1e-3);
            if (totals.size() <= i) totals.push_back({kc.name, 0.0, 0, true});
            totals[i].max_rel_err = std::max(totals[i].max_rel_err, r.worst);
            totals[i].skipped += r.skipped;
            totals[i].pass = totals[i].pass && r.pass;
        }
        KernelCheckResult m = model_grad_check(seed, 2, 20, 2, 4, corrupt);
        if (totals.size() <= cases.size()) totals.push_back(m);
        else {
            auto& t = totals.back();
            t.max_rel_err = std::max(t.max_rel_err, m.max_rel_err);
            t.pass = t.pass && m.pass;
        }
    }
    report.kernels = std::move(totals);
    for (const auto& k : report.kernels) report.pass = report.pass && k.pass;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace msaan
