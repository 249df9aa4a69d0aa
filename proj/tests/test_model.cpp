#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "msaan/gradcheck_suite.hpp"
#include "msaan/model.hpp"
#include "reference.hpp"

using namespace msaan;

namespace {

Tensor random_tensor(Rng& rng, Dims d, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(d);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

ModelConfig tiny_cfg(int blocks = 1, int channels = 20, int scale = 2) {
    ModelConfig cfg;
    cfg.n_blocks = blocks;
    cfg.channels = channels;
    cfg.scale = scale;
    return cfg;
}

void zero_param(ParamStore& store, const std::string& name) {
    auto& t = store.at(name).value;
    std::fill(t.data.begin(), t.data.end(), 0.0f);
}

}  // namespace

TEST_CASE("ModelConfig validation names the violated constraint") {
    ModelConfig cfg = tiny_cfg();
    CHECK_NOTHROW(cfg.validate());
    cfg.channels = 16;  // divisible by 4 but not by 5
    CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("divisible by 5"));
    cfg.channels = 30;  // divisible by 5 but not by 4
    CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("divisible by 4"));
    cfg.channels = 40;
    cfg.scale = 5;
    CHECK_THROWS_AS(cfg.validate(), ContractViolation);
}

TEST_CASE("leb: residual depthwise behaviour") {
    ModelConfig cfg = tiny_cfg();
    ParamStore store = init_model_weights(cfg, 0);
    Rng rng(1);
    Tensor x = random_tensor(rng, {1, 20, 5, 5});
    auto m = bind_model<float>(cfg, store);

    SECTION("zero weights give the identity") {
        zero_param(store, "sfm0.leb.dw.w");
        zero_param(store, "sfm0.leb.dw.b");
        m = bind_model<float>(cfg, store);
        Tensor y = leb_forward(x, m.sfms[0], cfg);
        CHECK(std::equal(x.data.begin(), x.data.end(), y.data.begin()));
    }
    SECTION("center-delta kernel doubles the input") {
        auto& k = store.at("sfm0.leb.dw.w").value;
        std::fill(k.data.begin(), k.data.end(), 0.0f);
        for (int c = 0; c < 20; ++c) k.at(c, 0, 1, 1) = 1.0f;
        zero_param(store, "sfm0.leb.dw.b");
        m = bind_model<float>(cfg, store);
        Tensor y = leb_forward(x, m.sfms[0], cfg);
        for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data[i] == Catch::Approx(2.0f * x.data[i]).margin(1e-6));
    }
    SECTION("disabled block is the identity with zero parameters") {
        ModelConfig off = cfg;
        off.use_leb = false;
        ParamStore s2 = init_model_weights(off, 0);
        auto m2 = bind_model<float>(off, s2);
        Tensor y = leb_forward(x, m2.sfms[0], off);
        CHECK(std::equal(x.data.begin(), x.data.end(), y.data.begin()));
    }
    SECTION("per-block parameter cost at c=40 is 400") {
        ModelConfig c40 = tiny_cfg(1, 40);
        ModelConfig c40_off = c40;
        c40_off.use_leb = false;
        CHECK(param_count(c40).total - param_count(c40_off).total == 400);
    }
}

TEST_CASE("gfm: differential modulation") {
    ModelConfig cfg = tiny_cfg();
    ParamStore store = init_model_weights(cfg, 42);
    Rng rng(2);
    Tensor x = random_tensor(rng, {2, 20, 4, 4});

    SECTION("freshly initialized gamma collapses to conv+gelu, exactly") {
        auto m = bind_model<float>(cfg, store);
        Tensor y = gfm_forward(x, m.sfms[0], cfg);
        // same projection weights, no gamma term
        Tensor want = gelu(conv2d(x, m.sfms[0].gfm_proj.w, m.sfms[0].gfm_proj.b, 1, 0, 1));
        CHECK(std::memcmp(y.data.data(), want.data.data(), y.numel() * sizeof(float)) == 0);
    }
    SECTION("spatially constant projection output kills the difference term for any gamma") {
        store.at("sfm0.gfm.gamma").value.data[0] = 1.7f;
        auto m = bind_model<float>(cfg, store);
        Tensor xc = Tensor::full({1, 20, 3, 3}, 0.25f);  // constant input -> constant projection
        Tensor y = gfm_forward(xc, m.sfms[0], cfg);
        Tensor want = gelu(conv2d(xc, m.sfms[0].gfm_proj.w, m.sfms[0].gfm_proj.b, 1, 0, 1));
        for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.data[i] == Catch::Approx(want.data[i]).margin(1e-6));
    }
    SECTION("gamma=0.5 matches a per-element scalar reference") {
        store.at("sfm0.gfm.gamma").value.data[0] = 0.5f;
        auto m = bind_model<float>(cfg, store);
        Tensor y = gfm_forward(x, m.sfms[0], cfg);
        // reference: x1 + 0.5*(x1 - mean(x1)) then gelu, all in double
        auto x1 = ref::conv2d(ref::to_double(x), ref::to_double(store.at("sfm0.gfm.proj.w").value),
                              std::vector<double>(store.at("sfm0.gfm.proj.b").value.data.begin(),
                                                  store.at("sfm0.gfm.proj.b").value.data.end()),
                              1, 0, 1);
        const int64_t hw = 16;
        for (int n = 0; n < 2; ++n)
            for (int c = 0; c < 20; ++c) {
                double mean = 0;
                for (int64_t p = 0; p < hw; ++p) mean += x1.plane(n, c)[p];
                mean /= hw;
                for (int64_t p = 0; p < hw; ++p) {
                    const double v = x1.plane(n, c)[p];
                    const double want = ref::gelu(v + 0.5 * (v - mean));
                    CHECK(y.plane(n, c)[p] == Catch::Approx(want).margin(1e-5));
                }
            }
    }
}

TEST_CASE("mfa: multi-scale aggregation") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(3);

    SECTION("1x1 spatial input reduces to channel algebra, matches the reference") {
        ParamStore store = init_model_weights(cfg, 7);
        auto m = bind_model<float>(cfg, store);
        Tensor x = random_tensor(rng, {1, 20, 1, 1});
        Tensor y = mfa_forward(x, m.sfms[0], cfg);
        ref::MfaRefWeights w;
        for (int i = 0; i < 4; ++i) {
            w.dw[i] = ref::to_double(store.at("sfm0.mfa.dw" + std::to_string(i) + ".w").value);
            const auto& b = store.at("sfm0.mfa.dw" + std::to_string(i) + ".b").value.data;
            w.dwb[i].assign(b.begin(), b.end());
        }
        w.fuse = ref::to_double(store.at("sfm0.mfa.fuse.w").value);
        w.fuseb.assign(store.at("sfm0.mfa.fuse.b").value.data.begin(), store.at("sfm0.mfa.fuse.b").value.data.end());
        w.attn = ref::to_double(store.at("sfm0.mfa.attn_proj.w").value);
        w.attnb.assign(store.at("sfm0.mfa.attn_proj.b").value.data.begin(),
                       store.at("sfm0.mfa.attn_proj.b").value.data.end());
        w.out = ref::to_double(store.at("sfm0.mfa.out.w").value);
        w.outb.assign(store.at("sfm0.mfa.out.b").value.data.begin(), store.at("sfm0.mfa.out.b").value.data.end());
        CHECK(ref::max_abs_diff(y, ref::mfa(ref::to_double(x), w)) <= 1e-5);
    }
    SECTION("zero pyramid weights leave only the output bias") {
        ParamStore store = init_model_weights(cfg, 8);
        for (int i = 0; i < 4; ++i) {
            zero_param(store, "sfm0.mfa.dw" + std::to_string(i) + ".w");
            zero_param(store, "sfm0.mfa.dw" + std::to_string(i) + ".b");
        }
        zero_param(store, "sfm0.mfa.fuse.w");
        zero_param(store, "sfm0.mfa.fuse.b");
        auto m = bind_model<float>(cfg, store);
        Tensor x = Tensor::full({1, 20, 4, 4}, 0.3f);
        Tensor y = mfa_forward(x, m.sfms[0], cfg);
        // gated product = gelu(0) * attn = 0, so out = bias
        const auto& bias = store.at("sfm0.mfa.out.b").value;
        for (int c = 0; c < 20; ++c)
            for (int p = 0; p < 16; ++p) CHECK(y.plane(0, c)[p] == Catch::Approx(bias.data[c]).margin(1e-6));
    }
    SECTION("random input matches the straight-line reference") {
        ParamStore store = init_model_weights(cfg, 9);
        // reuse c=20 to keep groups=5 channels each (divisible by 4)
        auto m = bind_model<float>(cfg, store);
        Tensor x = random_tensor(rng, {1, 20, 8, 8});
        Tensor y = mfa_forward(x, m.sfms[0], cfg);
        ref::MfaRefWeights w;
        for (int i = 0; i < 4; ++i) {
            w.dw[i] = ref::to_double(store.at("sfm0.mfa.dw" + std::to_string(i) + ".w").value);
            const auto& b = store.at("sfm0.mfa.dw" + std::to_string(i) + ".b").value.data;
            w.dwb[i].assign(b.begin(), b.end());
        }
        w.fuse = ref::to_double(store.at("sfm0.mfa.fuse.w").value);
        w.fuseb.assign(store.at("sfm0.mfa.fuse.b").value.data.begin(), store.at("sfm0.mfa.fuse.b").value.data.end());
        w.attn = ref::to_double(store.at("sfm0.mfa.attn_proj.w").value);
        w.attnb.assign(store.at("sfm0.mfa.attn_proj.b").value.data.begin(),
                       store.at("sfm0.mfa.attn_proj.b").value.data.end());
        w.out = ref::to_double(store.at("sfm0.mfa.out.w").value);
        w.outb.assign(store.at("sfm0.mfa.out.b").value.data.begin(), store.at("sfm0.mfa.out.b").value.data.end());
        CHECK(ref::max_abs_diff(y, ref::mfa(ref::to_double(x), w)) <= 1e-5);
    }
}

TEST_CASE("msaa composition and ablations") {
    Rng rng(4);
    SECTION("disabling both parts leaves two 1x1 convs with a gelu between") {
        ModelConfig off = tiny_cfg();
        off.use_gfm = off.use_mfa = false;
        ParamStore store = init_model_weights(off, 5);
        auto m = bind_model<float>(off, store);
        Tensor x = random_tensor(rng, {1, 20, 4, 4});
        Tensor y = msaa_forward(x, m.sfms[0], off);
        Tensor want = conv2d(gelu(conv2d(x, m.sfms[0].gfm_proj.w, m.sfms[0].gfm_proj.b, 1, 0, 1)),
                             m.sfms[0].mfa_out.w, m.sfms[0].mfa_out.b, 1, 0, 1);
        CHECK(std::memcmp(y.data.data(), want.data.data(), y.numel() * sizeof(float)) == 0);

        // parameter drop: the pyramid depthwise stack, the fuse and the
        // attention projection
        const long long C = 20;
        const long long drop = param_count(tiny_cfg()).total - param_count([&] {
                                   ModelConfig c = tiny_cfg();
                                   c.use_mfa = false;
                                   return c;
                               }()).total;
        CHECK(drop == 4 * (9 * (C / 4) + C / 4) + 2 * (C * C + C));
    }
    SECTION("fresh gamma makes msaa == mfa(gelu(conv))") {
        ModelConfig cfg = tiny_cfg();
        ParamStore store = init_model_weights(cfg, 6);
        auto m = bind_model<float>(cfg, store);
        Tensor x = random_tensor(rng, {1, 20, 5, 5});
        Tensor y = msaa_forward(x, m.sfms[0], cfg);
        Tensor want = mfa_forward(gelu(conv2d(x, m.sfms[0].gfm_proj.w, m.sfms[0].gfm_proj.b, 1, 0, 1)),
                                  m.sfms[0], cfg);
        CHECK(std::memcmp(y.data.data(), want.data.data(), y.numel() * sizeof(float)) == 0);
    }
    SECTION("shape preservation for h,w in [1,17]") {
        ModelConfig cfg = tiny_cfg();
        ParamStore store = init_model_weights(cfg, 7);
        auto m = bind_model<float>(cfg, store);
        for (int h = 1; h <= 17; h += 4)
            for (int w : {1, 2, 5, 13, 17}) {
                Tensor x = random_tensor(rng, {1, 20, h, w});
                CHECK(msaa_forward(x, m.sfms[0], cfg).dims == x.dims);
            }
    }
}

TEST_CASE("figff: gated feed-forward") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(5);
    SECTION("zero gate-path weights leave only the output shift-conv bias") {
        ParamStore store = init_model_weights(cfg, 10);
        zero_param(store, "sfm0.figff.dw.w");
        zero_param(store, "sfm0.figff.dw.b");
        auto m = bind_model<float>(cfg, store);
        Tensor x = random_tensor(rng, {1, 20, 4, 4});
        Tensor y = figff_forward(x, m.sfms[0], cfg);
        const auto& bias = store.at("sfm0.figff.sc2.b").value;
        for (int c = 0; c < 20; ++c)
            for (int p = 0; p < 16; ++p) CHECK(y.plane(0, c)[p] == Catch::Approx(bias.data[c]).margin(1e-6));
    }
    SECTION("center-delta gate kernel leaves the pure product") {
        ParamStore store = init_model_weights(cfg, 11);
        auto& k = store.at("sfm0.figff.dw.w").value;
        std::fill(k.data.begin(), k.data.end(), 0.0f);
        for (int c = 0; c < k.dims.n; ++c) k.at(c, 0, 1, 1) = 1.0f;
        zero_param(store, "sfm0.figff.dw.b");
        auto m = bind_model<float>(cfg, store);
        Tensor x = random_tensor(rng, {1, 20, 4, 4});
        Tensor z = gelu(shift_conv(x, m.sfms[0].figff_sc1.w, m.sfms[0].figff_sc1.b));
        const int e = z.dims.c;
        Tensor want = shift_conv(mul(slice_channels(z, e / 2, e), slice_channels(z, 0, e / 2)),
                                 m.sfms[0].figff_sc2.w, m.sfms[0].figff_sc2.b);
        Tensor y = figff_forward(x, m.sfms[0], cfg);
        for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.data[i] == Catch::Approx(want.data[i]).margin(1e-6));
    }
    SECTION("removing the gate increases the parameter count") {
        ModelConfig off = cfg;
        off.use_fg = false;
        CHECK(param_count(off).total > param_count(cfg).total);
    }
}

TEST_CASE("sfm: residual stack") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(6);
    SECTION("all-zero weights with zero norm scale give the identity") {
        ParamStore store = init_model_weights(cfg, 12);
        for (auto& e : store.entries()) std::fill(e.value.data.begin(), e.value.data.end(), 0.0f);
        auto m = bind_model<float>(cfg, store);
        Tensor x = random_tensor(rng, {1, 20, 5, 5});
        Tensor y = sfm_forward(x, m.sfms[0], cfg);
        for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data[i] == Catch::Approx(x.data[i]).margin(1e-6));
    }
    SECTION("dims preserved across odd sizes") {
        ParamStore store = init_model_weights(cfg, 13);
        auto m = bind_model<float>(cfg, store);
        for (int h : {1, 3, 7, 11, 17})
            for (int w : {2, 5, 17}) {
                Tensor x = random_tensor(rng, {1, 20, h, w});
                CHECK(sfm_forward(x, m.sfms[0], cfg).dims == x.dims);
            }
    }
    SECTION("single-block end-to-end gradient check") {
        const KernelCheckResult r = model_grad_check(/*seed=*/0, /*n_blocks=*/1);
        INFO("max rel err " << r.max_rel_err);
        CHECK(r.pass);
    }
}

TEST_CASE("model_forward") {
    Rng rng(7);
    SECTION("zero reconstruction weights reduce to bilinear upsampling, exactly") {
        ModelConfig cfg = tiny_cfg(2, 20, 3);
        ParamStore store = init_model_weights(cfg, 14);
        zero_param(store, "irm.w");
        zero_param(store, "irm.b");
        Tensor x = random_tensor(rng, {1, 3, 6, 7}, 0.0f, 1.0f);
        Tensor y = model_forward_tensor(cfg, store, x);
        Tensor want = bilinear_resize<float>(x, 18, 21);
        CHECK(std::memcmp(y.data.data(), want.data.data(), y.numel() * sizeof(float)) == 0);
    }
    SECTION("shape contract at scale 4") {
        ModelConfig cfg = tiny_cfg(1, 20, 4);
        ParamStore store = init_model_weights(cfg, 15);
        Tensor x = random_tensor(rng, {1, 3, 17, 13}, 0.0f, 1.0f);
        CHECK(model_forward_tensor(cfg, store, x).dims == Dims{1, 3, 68, 52});
    }
    SECTION("light configuration constructs and keeps 40 channels everywhere") {
        ModelConfig light;
        light.n_blocks = 12;
        light.channels = 40;
        light.scale = 2;
        ParamStore store = init_model_weights(light, 16);
        for (int i = 0; i < 12; ++i) {
            CHECK(store.at("sfm" + std::to_string(i) + ".gfm.proj.w").value.dims == Dims{40, 40, 1, 1});
            CHECK(store.at("sfm" + std::to_string(i) + ".mfa.out.w").value.dims == Dims{40, 40, 1, 1});
        }
        Tensor x = random_tensor(rng, {1, 3, 8, 8}, 0.0f, 1.0f);
        CHECK(model_forward_tensor(light, store, x).dims == Dims{1, 3, 16, 16});
    }
    SECTION("rejects non-RGB input") {
        ModelConfig cfg = tiny_cfg();
        ParamStore store = init_model_weights(cfg, 17);
        CHECK_THROWS_AS(model_forward_tensor(cfg, store, Tensor(1, 4, 8, 8)), ContractViolation);
    }
}

TEST_CASE("param_count: analytic equals instantiated for all 16 ablation combinations") {
    for (int mask = 0; mask < 16; ++mask) {
        ModelConfig cfg = tiny_cfg(3, 20, 2);
        cfg.use_leb = mask & 1;
        cfg.use_gfm = mask & 2;
        cfg.use_mfa = mask & 4;
        cfg.use_fg = mask & 8;
        ParamStore store = init_model_weights(cfg, 0);
        INFO("mask " << mask);
        CHECK(param_count(cfg).total == store.total_params());
    }
}

TEST_CASE("param_count: breakdown sums to total; direction of each toggle") {
    ModelConfig light;
    light.n_blocks = 12;
    light.channels = 40;
    const ParamCount pc = param_count(light);
    long long sum = 0;
    for (const auto& row : pc.rows) sum += row.params;
    CHECK(sum == pc.total);

    ModelConfig standard;
    standard.n_blocks = 24;
    standard.channels = 60;
    CHECK(param_count(standard).total > param_count(light).total);

    for (const char* component : {"leb", "gfm", "mfa"}) {
        ModelConfig off = light;
        if (std::string(component) == "leb") off.use_leb = false;
        if (std::string(component) == "gfm") off.use_gfm = false;
        if (std::string(component) == "mfa") off.use_mfa = false;
        INFO(component);
        CHECK(param_count(off).total < pc.total);
    }
    ModelConfig fg_off = light;
    fg_off.use_fg = false;
    CHECK(param_count(fg_off).total > pc.total);
}
