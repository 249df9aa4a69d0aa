#include <catch2/catch_amalgamated.hpp>

#include "msaan/autograd.hpp"
#include "msaan/gradcheck_suite.hpp"
#include "msaan/optim.hpp"

using namespace msaan;

namespace {

Tensor random_tensor(Rng& rng, Dims d, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(d);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("backward of sum gives all-ones") {
    Rng rng(1);
    Var x = Var::leaf(random_tensor(rng, {2, 3, 4, 4}), true);
    backward(sum_all(x));
    for (float v : x.grad().data) CHECK(v == 1.0f);
}

TEST_CASE("conv kernel gradient counts receptive-field coverage") {
    // constant input, loss = sum(out): dW[tap] = c * (#positions where the
    // tap lands in bounds) = c * (h - |dy|)(w - |dx|) for 3x3 pad 1
    const float c = 0.5f;
    const int h = 5, w = 6;
    Var x = Var::leaf(Tensor::full({1, 1, h, w}, c), false);
    Var k = Var::leaf(Tensor(1, 1, 3, 3), true);
    Var b = Var::leaf(Tensor(1, 1, 1, 1), true);
    backward(sum_all(conv2d(x, k, b, 1, 1, 1)));
    for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
            const int dy = std::abs(ky - 1), dx = std::abs(kx - 1);
            CHECK(k.grad().at(0, 0, ky, kx) == Catch::Approx(c * (h - dy) * (w - dx)).margin(1e-4));
        }
    CHECK(b.grad().data[0] == Catch::Approx(h * w).margin(1e-5));
}

TEST_CASE("grad_check on a quadratic is tight") {
    Rng rng(2);
    std::vector<Tensor> point = {random_tensor(rng, {1, 2, 3, 3})};
    VarFn f = [](const std::vector<Var>& p) { return scale_const(sum_all(mul(p[0], p[0])), 0.5f); };
    RefFn fr = [](const std::vector<TensorT<double>>& p) {
        double acc = 0.0;
        for (double v : p[0].data) acc += 0.5 * v * v;
        return acc;
    };
    const GradCheckReport r = grad_check(f, fr, point, 1e-3, 1e-6);
    CHECK(r.pass);
    CHECK(r.worst <= 1e-6);
}

TEST_CASE("grad_check through gelu") {
    Rng rng(3);
    std::vector<Tensor> point = {random_tensor(rng, {1, 2, 4, 4}, -2.0f, 2.0f)};
    VarFn f = [](const std::vector<Var>& p) { return sum_all(gelu(p[0])); };
    RefFn fr = [](const std::vector<TensorT<double>>& p) {
        double acc = 0.0;
        for (double v : p[0].data) acc += v * 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        return acc;
    };
    CHECK(grad_check(f, fr, point, 1e-3, 1e-3).pass);
}

TEST_CASE("max-pool gradient: unique argmax passes, exact ties are skipped") {
    SECTION("unique argmax") {
        Tensor x({1, 1, 2, 2}, {0.1f, 0.9f, -0.3f, 0.4f});
        VarFn f = [](const std::vector<Var>& p) { return sum_all(adaptive_max_pool(p[0], 1, 1)); };
        RefFn fr = [](const std::vector<TensorT<double>>& p) {
            return *std::max_element(p[0].data.begin(), p[0].data.end());
        };
        const GradCheckReport r = grad_check(f, fr, {x}, 1e-3, 1e-3);
        CHECK(r.pass);
        CHECK(r.skipped == 0);
    }
    SECTION("exact tie routes to the lowest linear index and is excluded from FD") {
        Tensor x({1, 1, 2, 2}, {0.7f, 0.7f, -0.3f, 0.1f});
        Var leaf = Var::leaf(x, true);
        backward(sum_all(adaptive_max_pool(leaf, 1, 1)));
        CHECK(leaf.grad().data[0] == 1.0f);  // first of the tied pair
        CHECK(leaf.grad().data[1] == 0.0f);
        VarFn f = [](const std::vector<Var>& p) { return sum_all(adaptive_max_pool(p[0], 1, 1)); };
        RefFn fr = [](const std::vector<TensorT<double>>& p) {
            return *std::max_element(p[0].data.begin(), p[0].data.end());
        };
        const GradCheckReport r = grad_check(f, fr, {x}, 1e-3, 1e-3);
        CHECK(r.skipped > 0);  // the tied elements are nonsmooth points
        CHECK(r.pass);
    }
}

TEST_CASE("backward is additive across losses") {
    Rng rng(4);
    const Tensor xt = random_tensor(rng, {1, 2, 4, 4});
    const Tensor a = random_tensor(rng, {1, 2, 4, 4});
    const Tensor b = random_tensor(rng, {1, 2, 4, 4});

    const auto grads_of = [&](auto&& make_loss) {
        Var x = Var::leaf(xt, true);
        backward(make_loss(x));
        return x.grad_or_zeros();
    };
    Tensor g_sum = grads_of([&](const Var& x) {
        return add_scalars(l1_loss_node(x, Var::leaf(a, false)), mse_loss_node(x, Var::leaf(b, false)));
    });
    Tensor g1 = grads_of([&](const Var& x) { return l1_loss_node(x, Var::leaf(a, false)); });
    Tensor g2 = grads_of([&](const Var& x) { return mse_loss_node(x, Var::leaf(b, false)); });
    for (int64_t i = 0; i < g_sum.numel(); ++i)
        CHECK(g_sum.data[i] == Catch::Approx(g1.data[i] + g2.data[i]).margin(1e-5));
}

TEST_CASE("gradient accumulation when one value feeds two consumers") {
    Rng rng(5);
    Var x = Var::leaf(random_tensor(rng, {1, 1, 2, 2}), true);
    // loss = sum(x) + sum(x) -> grad = 2
    backward(add_scalars(sum_all(x), sum_all(x)));
    for (float v : x.grad().data) CHECK(v == 2.0f);
}

TEST_CASE("backward rejects non-finite losses") {
    Var x = Var::leaf(Tensor::scalar(std::numeric_limits<float>::infinity()), true);
    CHECK_THROWS_AS(backward(x), NumericError);
}

TEST_CASE("per-kernel finite-difference suite") {
    const GradSuiteReport rep = run_gradcheck_suite(0, 3);
    for (const auto& k : rep.kernels) {
        INFO(k.name << " max rel err " << k.max_rel_err);
        CHECK(k.pass);
    }
    CHECK(rep.pass);
}

TEST_CASE("corrupted adjoints are caught and named") {
    SECTION("kernel corruption") {
        const GradSuiteReport rep = run_gradcheck_suite(0, 1, "conv2d");
        CHECK_FALSE(rep.pass);
        for (const auto& k : rep.kernels) {
            if (k.name == "conv2d") CHECK_FALSE(k.pass);
            else CHECK(k.pass);
        }
    }
    SECTION("model corruption") {
        const GradSuiteReport rep = run_gradcheck_suite(0, 1, "model");
        CHECK_FALSE(rep.pass);
        for (const auto& k : rep.kernels)
            if (k.name == "model_2sfm_c20_x2") CHECK_FALSE(k.pass);
    }
}

TEST_CASE("adam_step") {
    TrainConfig cfg;
    SECTION("zero gradients are a no-op on values") {
        ParamStore store;
        store.add("w", Tensor({1, 1, 1, 3}, {1.0f, -2.0f, 3.0f}));
        const auto before = store.at("w").value.data;
        adam_step(store, 0.1f, cfg);
        CHECK(store.at("w").value.data == before);
        CHECK(store.step() == 1);
    }
    SECTION("single-step closed form") {
        ParamStore store;
        store.add("w", Tensor::scalar(0.0f));
        store.at("w").grad = Tensor::scalar(1.0f);
        adam_step(store, 0.1f, cfg);
        CHECK(store.at("w").value.data[0] == Catch::Approx(-0.1).margin(1e-6));
    }
    SECTION("100 steps on theta^2 converge") {
        ParamStore store;
        store.add("w", Tensor::scalar(1.0f));
        for (int i = 0; i < 100; ++i) {
            store.at("w").grad = Tensor::scalar(2.0f * store.at("w").value.data[0]);
            adam_step(store, 0.1f, cfg);
        }
        CHECK(std::abs(store.at("w").value.data[0]) < 0.1f);
    }
    SECTION("non-finite gradient raises") {
        ParamStore store;
        store.add("w", Tensor::scalar(0.0f));
        store.at("w").grad = Tensor::scalar(std::numeric_limits<float>::quiet_NaN());
        CHECK_THROWS_AS(adam_step(store, 0.1f, cfg), NumericError);
    }
}

TEST_CASE("cosine_lr") {
    TrainConfig cfg;
    cfg.lr_max = 1e-3f;
    cfg.lr_min = 1e-7f;
    cfg.total_steps = 1000;
    CHECK(cosine_lr(0, cfg) == Catch::Approx(1e-3).margin(1e-9));
    CHECK(cosine_lr(1000, cfg) == Catch::Approx(1e-7).margin(1e-12));
    CHECK(cosine_lr(500, cfg) == Catch::Approx((1e-3 + 1e-7) / 2).margin(1e-9));
    float prev = cosine_lr(0, cfg);
    for (int t = 1; t <= 1000; ++t) {
        const float lr = cosine_lr(t, cfg);
        CHECK(lr <= prev);
        prev = lr;
    }
    CHECK_THROWS_AS(cosine_lr(1001, cfg), ContractViolation);
}

TEST_CASE("TrainConfig validation") {
    TrainConfig cfg;
    cfg.lr_min = 2e-3f;  // > lr_max
    CHECK_THROWS_AS(cfg.validate(), ContractViolation);
    cfg = TrainConfig{};
    cfg.beta1 = 1.0f;
    CHECK_THROWS_AS(cfg.validate(), ContractViolation);
    cfg = TrainConfig{};
    cfg.fft_weight = -0.1f;
    CHECK_THROWS_AS(cfg.validate(), ContractViolation);
    CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("ParamStore enforces unique names and dim consistency") {
    ParamStore store;
    store.add("a", Tensor(1, 2, 1, 1));
    CHECK_THROWS_AS(store.add("a", Tensor(1, 2, 1, 1)), ContractViolation);
    CHECK_THROWS_AS(store.at("missing"), ContractViolation);
    CHECK(store.at("a").grad.dims == store.at("a").value.dims);
    CHECK(store.at("a").m.dims == store.at("a").value.dims);
    CHECK(store.step() == 0);
}
